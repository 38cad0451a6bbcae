#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace relpool {

using TokenId = std::uint32_t;
using RelationId = std::uint32_t;

/// Reserved ids at the bottom of every vocabulary.
namespace special {
inline constexpr TokenId kSentinel = 0;  // sequence start; pooled into q(x)
inline constexpr TokenId kE1Open = 1;
inline constexpr TokenId kE1Close = 2;
inline constexpr TokenId kE2Open = 3;
inline constexpr TokenId kE2Close = 4;
inline constexpr TokenId kCount = 5;
}  // namespace special

/// Half-open token range [start, end).
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;
  bool operator==(const Span&) const = default;
};

/// One classification instance: token ids with two marked entity spans.
/// Each span covers its opening marker through its closing marker, so
/// span.start is the marker position whose hidden state represents the entity.
struct TokenSequence {
  std::vector<TokenId> tokens;
  Span e1;
  Span e2;
  RelationId label = 0;

  bool operator==(const TokenSequence&) const = default;
};

/// Spans non-empty, inside the sequence and non-overlapping.
bool spans_valid(const TokenSequence& x);

}  // namespace relpool
