// Versioned little-endian container shared by every persisted artifact.
//
// Layout (all integers little-endian):
//   bytes 0..3   magic "RLPL"
//   u32          format version (kFormatVersion)
//   u32          payload kind (BlobKind)
//   u64          payload length in bytes
//   u64          FNV-1a 64 checksum of the payload
//   payload
// Doubles are stored as their IEEE-754 bit pattern, little-endian.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "relpool/numeric/matrix.hpp"

namespace relpool::io {

inline constexpr std::uint32_t kFormatVersion = 1;

enum class BlobKind : std::uint32_t {
  kEncoder = 1,
  kPromptPool = 2,
  kGaussianStore = 3,
  kHead = 4,
  kContinualState = 5,
};

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void str(std::string_view s);
  void vec(std::span<const double> v);
  void mat(const Matrix& m);
  void bytes(std::span<const std::uint8_t> b);

  const std::vector<std::uint8_t>& buffer() const { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

/// Throws ParseError on truncation.
class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string str();
  Vector vec();
  Matrix mat();
  std::span<const std::uint8_t> bytes(std::size_t n);

  bool at_end() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const;
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

/// Header + payload in memory.
std::vector<std::uint8_t> wrap(BlobKind kind, std::span<const std::uint8_t> payload);
/// Validates magic, version, kind, length and checksum; returns the payload.
std::vector<std::uint8_t> unwrap(BlobKind kind, std::span<const std::uint8_t> blob);

void write_file(const std::filesystem::path& path, BlobKind kind,
                std::span<const std::uint8_t> payload);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path, BlobKind kind);

}  // namespace relpool::io
