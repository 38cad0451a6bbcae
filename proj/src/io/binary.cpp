#include "relpool/io/binary.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "relpool/errors.hpp"

namespace relpool::io {

static_assert(std::endian::native == std::endian::little,
              "binary format writer assumes a little-endian host");

namespace {
constexpr std::uint8_t kMagic[4] = {'R', 'L', 'P', 'L'};
constexpr std::size_t kHeaderSize = 4 + 4 + 4 + 8 + 8;
}  // namespace

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void Writer::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void Writer::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void Writer::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void Writer::str(std::string_view s) {
  u64(s.size());
  buf_.insert(buf_.end(), s.begin(), s.end());
}

void Writer::vec(std::span<const double> v) {
  u64(v.size());
  for (double x : v) f64(x);
}

void Writer::mat(const Matrix& m) {
  u64(m.rows());
  u64(m.cols());
  for (double x : m.flat()) f64(x);
}

void Writer::bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }

void Reader::need(std::size_t n) const {
  if (data_.size() - pos_ < n) {
    throw ParseError("binary blob truncated at byte " + std::to_string(pos_) + " (need " +
                     std::to_string(n) + " more)");
  }
}

std::uint8_t Reader::u8() {
  need(1);
  return data_[pos_++];
}

std::uint32_t Reader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t Reader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 8;
  return v;
}

double Reader::f64() { return std::bit_cast<double>(u64()); }

std::string Reader::str() {
  const std::uint64_t n = u64();
  need(n);
  std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
  pos_ += n;
  return s;
}

Vector Reader::vec() {
  const std::uint64_t n = u64();
  need(n * 8);
  Vector v(n);
  for (auto& x : v) x = f64();
  return v;
}

Matrix Reader::mat() {
  const std::uint64_t r = u64();
  const std::uint64_t c = u64();
  need(r * c * 8);
  std::vector<double> d(r * c);
  for (auto& x : d) x = f64();
  return Matrix(r, c, std::move(d));
}

std::span<const std::uint8_t> Reader::bytes(std::size_t n) {
  need(n);
  auto s = data_.subspan(pos_, n);
  pos_ += n;
  return s;
}

std::vector<std::uint8_t> wrap(BlobKind kind, std::span<const std::uint8_t> payload) {
  Writer w;
  w.bytes(kMagic);
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(kind));
  w.u64(payload.size());
  w.u64(fnv1a64(payload));
  w.bytes(payload);
  return w.take();
}

std::vector<std::uint8_t> unwrap(BlobKind kind, std::span<const std::uint8_t> blob) {
  if (blob.size() < kHeaderSize || std::memcmp(blob.data(), kMagic, 4) != 0) {
    throw ParseError("not a relpool binary file (bad magic)");
  }
  Reader r(blob.subspan(4));
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion) {
    throw ParseError("unsupported format version " + std::to_string(version));
  }
  const std::uint32_t k = r.u32();
  if (k != static_cast<std::uint32_t>(kind)) {
    throw ParseError("blob kind " + std::to_string(k) + " != expected " +
                     std::to_string(static_cast<std::uint32_t>(kind)));
  }
  const std::uint64_t len = r.u64();
  const std::uint64_t sum = r.u64();
  if (r.remaining() != len) throw ParseError("payload length mismatch");
  auto payload = r.bytes(len);
  if (fnv1a64(payload) != sum) throw ParseError("payload checksum mismatch");
  return {payload.begin(), payload.end()};
}

void write_file(const std::filesystem::path& path, BlobKind kind,
                std::span<const std::uint8_t> payload) {
  const auto blob = wrap(kind, payload);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path, BlobKind kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open: " + path.string());
  std::vector<std::uint8_t> blob((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  return unwrap(kind, blob);
}

}  // namespace relpool::io
