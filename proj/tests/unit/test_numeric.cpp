#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>

#include "doctest.h"

#include "relpool/errors.hpp"
#include "relpool/io/binary.hpp"
#include "relpool/numeric/linalg.hpp"
#include "relpool/numeric/matrix.hpp"
#include "relpool/numeric/ops.hpp"
#include "relpool/numeric/optim.hpp"
#include "relpool/numeric/rng.hpp"

using namespace relpool;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.flat()) v = rng.normal();
  return m;
}

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double s = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += static_cast<long double>(a(i, k)) * b(k, j);
      c(i, j) = static_cast<double>(s);
    }
  return c;
}

}  // namespace

TEST_CASE("matmul variants agree with a triple loop") {
  Rng rng(11);
  for (std::size_t trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng.below(9), k = 1 + rng.below(37), n = 1 + rng.below(21);
    const Matrix a = random_matrix(m, k, rng);
    const Matrix b = random_matrix(k, n, rng);
    const Matrix expect = naive_matmul(a, b);
    CHECK(max_abs_diff(matmul(a, b), expect) < 1e-12);
    CHECK(max_abs_diff(matmul_nt(a, transpose(b)), expect) < 1e-12);
    CHECK(max_abs_diff(matmul_tn(transpose(a), b), expect) < 1e-12);
    Matrix acc(m, n, 1.0);
    accumulate_tn(transpose(a), b, acc);
    Matrix shifted = expect;
    for (double& v : shifted.flat()) v += 1.0;
    CHECK(max_abs_diff(acc, shifted) < 1e-12);
  }
}

TEST_CASE("matrix slicing and stacking") {
  Rng rng(3);
  const Matrix a = random_matrix(3, 4, rng);
  const Matrix b = random_matrix(2, 4, rng);
  const Matrix s = vstack(a, b);
  REQUIRE(s.rows() == 5);
  CHECK(slice_rows(s, 0, 3) == a);
  CHECK(slice_rows(s, 3, 2) == b);
  CHECK(vstack(Matrix(0, 4), a) == a);
  const Matrix c = slice_cols(a, 1, 2);
  CHECK(c(2, 1) == a(2, 2));
  CHECK_THROWS_AS(matmul(a, a), InvalidArgument);
}

TEST_CASE("softmax matches an extended-precision reference") {
  Rng rng(5);
  for (std::size_t trial = 0; trial < 50; ++trial) {
    Vector v(1 + rng.below(12));
    for (double& x : v) x = rng.normal(0.0, 20.0);
    long double mx = *std::max_element(v.begin(), v.end()), z = 0;
    for (double x : v) z += std::exp(static_cast<long double>(x) - mx);
    const Vector p = softmax(v);
    const Vector lp = log_softmax(v);
    for (std::size_t i = 0; i < v.size(); ++i) {
      const long double ref = std::exp(static_cast<long double>(v[i]) - mx) / z;
      CHECK(std::abs(p[i] - static_cast<double>(ref)) < 1e-15);
      CHECK(std::abs(lp[i] - static_cast<double>(std::log(ref))) < 1e-12);
    }
  }
  const Vector big = softmax(Vector{1000.0, 1000.0});
  CHECK(big[0] == doctest::Approx(0.5));
  CHECK_THROWS(softmax(Vector{}));
}

TEST_CASE("cross entropy and its gradient") {
  const Vector logits{0.3, -1.2, 2.0, 0.0};
  long double z = 0;
  for (double l : logits) z += std::exp(static_cast<long double>(l));
  CHECK(cross_entropy(logits, 2) == doctest::Approx(static_cast<double>(std::log(z) - 2.0L)).epsilon(1e-14));
  const Vector g = cross_entropy_grad(logits, 1);
  const Vector fd = finite_diff_grad([](std::span<const double> l) { return cross_entropy(l, 1); }, logits, 1e-6);
  CHECK(relative_error(g, fd) < 1e-8);
  CHECK(std::accumulate(g.begin(), g.end(), 0.0) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("top_k_indices orders by value then index") {
  const Vector s{0.5, 0.1, 0.5, 0.1, 0.9};
  CHECK(top_k_indices(s, 3) == std::vector<std::size_t>{1, 3, 0});
  CHECK(top_k_indices(s, 5) == std::vector<std::size_t>{1, 3, 0, 2, 4});
  CHECK_THROWS_AS(top_k_indices(s, 0), InvalidArgument);
  CHECK_THROWS_AS(top_k_indices(s, 6), InvalidArgument);
  CHECK(argmax(Vector{1.0, 3.0, 3.0}) == 1);
}

TEST_CASE("cosine distance and its gradient") {
  const Vector a{1.0, 2.0, -0.5};
  const Vector b{0.3, -1.0, 2.0};
  const double ref = 1.0 - dot(a, b) / (norm2(a) * norm2(b));
  CHECK(cosine_distance(a, b) == doctest::Approx(ref).epsilon(1e-14));
  CHECK(cosine_distance(a, a) == doctest::Approx(0.0).epsilon(1e-15));
  const Vector g = cosine_distance_grad_b(a, b);
  const Vector fd = finite_diff_grad([&a](std::span<const double> x) { return cosine_distance(a, x); }, b, 1e-6);
  CHECK(relative_error(g, fd) < 1e-8);
  CHECK_THROWS_AS(cosine_distance(a, Vector{0.0, 0.0, 0.0}), DegenerateInput);
}

TEST_CASE("finite differences reject non-finite objectives") {
  const Vector p{1.0};
  CHECK_THROWS_AS(finite_diff_grad([](std::span<const double>) { return NAN; }, p, 1e-5), NumericError);
  const Vector g = finite_diff_grad([](std::span<const double> x) { return x[0] * x[0] * x[0]; }, Vector{2.0}, 1e-5);
  CHECK(g[0] == doctest::Approx(12.0).epsilon(1e-9));
}

TEST_CASE("rng streams are reproducible and well distributed") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(42, 5);
  Rng d(42);
  for (int i = 0; i < 5; ++i) d.next_u64();
  CHECK(c.next_u64() == d.next_u64());

  Rng r(7);
  double sum = 0, sq = 0;
  constexpr int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / n) < 5.0 / std::sqrt(n));
  CHECK(std::abs(sq / n - 1.0) < 0.02);

  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[r.below(7)];
  for (int cnt : counts) CHECK(std::abs(cnt - 10000) < 500);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  Rng parent(1);
  CHECK(parent.fork(1).next_u64() != parent.fork(2).next_u64());
  CHECK(parent.fork(1).next_u64() == Rng(1).fork(1).next_u64());
}

TEST_CASE("shuffle is a seeded permutation") {
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  auto w = v;
  Rng r1(9), r2(9);
  r1.shuffle(v);
  r2.shuffle(w);
  CHECK(v == w);
  CHECK(std::set<int>(v.begin(), v.end()).size() == 50);
}

TEST_CASE("cholesky reconstructs SPD matrices") {
  Rng rng(13);
  for (std::size_t n = 1; n <= 8; ++n) {
    const Matrix a = random_matrix(n, n, rng);
    Matrix spd = matmul_nt(a, a);
    for (std::size_t i = 0; i < n; ++i) spd(i, i) += 0.5;
    const Matrix l = cholesky(spd);
    CHECK(max_abs_diff(matmul_nt(l, l), spd) < 1e-11);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) CHECK(l(i, j) == 0.0);
    Vector b(n);
    for (double& v : b) v = rng.normal();
    const Vector y = forward_substitute(l, b);
    CHECK(max_abs_diff(lower_mul(l, y), b) < 1e-11);
  }
  Matrix bad(2, 2);
  bad(0, 0) = 1.0;
  bad(1, 1) = -1.0;
  CHECK_THROWS_AS(cholesky(bad), NumericError);
  CHECK(log_det_from_cholesky(cholesky(Matrix::identity(3))) == 0.0);
}

TEST_CASE("optimizers take the textbook first step") {
  Vector p{1.0, -2.0};
  const Vector g{0.5, -4.0};
  Optimizer sgd(OptimizerKind::kSgd, 0.1);
  sgd.step(p, g);
  CHECK(p[0] == doctest::Approx(0.95));
  CHECK(p[1] == doctest::Approx(-1.6));

  Vector q{1.0, -2.0};
  Optimizer adam(OptimizerKind::kAdam, 0.01);
  adam.step(q, g);
  // Bias-corrected first Adam step moves each coordinate by lr * sign(g).
  CHECK(q[0] == doctest::Approx(0.99).epsilon(1e-6));
  CHECK(q[1] == doctest::Approx(-1.99).epsilon(1e-6));
  CHECK(parse_optimizer("adam") == OptimizerKind::kAdam);
  CHECK_THROWS_AS(parse_optimizer("rmsprop"), ConfigError);
}

TEST_CASE("binary blobs round-trip and detect corruption") {
  io::Writer w;
  w.u32(7);
  w.f64(-0.125);
  w.str("relation");
  w.vec(Vector{1.0, 2.0});
  w.mat(Matrix(2, 3, 1.5));
  const auto payload = w.take();
  const auto blob = io::wrap(io::BlobKind::kHead, payload);
  CHECK(std::string(blob.begin(), blob.begin() + 4) == "RLPL");
  const auto back = io::unwrap(io::BlobKind::kHead, blob);
  io::Reader r(back);
  CHECK(r.u32() == 7);
  CHECK(r.f64() == -0.125);
  CHECK(r.str() == "relation");
  CHECK(r.vec() == Vector{1.0, 2.0});
  CHECK(r.mat() == Matrix(2, 3, 1.5));
  CHECK(r.at_end());
  CHECK_THROWS_AS(r.u8(), ParseError);

  CHECK_THROWS_AS(io::unwrap(io::BlobKind::kEncoder, blob), ParseError);
  auto flipped = blob;
  flipped.back() ^= 0x01;
  CHECK_THROWS_AS(io::unwrap(io::BlobKind::kHead, flipped), ParseError);
  auto truncated = blob;
  truncated.pop_back();
  CHECK_THROWS_AS(io::unwrap(io::BlobKind::kHead, truncated), ParseError);
  auto bad_magic = blob;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(io::unwrap(io::BlobKind::kHead, bad_magic), ParseError);

  // FNV-1a 64 reference values.
  CHECK(io::fnv1a64({}) == 0xcbf29ce484222325ULL);
  const std::uint8_t a[] = {'a'};
  CHECK(io::fnv1a64(a) == 0xaf63dc4c8601ec8cULL);

  const auto path = std::filesystem::temp_directory_path() / "relpool_blob_test.rlpl";
  io::write_file(path, io::BlobKind::kHead, payload);
  CHECK(io::read_file(path, io::BlobKind::kHead) == payload);
  std::filesystem::remove(path);
}
