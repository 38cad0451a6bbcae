#include <cmath>
#include <numbers>

#include "doctest.h"

#include "relpool/errors.hpp"
#include "relpool/replay.hpp"

using namespace relpool;

namespace {

std::vector<Vector> gaussian_cloud(std::size_t n, const Vector& mean, double sd, Rng& rng) {
  std::vector<Vector> out(n, mean);
  for (auto& v : out)
    for (double& x : v) x += rng.normal(0.0, sd);
  return out;
}

}  // namespace

TEST_CASE("single Gaussian uses population moments") {
  const std::vector<Vector> xs{{1.0, 2.0}, {3.0, 0.0}, {2.0, 4.0}, {-2.0, 2.0}};
  const LatentGaussian g = fit_gaussian(xs);
  CHECK(g.mean()[0] == doctest::Approx(1.0));
  CHECK(g.mean()[1] == doctest::Approx(2.0));
  // (1/n) sum of centred outer products, computed by hand.
  CHECK(g.covariance()(0, 0) == doctest::Approx((0.0 + 4.0 + 1.0 + 9.0) / 4.0));
  CHECK(g.covariance()(1, 1) == doctest::Approx((0.0 + 4.0 + 4.0 + 0.0) / 4.0));
  CHECK(g.covariance()(0, 1) == doctest::Approx((0.0 - 4.0 + 2.0 + 0.0) / 4.0));
  CHECK(g.covariance()(0, 1) == g.covariance()(1, 0));
  CHECK(g.ridge() == 1e-4);

  CHECK_THROWS_AS(fit_gaussian(std::vector<Vector>{}), InvalidArgument);
  CHECK_THROWS_AS(fit_gaussian(std::vector<Vector>{{1.0}, {1.0, 2.0}}), InvalidArgument);
  // A single sample has zero covariance; the ridge keeps it factorizable.
  CHECK_NOTHROW(fit_gaussian(std::vector<Vector>{{1.0, 2.0}}));
  CHECK_THROWS_AS(fit_gaussian(std::vector<Vector>{{1.0, NAN}}), NumericError);
}

TEST_CASE("log density matches the closed form") {
  Matrix cov(2, 2);
  cov(0, 0) = 2.0;
  cov(1, 1) = 1.0;
  cov(0, 1) = cov(1, 0) = 0.5;
  const double ridge = 0.1;
  const LatentGaussian g(Vector{1.0, -1.0}, cov, ridge);
  const double a = 2.1, b = 0.5, d = 1.1;
  const double det = a * d - b * b;
  const Vector x{0.3, 0.4};
  const double dx = x[0] - 1.0, dy = x[1] + 1.0;
  const double maha = (d * dx * dx - 2 * b * dx * dy + a * dy * dy) / det;
  const double ref = -0.5 * (2 * std::log(2 * std::numbers::pi) + std::log(det) + maha);
  CHECK(g.log_pdf(x) == doctest::Approx(ref).epsilon(1e-12));

  LatentMixture mix;
  mix.components.push_back({0.25, g});
  mix.components.push_back({0.75, LatentGaussian(Vector{0.0, 0.0}, Matrix::identity(2), 0.0)});
  const double ref2 = -0.5 * (2 * std::log(2 * std::numbers::pi) + 0.09 + 0.16);
  CHECK(mix.log_pdf(x) == doctest::Approx(std::log(0.25 * std::exp(ref) + 0.75 * std::exp(ref2))).epsilon(1e-12));

  Matrix bad(2, 2);
  bad(0, 0) = -1.0;
  CHECK_THROWS_AS(LatentGaussian(Vector{0.0, 0.0}, bad, 1e-4), NumericError);
}

TEST_CASE("one-component mixture equals the direct fit") {
  Rng rng(1);
  const auto xs = gaussian_cloud(50, Vector{1.0, 2.0, 3.0}, 0.5, rng);
  Rng em(2);
  const MixtureFit fit = fit_mixture(xs, 1, em);
  REQUIRE(fit.model.n_components() == 1);
  CHECK(fit.model.components[0].weight == 1.0);
  CHECK(fit.model.components[0].gaussian == fit_gaussian(xs));
}

TEST_CASE("samples reproduce the fitted moments") {
  Rng rng(3);
  Matrix cov(3, 3);
  cov(0, 0) = 1.0;
  cov(1, 1) = 0.5;
  cov(2, 2) = 2.0;
  cov(0, 2) = cov(2, 0) = 0.6;
  LatentMixture m;
  m.components.push_back({1.0, LatentGaussian(Vector{0.5, -1.0, 2.0}, cov, 0.0)});
  const auto draws = sample(m, 100000, rng);
  const LatentGaussian back = fit_gaussian(draws);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::abs(back.mean()[i] - m.components[0].gaussian.mean()[i]) < 0.02);
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(back.covariance()(i, j) - cov(i, j)) < 0.05);
  }
}

TEST_CASE("mixture sampling follows component weights") {
  Rng rng(4);
  LatentMixture m;
  m.components.push_back({0.2, LatentGaussian(Vector{-10.0}, Matrix::identity(1), 0.0)});
  m.components.push_back({0.8, LatentGaussian(Vector{10.0}, Matrix::identity(1), 0.0)});
  const auto draws = sample(m, 20000, rng);
  std::size_t left = 0;
  for (const auto& v : draws) left += v[0] < 0.0;
  CHECK(std::abs(static_cast<double>(left) / 20000.0 - 0.2) < 0.015);
}

TEST_CASE("EM objective never decreases") {
  Rng data_rng(5);
  auto xs = gaussian_cloud(60, Vector{-3.0, 0.0}, 0.7, data_rng);
  auto b = gaussian_cloud(60, Vector{3.0, 1.0}, 0.4, data_rng);
  auto c = gaussian_cloud(60, Vector{0.0, 5.0}, 1.0, data_rng);
  xs.insert(xs.end(), b.begin(), b.end());
  xs.insert(xs.end(), c.begin(), c.end());
  for (std::size_t k : {2, 3, 5}) {
    Rng em(10 + k);
    const MixtureFit fit = fit_mixture(xs, k, em);
    REQUIRE(fit.model.n_components() == k);
    for (std::size_t i = 1; i < fit.objective_trace.size(); ++i)
      CHECK(fit.objective_trace[i] >= fit.objective_trace[i - 1] - 1e-9);
    double w = 0;
    for (const auto& comp : fit.model.components) w += comp.weight;
    CHECK(w == doctest::Approx(1.0).epsilon(1e-12));
  }
  Rng em(3);
  const MixtureFit three = fit_mixture(xs, 3, em);
  const MixtureFit one = fit_mixture(xs, 1, em);
  CHECK(three.model.mean_log_likelihood(xs) > one.model.mean_log_likelihood(xs));
  CHECK_THROWS_AS(fit_mixture(std::span<const Vector>(xs.data(), 2), 3, em), InvalidArgument);
}

TEST_CASE("diagonal option drops off-diagonal moments") {
  const std::vector<Vector> xs{{1.0, 2.0}, {3.0, 0.0}, {2.0, 4.0}, {-2.0, 2.0}};
  ReplayOptions opts;
  opts.diagonal = true;
  const LatentGaussian g = fit_gaussian(xs, opts);
  CHECK(g.covariance()(0, 1) == 0.0);
  CHECK(g.covariance()(0, 0) == doctest::Approx(3.5));
}

TEST_CASE("store is append-only and serializes") {
  Rng rng(6);
  LatentGaussianStore store;
  for (RelationId r : {3u, 1u}) {
    RelationModels m;
    Rng em(r);
    m.query = fit_mixture(gaussian_cloud(10, Vector{double(r), 0.0}, 1.0, rng), 1, em).model;
    m.prompted = fit_mixture(gaussian_cloud(10, Vector{0.0, double(r), 1.0}, 1.0, rng), 2, em).model;
    store.add(r, m);
  }
  CHECK(store.size() == 2);
  CHECK(store.relations() == std::vector<RelationId>{1, 3});
  CHECK_THROWS_AS(store.add(1, store.at(1)), InvalidArgument);
  CHECK_THROWS(store.at(7));
  const auto bytes = store.serialize();
  const auto back = LatentGaussianStore::deserialize(bytes);
  CHECK(back == store);
  CHECK(back.serialize() == bytes);
  CHECK(back.at(3).query.log_pdf(Vector{3.0, 0.0}) == store.at(3).query.log_pdf(Vector{3.0, 0.0}));
}
