#include "relpool/replay.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "relpool/errors.hpp"
#include "relpool/io/binary.hpp"
#include "relpool/numeric/linalg.hpp"

namespace relpool {
namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

void check_samples(std::span<const Vector> samples) {
  if (samples.empty()) throw InvalidArgument("replay: no samples");
  const std::size_t d = samples.front().size();
  if (d == 0) throw InvalidArgument("replay: zero-dimensional samples");
  for (const auto& s : samples) {
    if (s.size() != d) {
      throw InvalidArgument("replay: sample dimension " + std::to_string(s.size()) + " != " +
                            std::to_string(d));
    }
    for (double v : s) {
      if (!std::isfinite(v)) throw NumericError("replay: non-finite latent sample");
    }
  }
}

// Weighted mean and (1/sum w) covariance.
std::pair<Vector, Matrix> weighted_moments(std::span<const Vector> samples,
                                           std::span<const double> w, double total, bool diagonal) {
  const std::size_t d = samples.front().size();
  Vector mean(d, 0.0);
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t c = 0; c < d; ++c) mean[c] += w[i] * samples[i][c];
  for (double& m : mean) m /= total;
  Matrix cov(d, d);
  Vector diff(d);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (w[i] == 0.0) continue;
    for (std::size_t c = 0; c < d; ++c) diff[c] = samples[i][c] - mean[c];
    for (std::size_t a = 0; a < d; ++a) {
      const double wa = w[i] * diff[a];
      if (diagonal) {
        cov(a, a) += wa * diff[a];
        continue;
      }
      for (std::size_t b = 0; b <= a; ++b) cov(a, b) += wa * diff[b];
    }
  }
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = 0; b <= a; ++b) {
      cov(a, b) /= total;
      cov(b, a) = cov(a, b);
    }
  }
  return {std::move(mean), std::move(cov)};
}

double log_sum_exp(std::span<const double> v) {
  const double mx = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// trace(Sigma^{-1}) through the Cholesky factor.
double trace_inverse(const Matrix& chol) {
  const std::size_t d = chol.rows();
  double tr = 0.0;
  Vector e(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    std::fill(e.begin(), e.end(), 0.0);
    e[i] = 1.0;
    const Vector y = forward_substitute(chol, e);
    for (double v : y) tr += v * v;
  }
  return tr;
}

void write_mixture(io::Writer& w, const LatentMixture& m) {
  w.u64(m.components.size());
  for (const auto& c : m.components) {
    w.f64(c.weight);
    w.f64(c.gaussian.ridge());
    w.vec(c.gaussian.mean());
    w.mat(c.gaussian.covariance());
  }
}

LatentMixture read_mixture(io::Reader& r) {
  LatentMixture m;
  const std::uint64_t n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    const double weight = r.f64();
    const double ridge = r.f64();
    Vector mean = r.vec();
    Matrix cov = r.mat();
    m.components.push_back({weight, LatentGaussian(std::move(mean), std::move(cov), ridge)});
  }
  return m;
}

}  // namespace

LatentGaussian::LatentGaussian(Vector mean, Matrix covariance, double ridge)
    : mean_(std::move(mean)), covariance_(std::move(covariance)), ridge_(ridge) {
  if (covariance_.rows() != mean_.size() || covariance_.cols() != mean_.size()) {
    throw InvalidArgument("gaussian: covariance shape does not match mean");
  }
  chol_ = cholesky(add_ridge(covariance_, ridge_));
  log_norm_ = -0.5 * (static_cast<double>(dim()) * kLog2Pi + log_det_from_cholesky(chol_));
}

double LatentGaussian::log_pdf(std::span<const double> x) const {
  if (x.size() != dim()) throw InvalidArgument("gaussian: log_pdf dimension mismatch");
  Vector diff(dim());
  for (std::size_t i = 0; i < dim(); ++i) diff[i] = x[i] - mean_[i];
  const Vector y = forward_substitute(chol_, diff);
  double m = 0.0;
  for (double v : y) m += v * v;
  return log_norm_ - 0.5 * m;
}

Vector LatentGaussian::draw(Rng& rng) const {
  Vector eps(dim());
  for (double& e : eps) e = rng.normal();
  Vector out = lower_mul(chol_, eps);
  for (std::size_t i = 0; i < dim(); ++i) out[i] += mean_[i];
  return out;
}

double LatentMixture::log_pdf(std::span<const double> x) const {
  Vector terms(components.size());
  for (std::size_t k = 0; k < components.size(); ++k)
    terms[k] = std::log(components[k].weight) + components[k].gaussian.log_pdf(x);
  return log_sum_exp(terms);
}

double LatentMixture::mean_log_likelihood(std::span<const Vector> samples) const {
  double s = 0.0;
  for (const auto& x : samples) s += log_pdf(x);
  return samples.empty() ? 0.0 : s / static_cast<double>(samples.size());
}

LatentGaussian fit_gaussian(std::span<const Vector> samples, const ReplayOptions& opts) {
  check_samples(samples);
  const std::vector<double> w(samples.size(), 1.0);
  auto [mean, cov] = weighted_moments(samples, w, static_cast<double>(samples.size()), opts.diagonal);
  return LatentGaussian(std::move(mean), std::move(cov), opts.ridge);
}

MixtureFit fit_mixture(std::span<const Vector> samples, std::size_t n_components, Rng& rng,
                       const ReplayOptions& opts) {
  check_samples(samples);
  if (n_components < 1) throw InvalidArgument("fit_mixture: n_components must be >= 1");
  if (samples.size() < n_components) {
    throw InvalidArgument("fit_mixture: " + std::to_string(samples.size()) +
                          " samples for " + std::to_string(n_components) + " components");
  }
  MixtureFit fit;
  if (n_components == 1) {
    fit.model.components.push_back({1.0, fit_gaussian(samples, opts)});
    fit.objective_trace.push_back(fit.model.mean_log_likelihood(samples));
    fit.converged = true;
    return fit;
  }

  const std::size_t n = samples.size();
  const std::size_t k = n_components;
  // Covariance prior strength: with balanced components the per-component
  // ridge tau / n_k equals opts.ridge.
  const double tau = opts.ridge * static_cast<double>(n) / static_cast<double>(k);

  // k-means++ seeding.
  std::vector<std::size_t> centers{rng.below(n)};
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(samples[i], samples[centers.back()]));
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (pick = 0; pick + 1 < n; ++pick) {
        if (u < d2[pick]) break;
        u -= d2[pick];
      }
    } else {
      pick = rng.below(n);
    }
    centers.push_back(pick);
  }
  // Hard assignment to the nearest seed gives the initial responsibilities.
  std::vector<Vector> resp(k, Vector(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      const double dd = squared_distance(samples[i], samples[centers[c]]);
      if (dd < best_d) {
        best_d = dd;
        best = c;
      }
    }
    resp[best][i] = 1.0;
  }

  auto m_step = [&]() {
    LatentMixture model;
    for (std::size_t c = 0; c < k; ++c) {
      double nk = 0.0;
      for (double r : resp[c]) nk += r;
      const double mass = std::max(nk, 1e-12);
      auto [mean, cov] = weighted_moments(samples, resp[c], mass, opts.diagonal);
      model.components.push_back(
          {std::max(nk, 1e-12) / static_cast<double>(n),
           LatentGaussian(std::move(mean), std::move(cov), tau / std::max(nk, 1.0))});
    }
    double wsum = 0.0;
    for (const auto& c : model.components) wsum += c.weight;
    for (auto& c : model.components) c.weight /= wsum;
    return model;
  };

  // E-step; returns the MAP objective of `model`.
  Vector terms(k);
  auto e_step = [&](const LatentMixture& model) {
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < k; ++c) {
        terms[c] = std::log(model.components[c].weight) + model.components[c].gaussian.log_pdf(samples[i]);
      }
      const double lse = log_sum_exp(terms);
      ll += lse;
      for (std::size_t c = 0; c < k; ++c) resp[c][i] = std::exp(terms[c] - lse);
    }
    double penalty = 0.0;
    for (const auto& c : model.components) penalty += 0.5 * tau * trace_inverse(c.gaussian.cholesky_factor());
    return (ll - penalty) / static_cast<double>(n);
  };

  fit.model = m_step();
  fit.objective_trace.push_back(e_step(fit.model));
  for (std::size_t it = 0; it < opts.max_iterations; ++it) {
    LatentMixture next = m_step();
    const double obj = e_step(next);
    const double prev = fit.objective_trace.back();
    fit.model = std::move(next);
    fit.objective_trace.push_back(obj);
    fit.iterations = it + 1;
    if (std::abs(obj - prev) <= opts.tolerance * std::max(1.0, std::abs(prev))) {
      fit.converged = true;
      break;
    }
  }
  return fit;
}

std::vector<Vector> sample(const LatentMixture& model, std::size_t n, Rng& rng) {
  if (model.components.empty()) throw InvalidArgument("sample: unfitted mixture");
  if (n == 0) throw InvalidArgument("sample: n must be >= 1");
  std::vector<Vector> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t c = 0;
    if (model.components.size() > 1) {
      double u = rng.uniform();
      for (c = 0; c + 1 < model.components.size(); ++c) {
        if (u < model.components[c].weight) break;
        u -= model.components[c].weight;
      }
    }
    out.push_back(model.components[c].gaussian.draw(rng));
  }
  return out;
}

void LatentGaussianStore::add(RelationId relation, RelationModels models) {
  if (contains(relation)) {
    throw InvalidArgument("store: relation " + std::to_string(relation) + " already has models");
  }
  models_.emplace(relation, std::move(models));
}

const RelationModels& LatentGaussianStore::at(RelationId relation) const {
  auto it = models_.find(relation);
  if (it == models_.end()) throw InvalidArgument("store: no models for relation " + std::to_string(relation));
  return it->second;
}

std::vector<RelationId> LatentGaussianStore::relations() const {
  std::vector<RelationId> out;
  for (const auto& [r, _] : models_) out.push_back(r);
  return out;
}

std::vector<std::uint8_t> LatentGaussianStore::serialize() const {
  io::Writer w;
  w.u64(models_.size());
  for (const auto& [r, m] : models_) {
    w.u32(r);
    write_mixture(w, m.query);
    write_mixture(w, m.prompted);
  }
  return w.take();
}

LatentGaussianStore LatentGaussianStore::deserialize(std::span<const std::uint8_t> payload) {
  io::Reader r(payload);
  LatentGaussianStore store;
  const std::uint64_t n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    const RelationId rel = r.u32();
    RelationModels m;
    m.query = read_mixture(r);
    m.prompted = read_mixture(r);
    store.add(rel, std::move(m));
  }
  if (!r.at_end()) throw ParseError("store blob: trailing bytes");
  return store;
}

}  // namespace relpool
