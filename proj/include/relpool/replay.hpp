// Per-relation generative models over latent representations.
//
// Each relation keeps two mixtures: one over unprompted query vectors q(x)
// (used to train the task predictor) and one over prompted entity
// representations z(x) (used to train the relation classifier). A single
// component is the moment-matched Gaussian with population covariance; more
// components are fitted by EM. Only moments are kept, never instances.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "relpool/numeric/matrix.hpp"
#include "relpool/numeric/rng.hpp"
#include "relpool/token_sequence.hpp"

namespace relpool {

struct ReplayOptions {
  double ridge = 1e-4;
  bool diagonal = false;
  std::size_t n_components = 1;
  std::size_t max_iterations = 100;
  double tolerance = 1e-6;  // relative change in the EM objective

  bool operator==(const ReplayOptions&) const = default;
};

/// N(mean, covariance + ridge I). `covariance` is the raw fitted moment; the
/// ridge is applied only when factorizing.
class LatentGaussian {
 public:
  LatentGaussian() = default;
  /// Throws NumericError if covariance + ridge I is not positive definite.
  LatentGaussian(Vector mean, Matrix covariance, double ridge);

  const Vector& mean() const { return mean_; }
  const Matrix& covariance() const { return covariance_; }
  double ridge() const { return ridge_; }
  const Matrix& cholesky_factor() const { return chol_; }
  std::size_t dim() const { return mean_.size(); }

  double log_pdf(std::span<const double> x) const;
  /// mean + chol * standard normal.
  Vector draw(Rng& rng) const;

  bool operator==(const LatentGaussian& o) const {
    return mean_ == o.mean_ && covariance_ == o.covariance_ && ridge_ == o.ridge_;
  }

 private:
  Vector mean_;
  Matrix covariance_;
  double ridge_ = 0.0;
  Matrix chol_;
  double log_norm_ = 0.0;
};

struct MixtureComponent {
  double weight = 1.0;
  LatentGaussian gaussian;
  bool operator==(const MixtureComponent&) const = default;
};

struct LatentMixture {
  std::vector<MixtureComponent> components;

  std::size_t n_components() const { return components.size(); }
  std::size_t dim() const { return components.empty() ? 0 : components.front().gaussian.dim(); }
  double log_pdf(std::span<const double> x) const;
  /// Mean log-density over `samples`.
  double mean_log_likelihood(std::span<const Vector> samples) const;
  bool operator==(const LatentMixture&) const = default;
};

/// mean = sample mean, covariance = (1/n) sum (x - mean)(x - mean)^T.
/// Throws InvalidArgument on no samples or ragged dimensions.
LatentGaussian fit_gaussian(std::span<const Vector> samples, const ReplayOptions& opts = {});

struct MixtureFit {
  LatentMixture model;
  /// EM objective after every iteration (index 0 = after initialization).
  /// This is the MAP objective: mean log-likelihood minus the covariance
  /// prior (tau/2n) sum_k tr(Sigma_k^{-1}) that produces the ridge.
  std::vector<double> objective_trace;
  std::size_t iterations = 0;
  bool converged = false;
};

/// n_components == 1 is exactly fit_gaussian with weight 1. Otherwise EM from
/// k-means++ seeds. Throws InvalidArgument if samples < n_components.
MixtureFit fit_mixture(std::span<const Vector> samples, std::size_t n_components, Rng& rng,
                       const ReplayOptions& opts = {});

/// n i.i.d. draws: component by weight, then mean + L * N(0, I).
std::vector<Vector> sample(const LatentMixture& model, std::size_t n, Rng& rng);

struct RelationModels {
  LatentMixture query;     // G_q^r
  LatentMixture prompted;  // G_z^r
  bool operator==(const RelationModels&) const = default;
};

/// One (G_q, G_z) pair per observed relation. Entries are only ever added.
class LatentGaussianStore {
 public:
  /// Throws InvalidArgument if `relation` already has models.
  void add(RelationId relation, RelationModels models);

  bool contains(RelationId relation) const { return models_.contains(relation); }
  const RelationModels& at(RelationId relation) const;
  std::size_t size() const { return models_.size(); }
  bool empty() const { return models_.empty(); }
  std::vector<RelationId> relations() const;

  std::vector<std::uint8_t> serialize() const;
  static LatentGaussianStore deserialize(std::span<const std::uint8_t> payload);

  bool operator==(const LatentGaussianStore&) const = default;

 private:
  std::map<RelationId, RelationModels> models_;
};

}  // namespace relpool
