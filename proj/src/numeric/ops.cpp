#include "relpool/numeric/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "relpool/errors.hpp"

namespace relpool {

Vector softmax(std::span<const double> v) {
  if (v.empty()) throw InvalidArgument("softmax: empty vector");
  const double mx = *std::max_element(v.begin(), v.end());
  Vector out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    sum += out[i];
  }
  const double inv = 1.0 / sum;
  for (double& o : out) o *= inv;
  return out;
}

void softmax_rows(Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double& x : row) {
      x = std::exp(x - mx);
      sum += x;
    }
    const double inv = 1.0 / sum;
    for (double& x : row) x *= inv;
  }
}

Vector log_softmax(std::span<const double> v) {
  if (v.empty()) throw InvalidArgument("log_softmax: empty vector");
  const double mx = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - mx);
  const double lse = mx + std::log(sum);
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - lse;
  return out;
}

std::vector<std::size_t> top_k_indices(std::span<const double> scores, std::size_t k) {
  if (k < 1 || k > scores.size()) {
    throw InvalidArgument("top_k_indices: k=" + std::to_string(k) + " outside [1, " +
                          std::to_string(scores.size()) + "]");
  }
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      return scores[a] < scores[b] || (scores[a] == scores[b] && a < b);
                    });
  idx.resize(k);
  return idx;
}

std::size_t argmax(std::span<const double> v) {
  if (v.empty()) throw InvalidArgument("argmax: empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("cosine_distance: length mismatch");
  const double na = norm2(a);
  const double nb = norm2(b);
  if (na == 0.0 || nb == 0.0) throw DegenerateInput("cosine_distance: zero-norm vector");
  const double c = std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
  return 1.0 - c;
}

Vector cosine_distance_grad_b(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("cosine_distance: length mismatch");
  const double na = norm2(a);
  const double nb = norm2(b);
  if (na == 0.0 || nb == 0.0) throw DegenerateInput("cosine_distance: zero-norm vector");
  const double ab = dot(a, b);
  const double inv = 1.0 / (na * nb);
  const double coef = ab * inv / (nb * nb);
  Vector g(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) g[i] = -(a[i] * inv - coef * b[i]);
  return g;
}

double cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw InvalidArgument("cross_entropy: label " + std::to_string(label) + " out of range " +
                          std::to_string(logits.size()));
  }
  return -log_softmax(logits)[label];
}

Vector cross_entropy_grad(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) throw InvalidArgument("cross_entropy_grad: label out of range");
  Vector g = softmax(logits);
  g[label] -= 1.0;
  return g;
}

Vector finite_diff_grad(const ScalarFn& f, std::span<const double> p, double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("finite_diff_grad: eps must be positive");
  Vector x(p.begin(), p.end());
  Vector g(p.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + eps;
    const double fp = f(x);
    x[i] = orig - eps;
    const double fm = f(x);
    x[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_grad: non-finite evaluation at coordinate " +
                         std::to_string(i));
    }
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

double relative_error(std::span<const double> analytic, std::span<const double> numeric,
                      double floor) {
  if (analytic.size() != numeric.size()) throw InvalidArgument("relative_error: length mismatch");
  double scale = floor;
  double diff = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
  }
  return diff / scale;
}

}  // namespace relpool
