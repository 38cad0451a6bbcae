#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "relpool/numeric/matrix.hpp"

namespace relpool {

/// Max-subtracted softmax. Throws InvalidArgument on empty input.
Vector softmax(std::span<const double> v);
/// Row-wise softmax, in place.
void softmax_rows(Matrix& m);
/// log softmax(v)[i] for every i.
Vector log_softmax(std::span<const double> v);

/// Indices of the k SMALLEST scores, ordered by (score, index) ascending, so
/// ties resolve to the lower index. Used for key selection on distances.
std::vector<std::size_t> top_k_indices(std::span<const double> scores, std::size_t k);

/// Index of the largest element; lowest index wins ties.
std::size_t argmax(std::span<const double> v);

/// 1 - cos(a, b), in [0, 2]. Throws DegenerateInput on a zero-norm argument.
double cosine_distance(std::span<const double> a, std::span<const double> b);
/// d/db of cosine_distance(a, b).
Vector cosine_distance_grad_b(std::span<const double> a, std::span<const double> b);

/// -log softmax(logits)[label].
double cross_entropy(std::span<const double> logits, std::size_t label);
/// d cross_entropy / d logits = softmax(logits) - onehot(label).
Vector cross_entropy_grad(std::span<const double> logits, std::size_t label);

using ScalarFn = std::function<double(std::span<const double>)>;

/// Central differences (f(p + eps e_i) - f(p - eps e_i)) / (2 eps).
/// Throws NumericError if any evaluation is non-finite.
Vector finite_diff_grad(const ScalarFn& f, std::span<const double> p, double eps);

/// max_i |a_i - b_i| / max(|a|_inf, |b|_inf, floor)
double relative_error(std::span<const double> analytic, std::span<const double> numeric,
                      double floor = 1e-8);

}  // namespace relpool
