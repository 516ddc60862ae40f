#include "cpoison/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "cpoison/errors.hpp"

namespace cpoison {

SimplexVector::SimplexVector(std::vector<double> entries) : entries_(std::move(entries)) {
  if (entries_.empty()) throw ParameterError("simplex vector needs at least one entry");
  double sum = 0.0;
  for (double c : entries_) {
    if (!(c >= 0.0)) throw ParameterError("simplex entries must be non-negative");
    sum += c;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw ParameterError("simplex entries sum to " + std::to_string(sum) + ", not 1");
  }
}

SimplexVector SimplexVector::uniform(std::size_t k) {
  if (k == 0) throw ParameterError("simplex vector needs at least one entry");
  return SimplexVector(std::vector<double>(k, 1.0 / static_cast<double>(k)));
}

FeatureMatrix::FeatureMatrix(std::size_t dim, std::size_t count)
    : dim_(dim), count_(count), data_(dim * count, 0.0) {
  if (dim == 0 || count == 0) throw DimensionError("feature matrix needs d >= 1 and k >= 1");
}

FeatureMatrix FeatureMatrix::from_columns(std::span<const Tensor> columns) {
  if (columns.empty()) throw DimensionError("feature matrix needs at least one column");
  FeatureMatrix a(columns[0].size(), columns.size());
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j].size() != a.dim_) throw DimensionError("feature columns have different lengths");
    require_finite(columns[j].values(), "feature column");
    std::copy(columns[j].values().begin(), columns[j].values().end(), a.column(j).begin());
  }
  return a;
}

std::vector<double> FeatureMatrix::apply(std::span<const double> c) const {
  if (c.size() != count_) throw DimensionError("coefficient length does not match column count");
  std::vector<double> out(dim_, 0.0);
  for (std::size_t j = 0; j < count_; ++j) {
    const auto col = column(j);
    for (std::size_t i = 0; i < dim_; ++i) out[i] += c[j] * col[i];
  }
  return out;
}

std::vector<double> FeatureMatrix::apply_transpose(std::span<const double> r) const {
  if (r.size() != dim_) throw DimensionError("residual length does not match feature dim");
  std::vector<double> out(count_);
  for (std::size_t j = 0; j < count_; ++j) out[j] = dot(column(j), r);
  return out;
}

std::vector<double> FeatureMatrix::gram() const {
  std::vector<double> g(count_ * count_);
  for (std::size_t a = 0; a < count_; ++a) {
    for (std::size_t b = a; b < count_; ++b) {
      const double v = dot(column(a), column(b));
      g[a * count_ + b] = v;
      g[b * count_ + a] = v;
    }
  }
  return g;
}

SimplexVector project_simplex(std::span<const double> v) {
  if (v.empty()) throw ParameterError("cannot project an empty vector");
  require_finite(v, "project_simplex input");
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double running = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    running += u[j];
    const double candidate = (running - 1.0) / static_cast<double>(j + 1);
    if (u[j] - candidate > 0.0) theta = candidate;
  }
  std::vector<double> w(v.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < v.size(); ++j) {
    w[j] = std::max(v[j] - theta, 0.0);
    sum += w[j];
  }
  // Rounding in theta can leave the sum a few ulps away from 1.
  if (sum != 1.0 && sum > 0.0) {
    for (double& x : w) x /= sum;
  }
  return SimplexVector(std::move(w));
}

namespace {

// Power iteration for the top eigenvalue of a symmetric PSD k x k matrix.
// Returns the Rayleigh quotient, which approaches lambda_max from below.
double power_iteration(const std::vector<double>& g, std::size_t k, std::vector<double> v) {
  constexpr std::size_t kMaxIter = 20000;
  constexpr double kRelTol = 1e-12;
  const double n0 = norm(v);
  for (double& x : v) x /= n0;
  std::vector<double> w(k);
  double lambda = 0.0;
  for (std::size_t it = 0; it < kMaxIter; ++it) {
    for (std::size_t r = 0; r < k; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < k; ++c) acc += g[r * k + c] * v[c];
      w[r] = acc;
    }
    const double rayleigh = dot(v, w);
    const double wn = norm(w);
    if (wn == 0.0) return 0.0;
    for (std::size_t r = 0; r < k; ++r) v[r] = w[r] / wn;
    const bool settled = it > 0 && std::abs(rayleigh - lambda) <= kRelTol * std::abs(rayleigh);
    lambda = rayleigh;
    if (settled) break;
  }
  return lambda;
}

}  // namespace

double spectral_step_size(const FeatureMatrix& a) {
  const std::size_t k = a.count();
  const std::vector<double> g = a.gram();
  double max_diag = 0.0;
  std::size_t arg_max = 0;
  for (std::size_t j = 0; j < k; ++j) {
    if (g[j * k + j] > max_diag) {
      max_diag = g[j * k + j];
      arg_max = j;
    }
  }
  if (max_diag == 0.0) throw ParameterError("spectral_step_size: feature matrix is zero");

  double lambda = power_iteration(g, k, std::vector<double>(k, 1.0));
  // lambda_max >= max_j G_jj; falling below it means the all-ones start was
  // (nearly) orthogonal to the top eigenvector.
  if (lambda < max_diag) {
    std::vector<double> e(k, 0.0);
    e[arg_max] = 1.0;
    lambda = std::max(lambda, power_iteration(g, k, std::move(e)));
  }
  return 1.0 / lambda;
}

CoefficientSolve solve_coefficients(const FeatureMatrix& a, std::span<const double> target, const SimplexVector& c0,
                                    double tol, std::size_t max_iter, std::vector<double>* objective_trace) {
  if (target.size() != a.dim()) {
    throw DimensionError("target has " + std::to_string(target.size()) + " entries, features have " +
                         std::to_string(a.dim()));
  }
  if (c0.size() != a.count()) throw DimensionError("initial coefficients do not match column count");
  require_finite(target, "target feature");

  const double alpha = spectral_step_size(a);
  std::vector<double> c(c0.values().begin(), c0.values().end());
  std::vector<double> r = a.apply(c);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] -= target[i];
  if (objective_trace) objective_trace->push_back(0.5 * squared_norm(r));

  std::size_t it = 0;
  std::vector<double> step(c.size());
  while (it < max_iter) {
    ++it;
    const std::vector<double> grad = a.apply_transpose(r);
    for (std::size_t j = 0; j < c.size(); ++j) step[j] = c[j] - alpha * grad[j];
    SimplexVector next = project_simplex(step);
    double change = 0.0;
    for (std::size_t j = 0; j < c.size(); ++j) change = std::max(change, std::abs(next[j] - c[j]));
    c.assign(next.values().begin(), next.values().end());
    r = a.apply(c);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= target[i];
    if (objective_trace) objective_trace->push_back(0.5 * squared_norm(r));
    if (change < tol) break;
  }
  return {SimplexVector(std::move(c)), norm(r), it};
}

}  // namespace cpoison
