#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cpoison/tensor.hpp"

namespace cpoison {

// A point of the probability simplex {c : c >= 0, sum c = 1}.
class SimplexVector {
 public:
  // Throws ParameterError unless every entry is >= 0 and the sum is within
  // 1e-12 of 1.
  explicit SimplexVector(std::vector<double> entries);

  static SimplexVector uniform(std::size_t k);

  std::size_t size() const noexcept { return entries_.size(); }
  double operator[](std::size_t j) const noexcept { return entries_[j]; }
  std::span<const double> values() const noexcept { return entries_; }

  bool operator==(const SimplexVector&) const = default;

 private:
  std::vector<double> entries_;
};

// d x k matrix whose columns are feature vectors; stored column-major so
// each column is contiguous.
class FeatureMatrix {
 public:
  FeatureMatrix(std::size_t dim, std::size_t count);
  static FeatureMatrix from_columns(std::span<const Tensor> columns);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t count() const noexcept { return count_; }

  std::span<double> column(std::size_t j) { return {data_.data() + j * dim_, dim_}; }
  std::span<const double> column(std::size_t j) const { return {data_.data() + j * dim_, dim_}; }

  // A c
  std::vector<double> apply(std::span<const double> c) const;
  // A^T r
  std::vector<double> apply_transpose(std::span<const double> r) const;
  // A^T A, k x k row-major
  std::vector<double> gram() const;

 private:
  std::size_t dim_;
  std::size_t count_;
  std::vector<double> data_;
};

// Euclidean projection onto the probability simplex (sort and threshold).
SimplexVector project_simplex(std::span<const double> v);

// 1 / lambda_max(A^T A), with lambda_max found by power iteration on the
// k x k Gram matrix.
double spectral_step_size(const FeatureMatrix& a);

struct CoefficientSolve {
  SimplexVector coefficients;
  double residual = 0.0;  // ||A c - t||
  std::size_t iterations = 0;
};

inline constexpr double kDefaultFbsTolerance = 1e-10;
inline constexpr std::size_t kDefaultFbsMaxIter = 2000;

// Forward-backward splitting for min ||A c - t|| over the simplex, started
// from `c0`. Stops when ||c_new - c||_inf < tol or after max_iter steps.
// When `objective_trace` is given, 0.5 ||A c - t||^2 is appended for c0
// and after every iteration.
CoefficientSolve solve_coefficients(const FeatureMatrix& a, std::span<const double> target,
                                    const SimplexVector& c0, double tol = kDefaultFbsTolerance,
                                    std::size_t max_iter = kDefaultFbsMaxIter,
                                    std::vector<double>* objective_trace = nullptr);

}  // namespace cpoison
