#pragma once

// Brute-force reference implementations used only by the tests. They share
// no code with the library.

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // row-major, rows of equal length

// Solves M x = b by Gaussian elimination with partial pivoting; none when
// a pivot falls below `singular_tol` (relative to the largest entry).
std::optional<Vec> gaussian_solve(Mat m, Vec b, double singular_tol = 1e-12);

// Nearest simplex point to v: for every non-empty support S the
// equality-constrained minimizer is v_S - (sum v_S - 1)/|S|; keep the
// feasible one closest to v.
Vec simplex_projection(const Vec& v);

struct HullSolution {
  double residual = 0.0;
  Vec coefficients;
};

// Distance from t to conv{points} by enumerating every support set and
// solving its KKT system; affinely dependent supports are skipped (a
// minimizer with an independent support always exists).
HullSolution hull_distance(const std::vector<Vec>& points, const Vec& t);

// Minimum of ||sum_j c_j points_j - t|| over the simplex grid with
// spacing 1/steps. Practical for k <= 3.
double grid_hull_distance(const std::vector<Vec>& points, const Vec& t, std::size_t steps);

// All eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
Vec jacobi_eigenvalues(Mat a, double tol = 1e-14, std::size_t max_sweeps = 100);

// Central differences of f at x with step h.
Vec central_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h = 1e-5);

double distance(const Vec& a, const Vec& b);

}  // namespace oracle
