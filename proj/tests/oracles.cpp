#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace oracle {

std::optional<Vec> gaussian_solve(Mat m, Vec b, double singular_tol) {
  const std::size_t n = b.size();
  double scale = 0.0;
  for (const auto& row : m) {
    for (double x : row) scale = std::max(scale, std::abs(x));
  }
  if (scale == 0.0) return std::nullopt;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(m[r][col]) > std::abs(m[pivot][col])) pivot = r;
    }
    if (std::abs(m[pivot][col]) < singular_tol * scale) return std::nullopt;
    std::swap(m[col], m[pivot]);
    std::swap(b[col], b[pivot]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = m[r][col] / m[col][col];
      for (std::size_t c = col; c < n; ++c) m[r][c] -= f * m[col][c];
      b[r] -= f * b[col];
    }
  }
  Vec x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= m[i][c] * x[c];
    x[i] = s / m[i][i];
  }
  return x;
}

double distance(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

Vec simplex_projection(const Vec& v) {
  const std::size_t k = v.size();
  Vec best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t mask = 1; mask < (std::size_t{1} << k); ++mask) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < k; ++i) {
      if (mask >> i & 1) {
        sum += v[i];
        ++count;
      }
    }
    const double shift = (sum - 1.0) / static_cast<double>(count);
    Vec x(k, 0.0);
    bool feasible = true;
    for (std::size_t i = 0; i < k; ++i) {
      if (mask >> i & 1) {
        x[i] = v[i] - shift;
        if (x[i] < 0.0) feasible = false;
      }
    }
    if (!feasible) continue;
    const double d = distance(x, v);
    if (d < best_dist) {
      best_dist = d;
      best = x;
    }
  }
  return best;
}

HullSolution hull_distance(const std::vector<Vec>& points, const Vec& t) {
  const std::size_t k = points.size();
  const std::size_t d = t.size();
  HullSolution best{std::numeric_limits<double>::infinity(), {}};
  for (std::size_t mask = 1; mask < (std::size_t{1} << k); ++mask) {
    std::vector<std::size_t> s;
    for (std::size_t j = 0; j < k; ++j) {
      if (mask >> j & 1) s.push_back(j);
    }
    const std::size_t n = s.size();
    // [G 1; 1^T 0] [c; nu] = [P^T t; 1]
    Mat m(n + 1, Vec(n + 1, 0.0));
    Vec rhs(n + 1, 0.0);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        double g = 0.0;
        for (std::size_t i = 0; i < d; ++i) g += points[s[a]][i] * points[s[b]][i];
        m[a][b] = g;
      }
      m[a][n] = 1.0;
      m[n][a] = 1.0;
      for (std::size_t i = 0; i < d; ++i) rhs[a] += points[s[a]][i] * t[i];
    }
    rhs[n] = 1.0;
    const auto sol = gaussian_solve(m, rhs, 1e-11);
    if (!sol) continue;
    Vec c(k, 0.0);
    bool feasible = true;
    for (std::size_t a = 0; a < n; ++a) {
      if ((*sol)[a] < -1e-12) feasible = false;
      c[s[a]] = std::max(0.0, (*sol)[a]);
    }
    if (!feasible) continue;
    Vec u(d, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t i = 0; i < d; ++i) u[i] += c[j] * points[j][i];
    }
    const double r = distance(u, t);
    if (r < best.residual) best = {r, c};
  }
  return best;
}

double grid_hull_distance(const std::vector<Vec>& points, const Vec& t, std::size_t steps) {
  const std::size_t k = points.size();
  const std::size_t d = t.size();
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> counts(k, 0);
  // Enumerate compositions of `steps` into k parts.
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t j, std::size_t left) {
    if (j + 1 == k) {
      counts[j] = left;
      Vec u(d, 0.0);
      for (std::size_t a = 0; a < k; ++a) {
        const double c = static_cast<double>(counts[a]) / static_cast<double>(steps);
        for (std::size_t i = 0; i < d; ++i) u[i] += c * points[a][i];
      }
      best = std::min(best, distance(u, t));
      return;
    }
    for (std::size_t n = 0; n <= left; ++n) {
      counts[j] = n;
      rec(j + 1, left - n);
    }
  };
  rec(0, steps);
  return best;
}

Vec jacobi_eigenvalues(Mat a, double tol, std::size_t max_sweeps) {
  const std::size_t n = a.size();
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    }
    if (off < tol * tol) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a[p][q] == 0.0) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t r = 0; r < n; ++r) {
          const double arp = a[r][p];
          const double arq = a[r][q];
          a[r][p] = c * arp - s * arq;
          a[r][q] = s * arp + c * arq;
        }
        for (std::size_t r = 0; r < n; ++r) {
          const double apr = a[p][r];
          const double aqr = a[q][r];
          a[p][r] = c * apr - s * aqr;
          a[q][r] = s * apr + c * aqr;
        }
      }
    }
  }
  Vec eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a[i][i];
  return eig;
}

Vec central_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
  Vec g(x.size());
  Vec probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace oracle
