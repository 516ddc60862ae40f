#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "cpoison/errors.hpp"
#include "cpoison/rng.hpp"
#include "cpoison/simplex.hpp"
#include "oracles.hpp"

using namespace cpoison;

namespace {

std::vector<Tensor> random_columns(std::size_t d, std::size_t k, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Tensor> cols;
  for (std::size_t j = 0; j < k; ++j) {
    Tensor c({d});
    for (double& v : c.values()) v = g(rng);
    cols.push_back(c);
  }
  return cols;
}

std::vector<oracle::Vec> as_vecs(const std::vector<Tensor>& ts) {
  std::vector<oracle::Vec> out;
  for (const auto& t : ts) out.push_back(t.data());
  return out;
}

}  // namespace

TEST_CASE("simplex vector invariants") {
  CHECK_THROWS_AS(SimplexVector({0.5, 0.6}), ParameterError);
  CHECK_THROWS_AS(SimplexVector({1.5, -0.5}), ParameterError);
  const auto u = SimplexVector::uniform(4);
  CHECK(std::accumulate(u.values().begin(), u.values().end(), 0.0) == doctest::Approx(1.0));
}

TEST_CASE("project_simplex examples") {
  const auto third = project_simplex(std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3});
  for (double c : third.values()) CHECK(c == doctest::Approx(1.0 / 3).epsilon(1e-15));
  const auto vertex = project_simplex(std::vector<double>{2.0, 0.0});
  CHECK(vertex[0] == 1.0);
  CHECK(vertex[1] == 0.0);
  const auto p = project_simplex(std::vector<double>{0.2, 0.8, 1.0});
  const auto o = oracle::simplex_projection({0.2, 0.8, 1.0});
  CHECK(p[0] == doctest::Approx(0.0));
  CHECK(p[1] == doctest::Approx(0.4));
  CHECK(p[2] == doctest::Approx(0.6));
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(p[i] - o[i]) < 1e-12);
  CHECK_THROWS_AS(project_simplex(std::vector<double>{1.0, NAN}), NumericError);
  CHECK_THROWS(project_simplex(std::vector<double>{}));
}

TEST_CASE("project_simplex is optimal against the support oracle") {
  Rng rng(17);
  std::normal_distribution<double> g(0.0, 2.0);
  std::uniform_int_distribution<std::size_t> pick(1, 6);
  for (int t = 0; t < 300; ++t) {
    std::vector<double> v(pick(rng));
    for (double& x : v) x = g(rng);
    const auto p = project_simplex(v);
    const auto o = oracle::simplex_projection(v);
    const std::vector<double> pv(p.values().begin(), p.values().end());
    CHECK(oracle::distance(pv, v) <= oracle::distance(o, v) + 1e-9);
  }
}

TEST_CASE("spectral step size") {
  FeatureMatrix eye(2, 2);
  eye.column(0)[0] = 1.0;
  eye.column(1)[1] = 1.0;
  CHECK(spectral_step_size(eye) == doctest::Approx(1.0));
  FeatureMatrix diag(2, 2);
  diag.column(0)[0] = 2.0;
  diag.column(1)[1] = 1.0;
  CHECK(spectral_step_size(diag) == doctest::Approx(0.25));
  CHECK_THROWS_AS(spectral_step_size(FeatureMatrix(3, 2)), ParameterError);

  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const auto cols = random_columns(8, 3, rng);
    const auto a = FeatureMatrix::from_columns(cols);
    const auto gram = a.gram();
    oracle::Mat m(3, oracle::Vec(3));
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) m[i][j] = gram[i * 3 + j];
    }
    const auto eig = oracle::jacobi_eigenvalues(m);
    const double lmax = *std::max_element(eig.begin(), eig.end());
    CHECK(std::abs(spectral_step_size(a) * lmax - 1.0) < 1e-8);
  }
}

TEST_CASE("solve_coefficients examples") {
  const std::vector<Tensor> e{Tensor::vector({1, 0}), Tensor::vector({0, 1})};
  const auto a = FeatureMatrix::from_columns(e);
  const auto inside = solve_coefficients(a, std::vector<double>{0.3, 0.7}, SimplexVector::uniform(2));
  CHECK(inside.coefficients[0] == doctest::Approx(0.3));
  CHECK(inside.coefficients[1] == doctest::Approx(0.7));
  CHECK(inside.residual < 1e-9);
  const auto vertex = solve_coefficients(a, std::vector<double>{2, 0}, SimplexVector::uniform(2));
  CHECK(vertex.coefficients[0] == doctest::Approx(1.0));
  CHECK(vertex.residual == doctest::Approx(1.0));
  CHECK_THROWS_AS(solve_coefficients(a, std::vector<double>{1, 2, 3}, SimplexVector::uniform(2)), DimensionError);
  CHECK_THROWS_AS(solve_coefficients(a, std::vector<double>{1, 2}, SimplexVector::uniform(3)), DimensionError);
}

TEST_CASE("solve_coefficients agrees with the grid oracle") {
  Rng rng(23);
  for (int t = 0; t < 5; ++t) {
    const auto cols = random_columns(4, 3, rng);
    const auto target = random_columns(4, 1, rng).front();
    const auto r = solve_coefficients(FeatureMatrix::from_columns(cols), target.values(), SimplexVector::uniform(3));
    const double grid = oracle::grid_hull_distance(as_vecs(cols), target.data(), 1000);
    CHECK(std::abs(r.residual - grid) < 1e-3);
  }
}

TEST_CASE("solver properties: monotone, warm start, beats uniform, duplicates") {
  Rng rng(31);
  std::uniform_int_distribution<std::size_t> kd(1, 5), dd(1, 6);
  for (int t = 0; t < 100; ++t) {
    const std::size_t k = kd(rng), d = dd(rng);
    auto cols = random_columns(d, k, rng);
    if (t % 10 == 0 && k > 1) cols[1] = cols[0];  // duplicate columns
    const auto target = random_columns(d, 1, rng).front();
    const auto a = FeatureMatrix::from_columns(cols);
    std::vector<double> trace;
    const auto cold = solve_coefficients(a, target.values(), SimplexVector::uniform(k), 1e-10, 2000, &trace);
    // Allowance for the rounding error of evaluating the objective.
    double widest = 0.0;
    for (const auto& c : cols) widest = std::max(widest, norm(c.values()));
    const double scale = norm(target.values()) + widest;
    const double rounding = 64.0 * std::numeric_limits<double>::epsilon() * scale * scale;
    for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + rounding);

    const auto uniform_fit = a.apply(SimplexVector::uniform(k).values());
    CHECK(cold.residual <= std::sqrt(squared_distance(uniform_fit, target.values())) + 1e-9);

    // Warm start from an arbitrary simplex point reaches the same residual.
    std::vector<double> raw(k);
    for (double& x : raw) x = std::abs(target[0]) + static_cast<double>(&x - raw.data());
    const auto warm = solve_coefficients(a, target.values(), project_simplex(raw), 1e-12, 200000);
    const auto tight = solve_coefficients(a, target.values(), SimplexVector::uniform(k), 1e-12, 200000);
    CHECK(std::abs(warm.residual - tight.residual) < 1e-8);

    const auto o = oracle::hull_distance(as_vecs(cols), target.data());
    CHECK(std::abs(tight.residual - o.residual) < 1e-6);
  }
}
