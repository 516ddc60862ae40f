#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "cpoison/errors.hpp"
#include "cpoison/polytope.hpp"
#include "cpoison/rng.hpp"
#include "oracles.hpp"

using namespace cpoison;

namespace {

std::vector<Tensor> gaussian_points(std::size_t k, std::size_t d, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Tensor> pts;
  for (std::size_t j = 0; j < k; ++j) {
    Tensor p({d});
    for (double& v : p.values()) v = g(rng);
    pts.push_back(p);
  }
  return pts;
}

std::vector<oracle::Vec> as_vecs(const std::vector<Tensor>& ts) {
  std::vector<oracle::Vec> out;
  for (const auto& t : ts) out.push_back(t.data());
  return out;
}

const std::vector<Tensor> kTriangle{Tensor::vector({0, 0}), Tensor::vector({1, 0}), Tensor::vector({0, 1})};

}  // namespace

TEST_CASE("hull distance examples") {
  Rng rng(1);
  const auto pts = gaussian_points(4, 3, rng);
  Tensor centroid({3});
  for (const auto& p : pts) {
    for (std::size_t i = 0; i < 3; ++i) centroid[i] += p[i] / 4.0;
  }
  const auto in = hull_distance(pts, centroid);
  CHECK(in.residual < 1e-9);
  CHECK(in.inside);

  const std::vector<Tensor> e{Tensor::vector({1, 0}), Tensor::vector({0, 1})};
  const auto out = hull_distance(e, Tensor::vector({2, 0}));
  CHECK(out.residual == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(out.coefficients[0] == doctest::Approx(1.0));
  CHECK_FALSE(out.inside);
  CHECK_THROWS_AS(hull_distance(e, Tensor::vector({1, 0, 0})), DimensionError);
}

TEST_CASE("hull distance matches the support-enumeration oracle") {
  Rng rng(2);
  std::uniform_int_distribution<std::size_t> kd(1, 5), dd(1, 6);
  for (int t = 0; t < 200; ++t) {
    const std::size_t k = kd(rng), d = dd(rng);
    const auto pts = gaussian_points(k, d, rng);
    const auto target = gaussian_points(1, d, rng).front();
    const auto r = hull_distance(pts, target);
    const auto o = oracle::hull_distance(as_vecs(pts), target.data());
    CHECK(std::abs(r.residual - o.residual) < 1e-6);
    CHECK(r.inside == (r.residual < kDefaultInsideTolerance));
  }
}

TEST_CASE("hull distance ignores point order") {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    auto pts = gaussian_points(5, 4, rng);
    const auto target = gaussian_points(1, 4, rng).front();
    const double base = hull_distance(pts, target).residual;
    std::shuffle(pts.begin(), pts.end(), rng);
    CHECK(hull_distance(pts, target).residual == doctest::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("witness for a vertex-nearest target") {
  const std::vector<Tensor> e{Tensor::vector({1, 0}), Tensor::vector({0, 1})};
  const auto w = witness_classifier(e, Tensor::vector({2, 0}));
  REQUIRE(w);
  CHECK(w->normal[0] == doctest::Approx(-1.0));
  CHECK(w->normal[1] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(w->anchor[0] == doctest::Approx(1.0));
  CHECK(w->evaluate(std::vector<double>{2, 0}) == doctest::Approx(-1.0));
  CHECK(w->evaluate(e[0].values()) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(w->evaluate(e[1].values()) == doctest::Approx(1.0));
  CHECK_FALSE(witness_classifier(e, Tensor::vector({0.5, 0.5})));
}

TEST_CASE("witnesses separate random outside targets") {
  Rng rng(4);
  int found = 0;
  while (found < 50) {
    const auto pts = gaussian_points(4, 3, rng);
    auto target = gaussian_points(1, 3, rng).front();
    for (double& v : target.values()) v *= 3.0;
    const auto hull = hull_distance(pts, target);
    if (hull.residual <= 1e-6) continue;
    ++found;
    const auto w = witness_classifier(pts, target);
    REQUIRE(w);
    const double ft = w->evaluate(target.values());
    CHECK(ft < 0.0);
    CHECK(ft <= -hull.residual * hull.residual + 1e-9);
    for (const auto& p : pts) CHECK(w->evaluate(p.values()) >= -1e-9);
  }
}

TEST_CASE("labelling check: inside target is never mislabelled") {
  const auto r = check_hull_labelling(kTriangle, Tensor::vector({0.25, 0.25}), 1, 10000, 5);
  CHECK(r.membership);
  CHECK(r.n_consistent > 0);
  CHECK(r.n_mislabeled == 0);
  CHECK(r.mc_consistent);
  CHECK_FALSE(r.counterexample);
}

TEST_CASE("labelling check: outside target yields a counterexample") {
  const auto r = check_hull_labelling(kTriangle, Tensor::vector({1, 1}), 1, 2000, 6);
  CHECK_FALSE(r.membership);
  REQUIRE(r.counterexample);
  for (const auto& p : kTriangle) CHECK(strictly_labels(*r.counterexample, p.values(), 1));
  CHECK_FALSE(strictly_labels(*r.counterexample, std::vector<double>{1, 1}, 1));
  CHECK(r.counterexample->n_classes() == 2);
}

TEST_CASE("labelling check: single point equal to the target") {
  const std::vector<Tensor> one{Tensor::vector({0.3, -0.2})};
  const auto r = check_hull_labelling(one, Tensor::vector({0.3, -0.2}), 0, 1000, 7);
  CHECK(r.membership);
  CHECK(r.residual == 0.0);
  CHECK(r.mc_consistent);
  CHECK(r.n_mislabeled == 0);
  CHECK_THROWS_AS(check_hull_labelling(one, Tensor::vector({0.3, -0.2}), 0, 0, 7), ParameterError);
}

TEST_CASE("counterexample honours larger poison labels") {
  const auto r = check_hull_labelling(kTriangle, Tensor::vector({2, 2}), 3, 100, 8);
  REQUIRE(r.counterexample);
  CHECK(r.counterexample->n_classes() == 4);
  for (const auto& p : kTriangle) CHECK(strictly_labels(*r.counterexample, p.values(), 3));
  CHECK_FALSE(strictly_labels(*r.counterexample, std::vector<double>{2, 2}, 3));
}

TEST_CASE("report text lists the fields") {
  const auto r = check_hull_labelling(kTriangle, Tensor::vector({1, 1}), 1, 100, 9);
  const std::string text = format_report(r);
  for (const char* key : {"residual: ", "inside: false", "n_consistent_classifiers: ", "counterexample_found: true"}) {
    CHECK(text.find(key) != std::string::npos);
  }
}

TEST_CASE("strict labelling treats ties as not labelled") {
  LinearClassifier c = LinearClassifier::zeros(2, 1);
  CHECK_FALSE(strictly_labels(c, std::vector<double>{1.0}, 0));
  CHECK_FALSE(strictly_labels(c, std::vector<double>{1.0}, 1));
}
