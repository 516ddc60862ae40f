#include "cpoison/polytope.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "cpoison/errors.hpp"
#include "cpoison/rng.hpp"
#include "cpoison/textio.hpp"

namespace cpoison {

namespace {

constexpr double kHullTolerance = 1e-12;
constexpr std::size_t kHullMaxIter = 200000;

void check_points(std::span<const Tensor> points, const Tensor& target) {
  if (points.empty()) throw ParameterError("hull needs at least one point");
  for (const Tensor& p : points) {
    if (p.size() != target.size()) {
      throw DimensionError("point of dimension " + std::to_string(p.size()) + " vs target dimension " +
                           std::to_string(target.size()));
    }
  }
  require_finite(target.values(), "target");
}

double residual_of(const FeatureMatrix& a, std::span<const double> c, std::span<const double> t) {
  std::vector<double> r = a.apply(c);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] -= t[i];
  return norm(r);
}

// Equality-constrained least squares on the support of `c`, solved through
// the KKT system with a rank-revealing decomposition. Returns the refined
// coefficients when they stay feasible.
std::optional<std::vector<double>> polish_on_support(const FeatureMatrix& a, std::span<const double> t,
                                                     std::span<const double> c) {
  std::vector<std::size_t> support;
  for (std::size_t j = 0; j < c.size(); ++j) {
    if (c[j] > 1e-10) support.push_back(j);
  }
  if (support.empty()) return std::nullopt;
  const auto s = static_cast<Eigen::Index>(support.size());
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(s + 1, s + 1);
  Eigen::VectorXd rhs(s + 1);
  for (Eigen::Index p = 0; p < s; ++p) {
    for (Eigen::Index q = 0; q < s; ++q) kkt(p, q) = dot(a.column(support[p]), a.column(support[q]));
    kkt(p, s) = 1.0;
    kkt(s, p) = 1.0;
    rhs(p) = dot(a.column(support[p]), t);
  }
  rhs(s) = 1.0;
  const Eigen::VectorXd sol = kkt.completeOrthogonalDecomposition().solve(rhs);
  std::vector<double> refined(c.size(), 0.0);
  double sum = 0.0;
  for (Eigen::Index p = 0; p < s; ++p) {
    const double v = sol(p);
    if (!std::isfinite(v) || v < -1e-12) return std::nullopt;
    refined[support[p]] = std::max(v, 0.0);
    sum += refined[support[p]];
  }
  if (!(sum > 0.0)) return std::nullopt;
  for (double& v : refined) v /= sum;
  return refined;
}

}  // namespace

HullReport hull_distance(std::span<const Tensor> points, const Tensor& target, double tolerance) {
  check_points(points, target);
  const FeatureMatrix a = FeatureMatrix::from_columns(points);
  const auto t = target.values();

  // A single point, or all points at the origin, has a trivial hull.
  bool all_zero = true;
  for (std::size_t j = 0; j < a.count() && all_zero; ++j) all_zero = squared_norm(a.column(j)) == 0.0;
  if (a.count() == 1 || all_zero) {
    SimplexVector c = a.count() == 1 ? SimplexVector({1.0}) : SimplexVector::uniform(a.count());
    const double res = residual_of(a, c.values(), t);
    return {res, std::move(c), res < tolerance};
  }

  CoefficientSolve solve =
      solve_coefficients(a, t, SimplexVector::uniform(a.count()), kHullTolerance, kHullMaxIter);
  std::vector<double> best(solve.coefficients.values().begin(), solve.coefficients.values().end());
  double best_residual = solve.residual;
  if (auto refined = polish_on_support(a, t, best)) {
    const double r = residual_of(a, *refined, t);
    if (r <= best_residual) {
      best = std::move(*refined);
      best_residual = r;
    }
  }
  return {best_residual, SimplexVector(std::move(best)), best_residual < tolerance};
}

double Witness::evaluate(std::span<const double> z) const { return dot(normal.values(), z) + offset; }

std::optional<Witness> witness_classifier(std::span<const Tensor> points, const Tensor& target, double tolerance) {
  const HullReport report = hull_distance(points, target, tolerance);
  if (report.inside) return std::nullopt;
  const FeatureMatrix a = FeatureMatrix::from_columns(points);
  Witness w;
  w.anchor = Tensor::vector(a.apply(report.coefficients.values()));
  std::vector<double> normal(target.size());
  for (std::size_t i = 0; i < normal.size(); ++i) normal[i] = w.anchor[i] - target[i];
  w.normal = Tensor::vector(std::move(normal));
  w.offset = -dot(w.normal.values(), w.anchor.values());
  return w;
}

LinearClassifier witness_to_classifier(const Witness& witness, std::size_t poison_label) {
  const std::size_t classes = std::max<std::size_t>(2, poison_label + 1);
  const std::size_t dim = witness.normal.size();
  LinearClassifier clf = LinearClassifier::zeros(classes, dim);
  for (std::size_t c = 0; c < dim; ++c) clf.weight.at(poison_label, c) = witness.normal[c];
  // f(target) = -r^2 and f(point) >= 0; shifting by r^2/2 makes both strict.
  const double r2 = squared_norm(witness.normal.values());
  clf.bias[poison_label] = witness.offset + 0.5 * r2;
  return clf;
}

bool strictly_labels(const LinearClassifier& classifier, std::span<const double> z, std::size_t label) {
  const Tensor scores = classifier.logits(z);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i != label && !(scores[label] > scores[i])) return false;
  }
  return true;
}

HullLabellingReport check_hull_labelling(std::span<const Tensor> points, const Tensor& target,
                                      std::size_t poison_label, std::size_t n_samples, std::uint64_t rng_seed,
                                      double tolerance) {
  if (n_samples == 0) throw ParameterError("n_samples must be at least 1");
  check_points(points, target);
  const HullReport hull = hull_distance(points, target, tolerance);

  HullLabellingReport report;
  report.residual = hull.residual;
  report.membership = hull.inside;
  report.n_samples = n_samples;

  const std::size_t min_classes = std::max<std::size_t>(2, poison_label + 1);
  const std::size_t max_classes = std::max<std::size_t>(4, poison_label + 1);
  const std::size_t dim = target.size();
  Rng rng(rng_seed);
  std::uniform_int_distribution<std::size_t> pick_classes(min_classes, max_classes);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t s = 0; s < n_samples; ++s) {
    LinearClassifier clf = LinearClassifier::zeros(pick_classes(rng), dim);
    for (double& w : clf.weight.values()) w = normal(rng);
    for (double& b : clf.bias.values()) b = normal(rng);
    const bool consistent = std::all_of(points.begin(), points.end(), [&](const Tensor& p) {
      return strictly_labels(clf, p.values(), poison_label);
    });
    if (!consistent) continue;
    ++report.n_consistent;
    if (!strictly_labels(clf, target.values(), poison_label)) ++report.n_mislabeled;
  }
  report.mc_consistent = !(report.membership && report.n_mislabeled > 0);

  if (!report.membership) {
    if (auto witness = witness_classifier(points, target, tolerance)) {
      report.counterexample = witness_to_classifier(*witness, poison_label);
    }
  }
  return report;
}

std::string format_report(const HullLabellingReport& report) {
  std::ostringstream out;
  out << "residual: " << format_double(report.residual) << "\n";
  out << "inside: " << (report.membership ? "true" : "false") << "\n";
  out << "n_samples: " << report.n_samples << "\n";
  out << "n_consistent_classifiers: " << report.n_consistent << "\n";
  out << "n_mislabeled_targets: " << report.n_mislabeled << "\n";
  out << "mc_consistent: " << (report.mc_consistent ? "true" : "false") << "\n";
  out << "counterexample_found: " << (report.counterexample ? "true" : "false") << "\n";
  if (report.counterexample) {
    const LinearClassifier& clf = *report.counterexample;
    for (std::size_t r = 0; r < clf.n_classes(); ++r) {
      out << "counterexample_class_" << r << ":";
      for (std::size_t c = 0; c < clf.feature_dim(); ++c) out << " " << format_double(clf.weight.at(r, c));
      out << " | " << format_double(clf.bias[r]) << "\n";
    }
  }
  return out.str();
}

}  // namespace cpoison
