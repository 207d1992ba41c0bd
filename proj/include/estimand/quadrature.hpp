#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <vector>

#include "estimand/covariate.hpp"
#include "estimand/errors.hpp"
#include "estimand/rng.hpp"

namespace estimand {

struct QuadratureSettings {
  int nodes = 64;                       // Gauss-Hermite nodes per normal component
  std::size_t max_tensor_dimension = 4;  // tensor grid up to this many components
  std::size_t mc_draws = 200000;         // Monte Carlo draws beyond that
  std::uint64_t seed = 20240607;
};

/// Probabilists' Gauss-Hermite rule: sum_i w_i f(x_i) ~ E f(Z), Z ~ N(0,1),
/// weights normalised to sum to one.
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

namespace detail {

// Golub-Welsch on the Jacobi matrix of the probabilists' Hermite recurrence.
inline GaussHermiteRule build_gauss_hermite(int n) {
  GaussHermiteRule rule;
  if (n == 1) {
    rule.nodes = {0.0};
    rule.weights = {1.0};
    return rule;
  }
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sub(n - 1);
  for (int k = 1; k < n; ++k) sub[k - 1] = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) throw DomainError("Gauss-Hermite eigen-decomposition failed");
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = solver.eigenvalues()[i];
    const double v0 = solver.eigenvectors()(0, i);
    rule.weights[i] = v0 * v0;
  }
  // Enforce the exact symmetry of the rule.
  for (int i = 0; i < n / 2; ++i) {
    const int j = n - 1 - i;
    const double x = 0.5 * (rule.nodes[j] - rule.nodes[i]);
    const double w = 0.5 * (rule.weights[i] + rule.weights[j]);
    rule.nodes[i] = -x;
    rule.nodes[j] = x;
    rule.weights[i] = rule.weights[j] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  double total = 0.0;
  for (double w : rule.weights) total += w;
  for (double& w : rule.weights) w /= total;
  return rule;
}

}  // namespace detail

/// Cached rule for `n` nodes; safe to call concurrently.
inline const GaussHermiteRule& gauss_hermite(int n) {
  if (n < 1 || n > 512) throw InvalidArgument("Gauss-Hermite node count must be in [1, 512]");
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<const GaussHermiteRule>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<const GaussHermiteRule>(detail::build_gauss_hermite(n));
  return *slot;
}

/// One-dimensional rule (points and weights) for a single component.
struct ComponentRule {
  std::vector<double> points;
  std::vector<double> weights;
};

inline ComponentRule component_rule(const UnivariateLaw& law, int nodes) {
  return std::visit(detail::overloaded{
                        [&](const NormalLaw& n) {
                          const auto& gh = gauss_hermite(nodes);
                          ComponentRule r;
                          r.weights = gh.weights;
                          r.points.reserve(gh.nodes.size());
                          for (double z : gh.nodes) r.points.push_back(n.mean + n.sd * z);
                          return r;
                        },
                        [](const BernoulliLaw& b) { return ComponentRule{{0.0, 1.0}, {1.0 - b.p, b.p}}; },
                        [](const DiscreteLaw& d) { return ComponentRule{d.values, d.probs}; },
                    },
                    law);
}

/// Calls visit(point, weight) for every node of the integration rule for
/// `dist`: an exact finite sum for discrete laws, a Gauss-Hermite tensor grid
/// when normal components are present (up to max_tensor_dimension), and an
/// equally weighted seeded Monte Carlo sample beyond that. Returns true when
/// the rule was Monte Carlo.
template <class Visitor>
bool for_each_node(const CovariateDistribution& dist, const QuadratureSettings& settings, int nodes,
                   Visitor&& visit) {
  const std::size_t dim = dist.dimension();
  std::vector<double> point(dim);
  if (dim > settings.max_tensor_dimension) {
    const double w = 1.0 / static_cast<double>(settings.mc_draws);
    for (std::size_t i = 0; i < settings.mc_draws; ++i) {
      auto rng = CounterRng::for_stream(settings.seed, i);
      dist.sample_into(rng, point);
      visit(std::span<const double>(point), w);
    }
    return true;
  }
  std::vector<ComponentRule> rules;
  rules.reserve(dim);
  for (const auto& c : dist.components()) rules.push_back(component_rule(c, nodes));
  std::vector<std::size_t> index(dim, 0);
  while (true) {
    double w = 1.0;
    for (std::size_t j = 0; j < dim; ++j) {
      point[j] = rules[j].points[index[j]];
      w *= rules[j].weights[index[j]];
    }
    visit(std::span<const double>(point), w);
    std::size_t j = 0;
    for (; j < dim; ++j) {
      if (++index[j] < rules[j].points.size()) break;
      index[j] = 0;
    }
    if (j == dim) break;
  }
  return false;
}

/// Value of E[f(X)] with an error estimate: the change from halving the
/// node count (quadrature), the Monte Carlo standard error (sampling), or
/// zero for exact finite sums.
struct ExpectationResult {
  double value = 0.0;
  double error = 0.0;
  bool monte_carlo = false;
};

namespace detail {

inline std::string format_point(std::span<const double> x) {
  std::ostringstream os;
  os.precision(17);
  os << "(";
  for (std::size_t j = 0; j < x.size(); ++j) os << (j ? ", " : "") << x[j];
  os << ")";
  return os.str();
}

template <class F>
double integrate(const CovariateDistribution& dist, F& f, const QuadratureSettings& settings, int nodes,
                 bool* monte_carlo = nullptr, double* sum_squares = nullptr) {
  double total = 0.0;
  double squares = 0.0;
  const bool mc = for_each_node(dist, settings, nodes, [&](std::span<const double> x, double w) {
    const double v = f(x);
    if (!std::isfinite(v)) {
      throw DomainError("integrand is not finite at node " + format_point(x));
    }
    total += w * v;
    squares += w * v * v;
  });
  if (monte_carlo) *monte_carlo = mc;
  if (sum_squares) *sum_squares = squares;
  return total;
}

}  // namespace detail

/// E[f(X)] under `dist`; f receives the covariate vector as a span.
template <class F>
double expectation(const CovariateDistribution& dist, F&& f, const QuadratureSettings& settings = {}) {
  return detail::integrate(dist, f, settings, settings.nodes);
}

template <class F>
ExpectationResult expectation_with_error(const CovariateDistribution& dist, F&& f,
                                         const QuadratureSettings& settings = {}) {
  ExpectationResult out;
  double squares = 0.0;
  out.value = detail::integrate(dist, f, settings, settings.nodes, &out.monte_carlo, &squares);
  if (out.monte_carlo) {
    const double m = static_cast<double>(settings.mc_draws);
    const double var = std::max(0.0, squares - out.value * out.value);
    out.error = std::sqrt(var / m);
  } else if (dist.has_continuous_component()) {
    const int coarse = std::max(1, settings.nodes / 2);
    out.error = std::abs(out.value - detail::integrate(dist, f, settings, coarse));
  }
  return out;
}

}  // namespace estimand
