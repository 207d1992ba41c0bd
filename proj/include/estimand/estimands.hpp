#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "estimand/covariate.hpp"
#include "estimand/errors.hpp"
#include "estimand/format.hpp"
#include "estimand/link.hpp"
#include "estimand/outcome_model.hpp"
#include "estimand/quadrature.hpp"

namespace estimand {

/// The three one-number summaries, in matrix order.
enum class Summary { MTE = 0, CTEM = 1, PACTE = 2 };

constexpr std::array<Summary, 3> kSummaries = {Summary::MTE, Summary::CTEM, Summary::PACTE};

constexpr std::string_view summary_name(Summary s) {
  switch (s) {
    case Summary::MTE: return "MTE";
    case Summary::CTEM: return "CTEM";
    case Summary::PACTE: return "PACTE";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Conditional effects

/// Conditional effect at X = x on the linear-predictor scale. Computed from
/// the treatment part of the linear predictor, so Homogeneous models return
/// beta_T exactly.
inline double ctex(const OutcomeModel& model, std::span<const double> x) {
  model.check_arity(x);
  return model.treatment_predictor(x[0]);
}

inline double ctex(const OutcomeModel& model, double x) { return ctex(model, std::span<const double>(&x, 1)); }

/// The same quantity by its definition, g(E(Y^1|x)) - g(E(Y^0|x)), going
/// through the natural scale. Throws DomainError if a conditional mean
/// reaches the boundary of the link domain.
inline double ctex_by_definition(const OutcomeModel& model, std::span<const double> x) {
  const auto g = model.link();
  return g.apply(conditional_mean(model, 1, x)) - g.apply(conditional_mean(model, 0, x));
}

/// CtexCurve: x -> CTEX(x) as a callable.
struct CtexCurve {
  OutcomeModel model;
  std::string description;

  double operator()(std::span<const double> x) const { return ctex(model, x); }
  double operator()(double x) const { return ctex(model, x); }
};

inline CtexCurve ctex_curve(const OutcomeModel& model) {
  std::string d;
  switch (model.model_class()) {
    case ModelClass::Homogeneous: d = "beta_T (constant in x)"; break;
    case ModelClass::LinearHeterogeneous: d = "beta_T + beta_XT x"; break;
    case ModelClass::Quadratic: d = "beta_T + beta_1T x + beta_2T x^2"; break;
  }
  return {model, d};
}

/// Conditional effect at the covariate means.
inline double ctem(const OutcomeModel& model, const CovariateDistribution& dist) {
  const auto m = dist.means();
  return ctex(model, m);
}

/// Population average of the conditional effect.
inline ExpectationResult pacte_with_error(const OutcomeModel& model, const CovariateDistribution& dist,
                                          const QuadratureSettings& settings = {}) {
  model.check_arity(dist.means());
  return expectation_with_error(dist, [&](std::span<const double> x) { return ctex(model, x); }, settings);
}

inline double pacte(const OutcomeModel& model, const CovariateDistribution& dist,
                    const QuadratureSettings& settings = {}) {
  model.check_arity(dist.means());
  return expectation(dist, [&](std::span<const double> x) { return ctex(model, x); }, settings);
}

// ---------------------------------------------------------------------------
// Marginal effect

namespace detail {

// For the log link, E[exp(c X^2 + ...)] with X normal is infinite once
// c >= 1 / (2 sd^2); quadrature would silently return a finite number.
inline void check_log_moment_exists(const OutcomeModel& model, const CovariateDistribution& dist) {
  if (model.link().kind() != LinkKind::Log) return;
  const auto* q = std::get_if<Quadratic>(&model.coefficients());
  const auto* n = std::get_if<NormalLaw>(&dist.component(0));
  if (!q || !n) return;
  const double bound = 1.0 / (2.0 * n->sd * n->sd);
  for (int t = 0; t <= 1; ++t) {
    const double c = q->beta2 + t * q->beta2_t;
    if (c >= bound) {
      throw DomainError("marginal mean under treatment " + std::to_string(t) +
                        " is infinite: quadratic coefficient " + format_double(c) +
                        " >= 1/(2 sd^2) = " + format_double(bound));
    }
  }
}

}  // namespace detail

/// Marginal means E(Y^0), E(Y^1) on the natural scale.
struct MarginalMeans {
  ExpectationResult control;
  ExpectationResult treated;
};

inline MarginalMeans marginal_means(const OutcomeModel& model, const CovariateDistribution& dist,
                                    const QuadratureSettings& settings = {}) {
  model.check_arity(dist.means());
  detail::check_log_moment_exists(model, dist);
  MarginalMeans m;
  m.control = expectation_with_error(
      dist, [&](std::span<const double> x) { return conditional_mean(model, 0, x); }, settings);
  m.treated = expectation_with_error(
      dist, [&](std::span<const double> x) { return conditional_mean(model, 1, x); }, settings);
  return m;
}

/// MTE with an error estimate propagated from the two marginal means.
inline ExpectationResult mte_with_error(const OutcomeModel& model, const CovariateDistribution& dist,
                                        const QuadratureSettings& settings = {}) {
  const auto m = marginal_means(model, dist, settings);
  const auto g = model.link();
  if (!g.in_domain(m.treated.value) || !g.in_domain(m.control.value)) {
    throw DomainError("marginal mean outside the " + std::string(g.name()) + " link domain (" +
                      format_double(m.control.value) + ", " + format_double(m.treated.value) + ")");
  }
  ExpectationResult r;
  r.value = g.apply(m.treated.value) - g.apply(m.control.value);
  r.error = std::abs(g.derivative(m.treated.value)) * m.treated.error +
            std::abs(g.derivative(m.control.value)) * m.control.error;
  r.monte_carlo = m.treated.monte_carlo;
  return r;
}

/// g(E[E(Y^1|X)]) - g(E[E(Y^0|X)]): average on the natural scale, contrast
/// on the link scale.
inline double mte(const OutcomeModel& model, const CovariateDistribution& dist,
                  const QuadratureSettings& settings = {}) {
  model.check_arity(dist.means());
  detail::check_log_moment_exists(model, dist);
  const auto g = model.link();
  const double m1 = expectation(dist, [&](std::span<const double> x) { return conditional_mean(model, 1, x); },
                                settings);
  const double m0 = expectation(dist, [&](std::span<const double> x) { return conditional_mean(model, 0, x); },
                                settings);
  if (!g.in_domain(m1) || !g.in_domain(m0)) {
    throw DomainError("marginal mean outside the " + std::string(g.name()) + " link domain");
  }
  return g.apply(m1) - g.apply(m0);
}

// ---------------------------------------------------------------------------
// Closed forms

/// Closed-form MTE where one exists in terms of coefficients and covariate
/// moments: every identity-link model and the homogeneous log-link model.
inline std::optional<double> closed_form_mte(const OutcomeModel& model, const CovariateDistribution& dist) {
  const double xbar = dist.mean(0);
  switch (model.link().kind()) {
    case LinkKind::Identity:
      return std::visit(detail::overloaded{
                            [](const Homogeneous& c) { return c.beta_t; },
                            [&](const LinearHeterogeneous& c) { return c.beta_t + c.beta_xt * xbar; },
                            [&](const Quadratic& c) {
                              return c.beta_t + c.beta1_t * xbar + c.beta2_t * (xbar * xbar + dist.variance(0));
                            },
                        },
                        model.coefficients());
    case LinkKind::Log:
      if (model.model_class() == ModelClass::Homogeneous) return model.beta_t();
      return std::nullopt;
    case LinkKind::Logit: return std::nullopt;
  }
  return std::nullopt;
}

/// CTEM is closed-form for every model class.
inline double closed_form_ctem(const OutcomeModel& model, const CovariateDistribution& dist) {
  return model.treatment_predictor(dist.mean(0));
}

/// beta_T + beta_1T E(X) + beta_2T E(X^2), with the lower-order special cases.
inline double closed_form_pacte(const OutcomeModel& model, const CovariateDistribution& dist) {
  return std::visit(detail::overloaded{
                        [](const Homogeneous& c) { return c.beta_t; },
                        [&](const LinearHeterogeneous& c) { return c.beta_t + c.beta_xt * dist.mean(0); },
                        [&](const Quadratic& c) {
                          return c.beta_t + c.beta1_t * dist.mean(0) + c.beta2_t * dist.second_moment(0);
                        },
                    },
                    model.coefficients());
}

// ---------------------------------------------------------------------------
// Report

struct ClosedFormFlags {
  bool mte = false;
  bool ctem = true;
  bool pacte = true;
};

struct EstimandReport {
  double mte = 0.0;
  double ctem = 0.0;
  double pacte = 0.0;
  Scale scale = Scale::MeanDifference;
  ClosedFormFlags closed_form;
  double mte_error = 0.0;    // numeric error estimate of the MTE
  double pacte_error = 0.0;  // numeric error estimate of the PACTE

  double value(Summary s) const {
    switch (s) {
      case Summary::MTE: return mte;
      case Summary::CTEM: return ctem;
      case Summary::PACTE: return pacte;
    }
    return 0.0;
  }
  double error(Summary s) const {
    switch (s) {
      case Summary::MTE: return mte_error;
      case Summary::CTEM: return 0.0;
      case Summary::PACTE: return pacte_error;
    }
    return 0.0;
  }
  bool is_closed_form(Summary s) const {
    switch (s) {
      case Summary::MTE: return closed_form.mte;
      case Summary::CTEM: return closed_form.ctem;
      case Summary::PACTE: return closed_form.pacte;
    }
    return false;
  }
};

inline EstimandReport compute_estimands(const OutcomeModel& model, const CovariateDistribution& dist,
                                        const QuadratureSettings& settings = {}) {
  EstimandReport r;
  r.scale = scale_for_link(model.link());
  const auto m = mte_with_error(model, dist, settings);
  const auto p = pacte_with_error(model, dist, settings);
  r.mte = m.value;
  r.mte_error = m.error;
  r.pacte = p.value;
  r.pacte_error = p.error;
  r.ctem = ctem(model, dist);
  r.closed_form.mte = closed_form_mte(model, dist).has_value();
  if (!std::isfinite(r.mte) || !std::isfinite(r.ctem) || !std::isfinite(r.pacte)) {
    throw DomainError("estimand values are not finite");
  }
  return r;
}

inline void write_estimands_csv_header(std::ostream& os) {
  os << "scale,MTE,CTEM,PACTE,MTE_closed_form,CTEM_closed_form,PACTE_closed_form\n";
}

inline void write_estimands_csv_row(std::ostream& os, const EstimandReport& r) {
  auto flag = [](bool b) { return b ? "true" : "false"; };
  os << scale_name(r.scale) << ',' << format_double(r.mte) << ',' << format_double(r.ctem) << ','
     << format_double(r.pacte) << ',' << flag(r.closed_form.mte) << ',' << flag(r.closed_form.ctem) << ','
     << flag(r.closed_form.pacte) << '\n';
}

// ---------------------------------------------------------------------------
// Equality matrix

/// 3x3 equality pattern over (MTE, CTEM, PACTE). Symmetric, reflexive and
/// transitive by construction.
struct EqualityMatrix {
  std::array<std::array<bool, 3>, 3> equal{};
  double tolerance = 0.0;  // largest tolerance applied to any pair

  bool operator()(Summary a, Summary b) const {
    return equal[static_cast<int>(a)][static_cast<int>(b)];
  }
  friend bool operator==(const EqualityMatrix& a, const EqualityMatrix& b) { return a.equal == b.equal; }

  static EqualityMatrix from_pairs(bool mte_ctem, bool mte_pacte, bool ctem_pacte) {
    EqualityMatrix m;
    for (int i = 0; i < 3; ++i) m.equal[i][i] = true;
    m.equal[0][1] = m.equal[1][0] = mte_ctem;
    m.equal[0][2] = m.equal[2][0] = mte_pacte;
    m.equal[1][2] = m.equal[2][1] = ctem_pacte;
    m.close();
    return m;
  }

  /// Transitive closure.
  void close() {
    for (int k = 0; k < 3; ++k)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          if (equal[i][k] && equal[k][j]) equal[i][j] = true;
  }
};

/// Default pair tolerance: 1e-8 when both values are closed-form, otherwise
/// max(1e-8, 3 x the summed numeric error estimates).
inline double pair_tolerance(const EstimandReport& r, Summary a, Summary b) {
  constexpr double floor = 1e-8;
  if (r.is_closed_form(a) && r.is_closed_form(b)) return floor;
  return std::max(floor, 3.0 * (r.error(a) + r.error(b)));
}

inline EqualityMatrix equality_matrix(const EstimandReport& r, std::optional<double> tol = std::nullopt) {
  if (tol && !(*tol > 0.0)) throw InvalidArgument("equality tolerance must be positive");
  EqualityMatrix m;
  for (int i = 0; i < 3; ++i) m.equal[i][i] = true;
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      const auto a = kSummaries[i];
      const auto b = kSummaries[j];
      const double t = tol ? *tol : pair_tolerance(r, a, b);
      m.tolerance = std::max(m.tolerance, t);
      m.equal[i][j] = m.equal[j][i] = std::abs(r.value(a) - r.value(b)) <= t;
    }
  }
  m.close();
  return m;
}

inline EqualityMatrix equality_matrix(const OutcomeModel& model, const CovariateDistribution& dist,
                                      const QuadratureSettings& settings = {},
                                      std::optional<double> tol = std::nullopt) {
  return equality_matrix(compute_estimands(model, dist, settings), tol);
}

/// Text grid laid out like the published matrices: columns MTE, CTEM, PACTE;
/// rows PACTE, CTEM, MTE (top to bottom). 'o' marks the diagonal, '#' a
/// matching pair, '.' a non-matching pair.
inline std::string render_matrix(const EqualityMatrix& m, std::string_view title = {}) {
  std::string s;
  if (!title.empty()) s += std::string(title) + "\n";
  s += "        MTE   CTEM  PACTE\n";
  const std::array<Summary, 3> rows = {Summary::PACTE, Summary::CTEM, Summary::MTE};
  for (Summary r : rows) {
    std::string name(summary_name(r));
    name.resize(6, ' ');
    s += name;
    for (Summary c : kSummaries) {
      const char mark = (r == c) ? 'o' : (m(r, c) ? '#' : '.');
      s += "  ";
      s += mark;
      s += "   ";
    }
    while (!s.empty() && s.back() == ' ') s.pop_back();
    s += '\n';
  }
  return s;
}

// ---------------------------------------------------------------------------
// Dependence probes

/// Which moments the base and perturbed covariate laws are declared to share.
enum class SharedMoments { None, Mean, MeanAndVariance };

inline std::string_view shared_moments_name(SharedMoments s) {
  switch (s) {
    case SharedMoments::None: return "none";
    case SharedMoments::Mean: return "mean";
    case SharedMoments::MeanAndVariance: return "mean+variance";
  }
  return "?";
}

enum class Verdict { Invariant, Dependent };

inline std::string_view verdict_name(Verdict v) { return v == Verdict::Invariant ? "invariant" : "dependent"; }

struct DependenceProbe {
  double mte_base = 0.0;
  double mte_perturbed = 0.0;
  double mte_shift = 0.0;  // perturbed - base
  Verdict verdict = Verdict::Invariant;
  SharedMoments shared = SharedMoments::None;
  double tolerance = 0.0;
};

/// Recomputes the MTE under both laws. The verdict is evidence from this one
/// perturbation, not a proof of invariance.
inline DependenceProbe dependence_probe(const OutcomeModel& model, const CovariateDistribution& base,
                                        const CovariateDistribution& perturbed, SharedMoments shared,
                                        const QuadratureSettings& settings = {}, double tol = 1e-8) {
  if (base.dimension() != perturbed.dimension()) throw ArityError("probe laws differ in dimension");
  constexpr double moment_tol = 1e-12;
  for (std::size_t j = 0; j < base.dimension(); ++j) {
    if (shared != SharedMoments::None && std::abs(base.mean(j) - perturbed.mean(j)) > moment_tol) {
      throw InvalidArgument("probe declares shared means but component " + std::to_string(j) + " differs");
    }
    if (shared == SharedMoments::MeanAndVariance && std::abs(base.variance(j) - perturbed.variance(j)) > moment_tol) {
      throw InvalidArgument("probe declares shared variances but component " + std::to_string(j) + " differs");
    }
  }
  DependenceProbe p;
  p.shared = shared;
  p.tolerance = tol;
  p.mte_base = mte(model, base, settings);
  p.mte_perturbed = mte(model, perturbed, settings);
  p.mte_shift = p.mte_perturbed - p.mte_base;
  p.verdict = std::abs(p.mte_shift) <= tol ? Verdict::Invariant : Verdict::Dependent;
  return p;
}

}  // namespace estimand
