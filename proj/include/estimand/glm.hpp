#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "estimand/errors.hpp"
#include "estimand/format.hpp"
#include "estimand/link.hpp"
#include "estimand/outcome_model.hpp"
#include "estimand/trial.hpp"

namespace estimand {

enum class Formula { TreatmentOnly, MainEffects, Interaction, QuadraticInteraction };

inline std::string_view formula_name(Formula f) {
  switch (f) {
    case Formula::TreatmentOnly: return "treatment-only";
    case Formula::MainEffects: return "main-effects";
    case Formula::Interaction: return "interaction";
    case Formula::QuadraticInteraction: return "quadratic-interaction";
  }
  return "?";
}

/// Formula matching a generative model class.
inline Formula formula_for(ModelClass c) {
  switch (c) {
    case ModelClass::Homogeneous: return Formula::MainEffects;
    case ModelClass::LinearHeterogeneous: return Formula::Interaction;
    case ModelClass::Quadratic: return Formula::QuadraticInteraction;
  }
  return Formula::MainEffects;
}

/// Which covariates enter the design and where they are centred.
/// Term order: (Intercept), x_j..., [x_1^2], t, [x_j:t...], [x_1^2:t].
/// The squared terms use the first selected covariate.
struct DesignSpec {
  Formula formula = Formula::MainEffects;
  std::vector<std::size_t> covariates;  // column indices into the IPD
  std::vector<double> centering;        // one per selected covariate

  bool uses_covariates() const { return formula != Formula::TreatmentOnly && !covariates.empty(); }
  bool interacts() const { return formula == Formula::Interaction || formula == Formula::QuadraticInteraction; }
  bool quadratic() const { return formula == Formula::QuadraticInteraction && !covariates.empty(); }

  std::size_t size() const {
    if (!uses_covariates()) return 2;
    const std::size_t k = covariates.size();
    std::size_t p = 2 + k;
    if (quadratic()) p += 1;
    if (interacts()) p += k;
    if (quadratic()) p += 1;
    return p;
  }

  std::vector<std::string> terms(const std::vector<std::string>& names) const {
    std::vector<std::string> out{"(Intercept)"};
    if (!uses_covariates()) {
      out.push_back("t");
      return out;
    }
    for (std::size_t c : covariates) out.push_back(names.at(c));
    if (quadratic()) out.push_back(names.at(covariates[0]) + "^2");
    out.push_back("t");
    if (interacts())
      for (std::size_t c : covariates) out.push_back(names.at(c) + ":t");
    if (quadratic()) out.push_back(names.at(covariates[0]) + "^2:t");
    return out;
  }

  /// Fills `row` (length size()) for treatment t and full covariate vector x.
  void fill_row(int t, std::span<const double> x, double* row) const {
    std::size_t p = 0;
    row[p++] = 1.0;
    if (!uses_covariates()) {
      row[p++] = t;
      return;
    }
    const std::size_t k = covariates.size();
    auto u = [&](std::size_t i) { return x[covariates[i]] - (centering.empty() ? 0.0 : centering[i]); };
    for (std::size_t i = 0; i < k; ++i) row[p++] = u(i);
    if (quadratic()) row[p++] = u(0) * u(0);
    row[p++] = t;
    if (interacts())
      for (std::size_t i = 0; i < k; ++i) row[p++] = u(i) * t;
    if (quadratic()) row[p++] = u(0) * u(0) * t;
  }

  std::size_t treatment_index() const {
    if (!uses_covariates()) return 1;
    return 1 + covariates.size() + (quadratic() ? 1 : 0);
  }
};

struct FitOptions {
  std::vector<std::string> covariates;  // names; empty selects every covariate
  std::vector<double> centering;        // per selected covariate; empty means no centring
  int max_iterations = 100;
  double tolerance = 1e-10;            // on max |score| / n
  double separation_bound = 30.0;      // |coefficient| beyond this signals separation (binary outcomes)
};

struct GlmFit {
  DesignSpec design;
  LinkFunction link;
  std::vector<std::string> terms;
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd covariance;
  bool converged = false;
  int iterations = 0;
  double score_norm = 0.0;  // max |score| / n at the returned coefficients
  double dispersion = 1.0;
  double log_likelihood = 0.0;
  std::size_t n = 0;

  std::size_t index_of(std::string_view term) const {
    for (std::size_t j = 0; j < terms.size(); ++j)
      if (terms[j] == term) return j;
    throw InvalidArgument("no term '" + std::string(term) + "' in fit");
  }
  double coefficient(std::string_view term) const { return coefficients[index_of(term)]; }
  double se(std::string_view term) const {
    const auto j = index_of(term);
    return std::sqrt(std::max(0.0, covariance(j, j)));
  }
  double treatment_coefficient() const { return coefficients[design.treatment_index()]; }
  double treatment_se() const {
    const auto j = design.treatment_index();
    return std::sqrt(std::max(0.0, covariance(j, j)));
  }

  Eigen::VectorXd design_row(int t, std::span<const double> x) const {
    Eigen::VectorXd row(coefficients.size());
    design.fill_row(t, x, row.data());
    return row;
  }

  /// Fitted linear predictor (offset excluded) for a covariate profile.
  double predict_eta(int t, std::span<const double> x) const { return design_row(t, x).dot(coefficients); }
};

namespace detail {

inline double variance_function(FamilyKind f, double mu) {
  switch (f) {
    case FamilyKind::Gaussian: return 1.0;
    case FamilyKind::Poisson: return mu;
    case FamilyKind::Bernoulli: return mu * (1.0 - mu);
  }
  return 1.0;
}

// Log-likelihood up to terms free of the coefficients.
inline double log_likelihood(FamilyKind f, const Eigen::VectorXd& y, const Eigen::VectorXd& eta,
                             const Eigen::VectorXd& mu) {
  double ll = 0.0;
  const auto n = y.size();
  switch (f) {
    case FamilyKind::Gaussian:
      for (Eigen::Index i = 0; i < n; ++i) ll -= 0.5 * (y[i] - mu[i]) * (y[i] - mu[i]);
      break;
    case FamilyKind::Poisson:
      for (Eigen::Index i = 0; i < n; ++i) ll += y[i] * eta[i] - mu[i];
      break;
    case FamilyKind::Bernoulli:
      for (Eigen::Index i = 0; i < n; ++i) {
        const double e = eta[i];
        const double log1pexp = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
        ll += y[i] * e - log1pexp;
      }
      break;
  }
  return ll;
}

inline void check_rank(const Eigen::MatrixXd& X, const std::vector<std::string>& terms) {
  const Eigen::MatrixXd G = X.transpose() * X;
  const auto p = G.rows();
  Eigen::VectorXd scale(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!(G(j, j) > 0.0)) throw SingularDesignError("design column '" + terms[j] + "' is identically zero");
    scale[j] = 1.0 / std::sqrt(G(j, j));
  }
  const Eigen::MatrixXd C = scale.asDiagonal() * G * scale.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(C);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 1e-10 * hi)) {
    // Name the term that dominates the null direction.
    Eigen::Index worst = 0;
    eig.eigenvectors().col(0).cwiseAbs().maxCoeff(&worst);
    throw SingularDesignError("design matrix is rank deficient (near-collinear term '" + terms[worst] + "')");
  }
}

}  // namespace detail

/// Resolves FitOptions covariate names to a DesignSpec for `ipd`.
inline DesignSpec make_design(const TrialIPD& ipd, Formula formula, const FitOptions& options) {
  DesignSpec d;
  d.formula = formula;
  if (formula != Formula::TreatmentOnly) {
    if (options.covariates.empty()) {
      for (std::size_t j = 0; j < ipd.covariate_count(); ++j) d.covariates.push_back(j);
    } else {
      for (const auto& name : options.covariates) d.covariates.push_back(ipd.covariate_index(name));
    }
    if (!options.centering.empty()) {
      if (options.centering.size() != d.covariates.size()) {
        throw ArityError("centring vector has " + std::to_string(options.centering.size()) + " entries for " +
                         std::to_string(d.covariates.size()) + " covariates");
      }
      d.centering = options.centering;
    }
  }
  return d;
}

/// Maximum-likelihood GLM with the canonical family for `link`, by
/// iteratively reweighted least squares (Newton for canonical links) with
/// step-halving whenever the log-likelihood decreases. Convergence is
/// max |score| / n below options.tolerance; hitting the iteration cap is
/// reported through `converged`, not thrown.
inline GlmFit fit_glm(const TrialIPD& ipd, Formula formula, LinkFunction link, const FitOptions& options = {}) {
  const FamilyKind family = canonical_family(link);
  if (family != ipd.family) {
    throw FamilyLinkError("cannot fit a " + std::string(link.name()) + "-link model to " +
                          std::string(family_name(ipd.family)) + " outcomes");
  }
  const std::size_t n = ipd.size();
  if (ipd.arm_size(0) == 0 || ipd.arm_size(1) == 0) throw SingularDesignError("both treatment arms must be non-empty");

  GlmFit fit;
  fit.link = link;
  fit.design = make_design(ipd, formula, options);
  fit.terms = fit.design.terms(ipd.covariate_names);
  fit.n = n;
  const auto p = static_cast<Eigen::Index>(fit.design.size());
  if (static_cast<Eigen::Index>(n) <= p) throw SingularDesignError("fewer observations than coefficients");

  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), p);
  {
    Eigen::VectorXd row(p);
    for (std::size_t i = 0; i < n; ++i) {
      fit.design.fill_row(ipd.t[i], ipd.covariates(i), row.data());
      X.row(static_cast<Eigen::Index>(i)) = row.transpose();
    }
  }
  detail::check_rank(X, fit.terms);

  const Eigen::Map<const Eigen::VectorXd> y(ipd.y.data(), static_cast<Eigen::Index>(n));
  const double offset = link.kind() == LinkKind::Log ? std::log(ipd.person_time) : 0.0;

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  {
    double ybar = y.mean();
    if (link.kind() == LinkKind::Logit) ybar = std::clamp(ybar, 1e-6, 1.0 - 1e-6);
    if (link.kind() == LinkKind::Log) ybar = std::max(ybar, 1e-6);
    beta[0] = link.apply(ybar) - offset;
  }

  auto evaluate = [&](const Eigen::VectorXd& b, Eigen::VectorXd& eta, Eigen::VectorXd& mu) {
    eta = (X * b).array() + offset;
    mu = eta.unaryExpr([&](double e) { return link.inverse(e); });
    return detail::log_likelihood(family, y, eta, mu);
  };

  Eigen::VectorXd eta, mu;
  double ll = evaluate(beta, eta, mu);
  const double dn = static_cast<double>(n);
  auto weighted_information = [&](const Eigen::VectorXd& m) {
    const Eigen::VectorXd w = m.unaryExpr([&](double v) { return detail::variance_function(family, v); });
    return Eigen::MatrixXd(X.transpose() * (X.array().colwise() * w.array()).matrix());
  };

  for (fit.iterations = 0;; ++fit.iterations) {
    const Eigen::VectorXd score = X.transpose() * (y - mu);
    fit.score_norm = score.cwiseAbs().maxCoeff() / dn;
    if (fit.score_norm < options.tolerance) {
      fit.converged = true;
      break;
    }
    if (fit.iterations >= options.max_iterations) break;
    const Eigen::MatrixXd H = weighted_information(mu);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (ldlt.info() != Eigen::Success) throw SingularDesignError("information matrix is singular");
    Eigen::VectorXd step = ldlt.solve(score);
    Eigen::VectorXd trial_eta, trial_mu;
    Eigen::VectorXd candidate = beta + step;
    double trial_ll = evaluate(candidate, trial_eta, trial_mu);
    int halvings = 0;
    while (!(trial_ll >= ll - 1e-12 * std::abs(ll)) && halvings < 40) {
      step *= 0.5;
      candidate = beta + step;
      trial_ll = evaluate(candidate, trial_eta, trial_mu);
      ++halvings;
    }
    if (!(trial_ll >= ll - 1e-12 * std::abs(ll))) break;  // no ascent direction left
    beta = candidate;
    eta.swap(trial_eta);
    mu.swap(trial_mu);
    ll = trial_ll;
    if (family == FamilyKind::Bernoulli && beta.cwiseAbs().maxCoeff() > options.separation_bound) {
      Eigen::Index j = 0;
      beta.cwiseAbs().maxCoeff(&j);
      throw SeparationError("coefficient of '" + fit.terms[j] + "' diverges (|" + format_double(beta[j]) +
                            "| > " + format_double(options.separation_bound) + "): outcomes are separated");
    }
  }

  // Complete separation: every binary outcome reproduced to within 1e-8.
  if (family == FamilyKind::Bernoulli && (y - mu).cwiseAbs().maxCoeff() < 1e-8) {
    throw SeparationError("fitted probabilities are numerically 0 or 1 for every subject: outcomes are separated");
  }

  fit.coefficients = beta;
  fit.log_likelihood = ll;
  if (family == FamilyKind::Gaussian) {
    fit.dispersion = (y - mu).squaredNorm() / (dn - static_cast<double>(p));
  }
  const Eigen::MatrixXd H = weighted_information(mu);
  Eigen::MatrixXd cov = H.ldlt().solve(Eigen::MatrixXd::Identity(p, p)) * fit.dispersion;
  fit.covariance = 0.5 * (cov + cov.transpose());
  return fit;
}

}  // namespace estimand
