#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "estimand/adjustment.hpp"
#include "estimand/covariate.hpp"
#include "estimand/errors.hpp"
#include "estimand/glm.hpp"
#include "estimand/quadrature.hpp"
#include "estimand/rng.hpp"
#include "estimand/trial.hpp"

namespace estimand {

struct StcOptions {
  Formula formula = Formula::Interaction;
  std::vector<std::string> covariates;  // empty: every IPD covariate
};

/// Plug-in ("mean-centring") simulated treatment comparison. Covariates are
/// centred at the target means before fitting, so the treatment coefficient
/// is the conditional effect at the target means.
inline AdjustmentResult stc_plugin(const TrialIPD& ipd, std::span<const double> target_means, LinkFunction link,
                                   const StcOptions& options = {}, std::string population = "BC") {
  if (options.formula == Formula::TreatmentOnly) throw InvalidArgument("plug-in STC needs a covariate formula");
  FitOptions fo;
  fo.covariates = options.covariates;
  const std::size_t selected = fo.covariates.empty() ? ipd.covariate_count() : fo.covariates.size();
  if (target_means.size() == ipd.covariate_count() && !fo.covariates.empty()) {
    for (const auto& name : fo.covariates) fo.centering.push_back(target_means[ipd.covariate_index(name)]);
  } else if (target_means.size() == selected) {
    fo.centering.assign(target_means.begin(), target_means.end());
  } else {
    throw ArityError("plug-in STC got " + std::to_string(target_means.size()) + " target means for " +
                     std::to_string(selected) + " covariates");
  }
  const auto fit = fit_glm(ipd, options.formula, link, fo);
  AdjustmentResult r;
  r.estimate = fit.treatment_coefficient();
  r.se = fit.treatment_se();
  r.scale = scale_for_link(link);
  r.method = Method::STCPlugin;
  r.label = label_for(Method::STCPlugin);
  r.population = std::move(population);
  r.validate();
  return r;
}

enum class GcompStandardError { Bootstrap, DeltaMethod };

struct GcompOptions {
  Formula formula = Formula::Interaction;
  std::vector<std::string> covariates;
  QuadratureSettings quadrature;  // quadrature.mc_draws plays the role of n_sim for sampled targets
  GcompStandardError se_method = GcompStandardError::Bootstrap;
  int bootstrap_replicates = 1000;
  std::uint64_t seed = 7;
};

namespace detail {

struct GcompPoint {
  double estimate = 0.0;
  Eigen::VectorXd gradient;  // d estimate / d coefficients
};

// Standardises a fitted outcome model over `target`: E_X g^{-1}(eta_t(X)) for
// t = 0, 1 then g(m1) - g(m0).
inline GcompPoint gcomp_point(const GlmFit& fit, const CovariateDistribution& target, double offset,
                              const QuadratureSettings& settings, bool with_gradient) {
  const auto g = fit.link;
  const Eigen::Index p = fit.coefficients.size();
  double m[2] = {0.0, 0.0};
  Eigen::VectorXd dm[2] = {Eigen::VectorXd::Zero(p), Eigen::VectorXd::Zero(p)};
  Eigen::VectorXd row(p);
  for_each_node(target, settings, settings.nodes, [&](std::span<const double> x, double w) {
    for (int t = 0; t <= 1; ++t) {
      fit.design.fill_row(t, x, row.data());
      const double eta = row.dot(fit.coefficients) + offset;
      const double mu = g.inverse(eta);
      if (!std::isfinite(mu)) throw DomainError("predicted mean is not finite at node " + format_point(x));
      m[t] += w * mu;
      if (with_gradient) dm[t] += (w * g.inverse_derivative(eta)) * row;
    }
  });
  if (!g.in_domain(m[0]) || !g.in_domain(m[1])) {
    throw DomainError("standardised means lie outside the " + std::string(g.name()) + " link domain");
  }
  GcompPoint out;
  out.estimate = g.apply(m[1]) - g.apply(m[0]);
  if (with_gradient) out.gradient = g.derivative(m[1]) * dm[1] - g.derivative(m[0]) * dm[0];
  return out;
}

}  // namespace detail

/// G-computation simulated treatment comparison: fits the outcome model,
/// predicts both potential outcomes over the target covariate law (Gauss-
/// Hermite or exact sums; Monte Carlo beyond the tensor limit), averages on
/// the natural scale and contrasts on the link scale. Targets the MTE.
inline AdjustmentResult stc_gcomp(const TrialIPD& ipd, const CovariateDistribution& target_dist, LinkFunction link,
                                  const GcompOptions& options = {}, std::string population = "BC") {
  if (target_dist.dimension() != ipd.covariate_count()) {
    throw ArityError("target law has " + std::to_string(target_dist.dimension()) + " components, IPD has " +
                     std::to_string(ipd.covariate_count()) + " covariates");
  }
  FitOptions fo;
  fo.covariates = options.covariates;
  const double offset = link.kind() == LinkKind::Log ? std::log(ipd.person_time) : 0.0;
  const auto fit = fit_glm(ipd, options.formula, link, fo);
  const bool delta = options.se_method == GcompStandardError::DeltaMethod;
  const auto point = detail::gcomp_point(fit, target_dist, offset, options.quadrature, delta);

  AdjustmentResult r;
  r.estimate = point.estimate;
  r.scale = scale_for_link(link);
  r.method = Method::STCGcomp;
  r.label = label_for(Method::STCGcomp);
  r.population = std::move(population);

  if (delta) {
    r.se = std::sqrt(std::max(0.0, double(point.gradient.transpose() * fit.covariance * point.gradient)));
  } else {
    if (options.bootstrap_replicates < 2) throw InvalidArgument("bootstrap needs at least two replicates");
    const std::size_t n = ipd.size();
    std::vector<double> estimates;
    estimates.reserve(options.bootstrap_replicates);
    int failures = 0;
    std::vector<std::size_t> rows(n);
    for (int b = 0; b < options.bootstrap_replicates; ++b) {
      auto rng = CounterRng::for_stream(options.seed, static_cast<std::uint64_t>(b));
      for (auto& idx : rows) idx = static_cast<std::size_t>(rng() % n);
      try {
        const auto resample = ipd.subset(rows);
        const auto bfit = fit_glm(resample, options.formula, link, fo);
        estimates.push_back(detail::gcomp_point(bfit, target_dist, offset, options.quadrature, false).estimate);
      } catch (const Error&) {
        ++failures;
      }
    }
    if (failures > options.bootstrap_replicates / 20) {
      throw ReplicateFailureError(std::to_string(failures) + " of " + std::to_string(options.bootstrap_replicates) +
                                  " bootstrap replicates failed");
    }
    double mean = 0.0;
    for (double e : estimates) mean += e;
    mean /= static_cast<double>(estimates.size());
    double ss = 0.0;
    for (double e : estimates) ss += (e - mean) * (e - mean);
    r.se = std::sqrt(ss / static_cast<double>(estimates.size() - 1));
  }
  r.validate();
  return r;
}

}  // namespace estimand
