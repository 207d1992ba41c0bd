#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "estimand/adjustment.hpp"
#include "estimand/aggregate.hpp"
#include "estimand/estimands.hpp"
#include "estimand/maic.hpp"
#include "estimand/rng.hpp"
#include "estimand/stc.hpp"
#include "estimand/trial.hpp"

namespace estimand {

/// How the competitor (BC) trial reports its B vs C effect.
enum class BcReporting { MarginalCrude, ConditionalCoefficient };

inline std::string_view bc_reporting_name(BcReporting r) {
  return r == BcReporting::MarginalCrude ? "MarginalCrude" : "ConditionalCoefficient";
}

inline BcReporting parse_bc_reporting(std::string_view text) {
  if (text == "MarginalCrude") return BcReporting::MarginalCrude;
  if (text == "ConditionalCoefficient") return BcReporting::ConditionalCoefficient;
  throw InvalidArgument("unknown BC reporting '" + std::string(text) +
                        "' (expected MarginalCrude or ConditionalCoefficient)");
}

struct Pairing {
  Method ac_method = Method::MAIC;
  BcReporting bc_reporting = BcReporting::MarginalCrude;

  std::string name() const { return std::string(method_name(ac_method)) + "+" + std::string(bc_reporting_name(bc_reporting)); }
};

struct ScenarioConfig {
  ScenarioConfig(OutcomeModel ac, OutcomeModel bc, CovariateDistribution law_ac, CovariateDistribution law_bc)
      : model_ac(std::move(ac)), model_bc(std::move(bc)), dist_ac(std::move(law_ac)), dist_bc(std::move(law_bc)) {}

  OutcomeModel model_ac;
  OutcomeModel model_bc;
  CovariateDistribution dist_ac;
  CovariateDistribution dist_bc;
  std::size_t n_ac = 2000;
  std::size_t n_bc = 2000;
  double allocation = 0.5;
  std::vector<Pairing> pairings;
  std::vector<std::string> conditioning_set;  // BC regression adjustment set; empty means every covariate
  int replications = 2000;
  std::uint64_t seed = 1;
  bool maic_second_moments = false;
  std::optional<Formula> outcome_formula;  // STC outcome model; default follows model_ac's class
  GcompStandardError gcomp_se = GcompStandardError::DeltaMethod;
  int bootstrap_replicates = 1000;
  QuadratureSettings quadrature;
  unsigned threads = 0;  // 0: hardware concurrency

  Scale scale() const { return scale_for_link(model_ac.link()); }

  std::vector<std::string> resolved_conditioning_set() const {
    if (!conditioning_set.empty()) return conditioning_set;
    return default_covariate_names(dist_bc.dimension());
  }

  void validate() const {
    if (replications < 2) throw InvalidArgument("bench needs at least two replications");
    if (!(model_ac.link() == model_bc.link())) throw InvalidArgument("AC and BC models must share a link");
    if (dist_ac.dimension() != dist_bc.dimension()) throw ArityError("AC and BC covariate laws differ in dimension");
    if (model_ac.arity() != dist_ac.dimension() || model_bc.arity() != dist_bc.dimension()) {
      throw ArityError("model arity does not match the covariate law");
    }
    if (pairings.empty()) throw InvalidArgument("bench needs at least one (AC method, BC reporting) pairing");
    for (const auto& p : pairings)
      if (p.ac_method == Method::Regression) throw InvalidArgument("Regression is not an AC adjustment method");
  }
};

struct TrueEstimands {
  double mte_bc = 0.0;
  double ctem_bc = 0.0;
  double pacte_bc = 0.0;

  double for_label(const EstimandLabel& l) const {
    switch (l.kind) {
      case EstimandLabel::Kind::MTE: return mte_bc;
      case EstimandLabel::Kind::CTEM: return ctem_bc;
      case EstimandLabel::Kind::PACTE:
      case EstimandLabel::Kind::ConditionalOnSet: return pacte_bc;
    }
    return mte_bc;
  }
};

inline TrueEstimands estimands_in(const OutcomeModel& model, const CovariateDistribution& dist,
                                  const QuadratureSettings& settings) {
  return {mte(model, dist, settings), ctem(model, dist), pacte(model, dist, settings)};
}

/// Oracle estimands of the B vs C model in the competitor population.
inline TrueEstimands true_estimands(const ScenarioConfig& config) {
  return estimands_in(config.model_bc, config.dist_bc, config.quadrature);
}

struct BenchRow {
  std::string pairing;
  Method ac_method = Method::MAIC;
  BcReporting bc_reporting = BcReporting::MarginalCrude;
  EstimandLabel label;      // estimand of the AC method; the row is scored against it
  Scale scale = Scale::MeanDifference;
  double truth = 0.0;       // true A vs B effect for `label` in the BC population
  int replications = 0;     // successful replicates
  int failures = 0;
  double mean_est = 0.0;
  double bias = 0.0;
  double empirical_se = 0.0;
  double mc_se = 0.0;
  double coverage_95 = 0.0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  TrueEstimands truth_bc;  // model_bc in the BC population
  TrueEstimands truth_ac;  // model_ac in the BC population
  std::optional<EqualityMatrix> matrix;
  std::string matrix_title;
};

namespace detail {

struct ReplicateOutcome {
  std::vector<std::optional<ITCResult>> itc;  // one per pairing
};

inline ReplicateOutcome run_replicate(const ScenarioConfig& c, int r) {
  ReplicateOutcome out;
  out.itc.assign(c.pairings.size(), std::nullopt);
  const auto scale = c.scale();
  const auto link = c.model_ac.link();
  TrialIPD ac_ipd, bc_ipd;
  AggregateSummary bc;
  try {
    ac_ipd = simulate_trial({c.model_ac, c.dist_ac, c.n_ac, c.allocation, stream_key(c.seed, r, 0)});
    bc_ipd = simulate_trial({c.model_bc, c.dist_bc, c.n_bc, c.allocation, stream_key(c.seed, r, 1)});
    const bool needs_conditional = std::any_of(c.pairings.begin(), c.pairings.end(), [](const Pairing& p) {
      return p.bc_reporting == BcReporting::ConditionalCoefficient;
    });
    AggregateOptions opts;
    if (needs_conditional) opts.conditioning_set = c.resolved_conditioning_set();
    bc = aggregate(bc_ipd, scale, opts);
  } catch (const Error&) {
    return out;
  }

  const Formula formula = c.outcome_formula.value_or(formula_for(c.model_ac.model_class()));
  std::optional<AdjustmentResult> ac_cache[5];
  bool ac_failed[5] = {false, false, false, false, false};
  auto ac_result = [&](Method m) -> std::optional<AdjustmentResult> {
    const auto slot = static_cast<int>(m);
    if (ac_cache[slot] || ac_failed[slot]) return ac_cache[slot];
    try {
      switch (m) {
        case Method::MAIC: {
          const auto w = maic_weights(ac_ipd, bc.covariate_means, bc.covariate_sds, c.maic_second_moments);
          ac_cache[slot] = maic_estimate(ac_ipd, w, scale);
          break;
        }
        case Method::STCPlugin:
          ac_cache[slot] = stc_plugin(ac_ipd, bc.covariate_means, link, {formula, {}});
          break;
        case Method::STCGcomp: {
          GcompOptions g;
          g.formula = formula;
          g.quadrature = c.quadrature;
          g.se_method = c.gcomp_se;
          g.bootstrap_replicates = c.bootstrap_replicates;
          g.seed = stream_key(c.seed, r, 2);
          const auto target = match_moments(c.dist_bc, bc.covariate_means, bc.covariate_sds);
          ac_cache[slot] = stc_gcomp(ac_ipd, target, link, g);
          break;
        }
        case Method::Crude:
          ac_cache[slot] = crude_result(aggregate(ac_ipd, scale), "AC");
          break;
        case Method::Regression: break;
      }
    } catch (const Error&) {
      ac_failed[slot] = true;
    }
    return ac_cache[slot];
  };

  for (std::size_t k = 0; k < c.pairings.size(); ++k) {
    const auto& p = c.pairings[k];
    const auto ac = ac_result(p.ac_method);
    if (!ac) continue;
    try {
      const auto bcr = p.bc_reporting == BcReporting::MarginalCrude ? crude_result(bc) : conditional_result(bc);
      out.itc[k] = anchored_itc(*ac, bcr);
    } catch (const Error&) {
    }
  }
  return out;
}

}  // namespace detail

/// Monte Carlo study of anchored comparisons. Each replicate simulates both
/// trials from streams keyed by (seed, replicate), estimates A vs C with each
/// AC method, takes B vs C as the BC trial would report it, and anchors. Rows
/// are scored against the true A vs B effect for the AC method's estimand.
inline BenchReport run_scenario(const ScenarioConfig& config) {
  config.validate();
  BenchReport report;
  report.truth_bc = true_estimands(config);
  report.truth_ac = estimands_in(config.model_ac, config.dist_bc, config.quadrature);
  report.matrix = equality_matrix(config.model_bc, config.dist_bc, config.quadrature);
  report.matrix_title = "BC population: " + std::string(model_class_name(config.model_bc.model_class())) +
                        " model, " + std::string(config.model_bc.link().name()) + " link, X ~ " +
                        config.dist_bc.describe();

  const int R = config.replications;
  std::vector<detail::ReplicateOutcome> outcomes(static_cast<std::size_t>(R));
  unsigned threads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(R));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < R; r = next++) outcomes[static_cast<std::size_t>(r)] = detail::run_replicate(config, r);
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  constexpr double z975 = 1.959963984540054;
  for (std::size_t k = 0; k < config.pairings.size(); ++k) {
    const auto& p = config.pairings[k];
    BenchRow row;
    row.pairing = p.name();
    row.ac_method = p.ac_method;
    row.bc_reporting = p.bc_reporting;
    row.label = label_for(p.ac_method);
    row.scale = config.scale();
    row.truth = report.truth_ac.for_label(row.label) - report.truth_bc.for_label(row.label);
    std::vector<double> est;
    int covered = 0;
    for (const auto& o : outcomes) {
      if (!o.itc[k]) {
        ++row.failures;
        continue;
      }
      est.push_back(o.itc[k]->delta_ab);
      if (std::abs(o.itc[k]->delta_ab - row.truth) <= z975 * o.itc[k]->se) ++covered;
    }
    if (row.failures * 20 > R) {
      throw ReplicateFailureError(row.pairing + ": " + std::to_string(row.failures) + " of " + std::to_string(R) +
                                  " replicates failed (more than 5%)");
    }
    row.replications = static_cast<int>(est.size());
    const double m = static_cast<double>(est.size());
    for (double e : est) row.mean_est += e;
    row.mean_est /= m;
    double ss = 0.0;
    for (double e : est) ss += (e - row.mean_est) * (e - row.mean_est);
    row.empirical_se = est.size() > 1 ? std::sqrt(ss / (m - 1.0)) : 0.0;
    row.mc_se = row.empirical_se / std::sqrt(m);
    row.bias = row.mean_est - row.truth;
    row.coverage_95 = covered / m;
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace estimand
