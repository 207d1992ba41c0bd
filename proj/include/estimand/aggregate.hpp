#pragma once

#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "estimand/errors.hpp"
#include "estimand/format.hpp"
#include "estimand/glm.hpp"
#include "estimand/link.hpp"
#include "estimand/trial.hpp"

namespace estimand {

/// 2x2 table: a = (t=1, y=1), b = (t=1, y=0), c = (t=0, y=1), d = (t=0, y=0).
struct BinaryTable {
  double a = 0, b = 0, c = 0, d = 0;
  double total() const { return a + b + c + d; }
};

struct ContinuousArms {
  double mean1 = 0, sd1 = 0, n1 = 0;
  double mean0 = 0, sd0 = 0, n0 = 0;
};

struct CountArms {
  double events1 = 0, exposure1 = 0;
  double events0 = 0, exposure0 = 0;
};

using ArmSummary = std::variant<BinaryTable, ContinuousArms, CountArms>;

struct EffectEstimate {
  double value = 0.0;
  double se = 0.0;
  Scale scale = Scale::MeanDifference;
};

/// A conditional estimate as a trial would publish it: the treatment
/// coefficient of a regression adjusting for `conditioning_set`.
struct ConditionalEstimate {
  double value = 0.0;
  double se = 0.0;
  Scale scale = Scale::MeanDifference;
  std::vector<std::string> conditioning_set;
};

/// Publication-style summary of one trial.
struct AggregateSummary {
  std::size_t n = 0;
  std::vector<std::string> covariate_names;
  std::vector<double> covariate_means;
  std::vector<double> covariate_sds;
  ArmSummary arms;
  EffectEstimate marginal;
  std::optional<ConditionalEstimate> conditional;
};

struct AggregateOptions {
  bool continuity_correction = false;  // add 0.5 to every cell of a 2x2 table with a zero cell
  std::optional<std::vector<std::string>> conditioning_set;  // also report a conditional estimate
};

/// Crude marginal effect from a 2x2 table on the requested scale.
inline EffectEstimate table_estimate(BinaryTable t, Scale scale, bool continuity_correction = false) {
  const bool zero = t.a == 0 || t.b == 0 || t.c == 0 || t.d == 0;
  if (zero && continuity_correction) {
    t.a += 0.5;
    t.b += 0.5;
    t.c += 0.5;
    t.d += 0.5;
  }
  const double n1 = t.a + t.b;
  const double n0 = t.c + t.d;
  if (n1 <= 0 || n0 <= 0) throw DegenerateTableError("both arms of the 2x2 table must be non-empty");
  EffectEstimate e;
  e.scale = scale;
  switch (scale) {
    case Scale::LogOddsRatio:
      if (t.a == 0 || t.b == 0 || t.c == 0 || t.d == 0) {
        throw DegenerateTableError("2x2 table has a zero cell; the log odds ratio is undefined "
                                   "(enable the continuity correction to proceed)");
      }
      e.value = std::log(t.a * t.d / (t.b * t.c));
      e.se = std::sqrt(1 / t.a + 1 / t.b + 1 / t.c + 1 / t.d);
      break;
    case Scale::LogRiskRatio:
      if (t.a == 0 || t.c == 0) {
        throw DegenerateTableError("an arm has no events; the log risk ratio is undefined "
                                   "(enable the continuity correction to proceed)");
      }
      e.value = std::log((t.a / n1) / (t.c / n0));
      e.se = std::sqrt(1 / t.a - 1 / n1 + 1 / t.c - 1 / n0);
      break;
    case Scale::RiskDifference: {
      const double p1 = t.a / n1;
      const double p0 = t.c / n0;
      e.value = p1 - p0;
      e.se = std::sqrt(p1 * (1 - p1) / n1 + p0 * (1 - p0) / n0);
      break;
    }
    case Scale::MeanDifference:
      throw InvalidArgument("binary outcomes are summarised on risk-difference, log-risk-ratio or log-odds-ratio scales");
  }
  return e;
}

inline EffectEstimate continuous_estimate(const ContinuousArms& a) {
  if (a.n1 < 1 || a.n0 < 1) throw DegenerateTableError("both arms must be non-empty");
  EffectEstimate e;
  e.scale = Scale::MeanDifference;
  e.value = a.mean1 - a.mean0;
  const double dof = a.n1 + a.n0 - 2;
  const double pooled = dof > 0 ? ((a.n1 - 1) * a.sd1 * a.sd1 + (a.n0 - 1) * a.sd0 * a.sd0) / dof : 0.0;
  e.se = std::sqrt(pooled * (1 / a.n1 + 1 / a.n0));
  return e;
}

inline EffectEstimate count_estimate(const CountArms& a) {
  if (a.events1 <= 0 || a.events0 <= 0) throw DegenerateTableError("an arm has no events; the log rate ratio is undefined");
  EffectEstimate e;
  e.scale = Scale::LogRiskRatio;
  e.value = std::log((a.events1 / a.exposure1) / (a.events0 / a.exposure0));
  e.se = std::sqrt(1 / a.events1 + 1 / a.events0);
  return e;
}

/// Summarises `ipd` the way a publication would: covariate means and sds,
/// per-arm outcome summaries, a crude marginal estimate on `scale` and,
/// optionally, a conditional estimate adjusted for a covariate set.
inline AggregateSummary aggregate(const TrialIPD& ipd, Scale scale, const AggregateOptions& options = {}) {
  const std::size_t n = ipd.size();
  const std::size_t k = ipd.covariate_count();
  if (ipd.arm_size(0) == 0 || ipd.arm_size(1) == 0) throw DegenerateTableError("both arms must be non-empty");
  AggregateSummary s;
  s.n = n;
  s.covariate_names = ipd.covariate_names;
  s.covariate_means.assign(k, 0.0);
  s.covariate_sds.assign(k, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    double m = 0;
    for (std::size_t i = 0; i < n; ++i) m += ipd.covariate(i, j);
    m /= static_cast<double>(n);
    double v = 0;
    for (std::size_t i = 0; i < n; ++i) v += (ipd.covariate(i, j) - m) * (ipd.covariate(i, j) - m);
    s.covariate_means[j] = m;
    s.covariate_sds[j] = n > 1 ? std::sqrt(v / static_cast<double>(n - 1)) : 0.0;
  }

  switch (ipd.family) {
    case FamilyKind::Bernoulli: {
      BinaryTable t;
      for (std::size_t i = 0; i < n; ++i) {
        const bool ev = ipd.y[i] == 1.0;
        if (ipd.t[i] == 1) (ev ? t.a : t.b) += 1;
        else (ev ? t.c : t.d) += 1;
      }
      s.arms = t;
      s.marginal = table_estimate(t, scale, options.continuity_correction);
      break;
    }
    case FamilyKind::Gaussian: {
      if (scale != Scale::MeanDifference) throw InvalidArgument("continuous outcomes use the mean-difference scale");
      ContinuousArms a;
      double s1 = 0, s0 = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (ipd.t[i] == 1) {
          a.n1 += 1;
          s1 += ipd.y[i];
        } else {
          a.n0 += 1;
          s0 += ipd.y[i];
        }
      }
      a.mean1 = s1 / a.n1;
      a.mean0 = s0 / a.n0;
      double q1 = 0, q0 = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (ipd.t[i] == 1) q1 += (ipd.y[i] - a.mean1) * (ipd.y[i] - a.mean1);
        else q0 += (ipd.y[i] - a.mean0) * (ipd.y[i] - a.mean0);
      }
      a.sd1 = a.n1 > 1 ? std::sqrt(q1 / (a.n1 - 1)) : 0.0;
      a.sd0 = a.n0 > 1 ? std::sqrt(q0 / (a.n0 - 1)) : 0.0;
      s.arms = a;
      s.marginal = continuous_estimate(a);
      break;
    }
    case FamilyKind::Poisson: {
      if (scale != Scale::LogRiskRatio) throw InvalidArgument("count outcomes use the log-risk-ratio (rate ratio) scale");
      CountArms a;
      for (std::size_t i = 0; i < n; ++i) {
        if (ipd.t[i] == 1) {
          a.events1 += ipd.y[i];
          a.exposure1 += ipd.person_time;
        } else {
          a.events0 += ipd.y[i];
          a.exposure0 += ipd.person_time;
        }
      }
      s.arms = a;
      s.marginal = count_estimate(a);
      break;
    }
  }

  if (options.conditioning_set) {
    FitOptions fo;
    fo.covariates = *options.conditioning_set;
    const auto link = canonical_link(ipd.family);
    const auto fit = fit_glm(ipd, fo.covariates.empty() ? Formula::TreatmentOnly : Formula::MainEffects, link, fo);
    s.conditional = ConditionalEstimate{fit.treatment_coefficient(), fit.treatment_se(), scale_for_link(link),
                                        *options.conditioning_set};
  }
  return s;
}

// ---------------------------------------------------------------------------
// Flat key-value CSV

inline void write_aggregate_csv(std::ostream& os, const AggregateSummary& s) {
  os << "key,value\n";
  os << "n," << s.n << '\n';
  os << "covariates," << join(s.covariate_names, ";") << '\n';
  for (std::size_t j = 0; j < s.covariate_names.size(); ++j) {
    os << "mean." << s.covariate_names[j] << ',' << format_double(s.covariate_means[j]) << '\n';
    os << "sd." << s.covariate_names[j] << ',' << format_double(s.covariate_sds[j]) << '\n';
  }
  std::visit(detail::overloaded{
                 [&](const BinaryTable& t) {
                   os << "outcome,binary\n";
                   os << "table.a," << format_double(t.a) << "\ntable.b," << format_double(t.b) << '\n';
                   os << "table.c," << format_double(t.c) << "\ntable.d," << format_double(t.d) << '\n';
                 },
                 [&](const ContinuousArms& a) {
                   os << "outcome,continuous\n";
                   os << "arm1.mean," << format_double(a.mean1) << "\narm1.sd," << format_double(a.sd1)
                      << "\narm1.n," << format_double(a.n1) << '\n';
                   os << "arm0.mean," << format_double(a.mean0) << "\narm0.sd," << format_double(a.sd0)
                      << "\narm0.n," << format_double(a.n0) << '\n';
                 },
                 [&](const CountArms& a) {
                   os << "outcome,count\n";
                   os << "arm1.events," << format_double(a.events1) << "\narm1.exposure," << format_double(a.exposure1)
                      << '\n';
                   os << "arm0.events," << format_double(a.events0) << "\narm0.exposure," << format_double(a.exposure0)
                      << '\n';
                 },
             },
             s.arms);
  os << "marginal.estimand,MTE\n";
  os << "marginal.scale," << scale_name(s.marginal.scale) << '\n';
  os << "marginal.value," << format_double(s.marginal.value) << '\n';
  os << "marginal.se," << format_double(s.marginal.se) << '\n';
  if (s.conditional) {
    os << "conditional.estimand,CONDITIONAL-ON-SET\n";
    os << "conditional.scale," << scale_name(s.conditional->scale) << '\n';
    os << "conditional.value," << format_double(s.conditional->value) << '\n';
    os << "conditional.se," << format_double(s.conditional->se) << '\n';
    os << "conditional.set," << join(s.conditional->conditioning_set, ";") << '\n';
  }
}

inline AggregateSummary read_aggregate_csv(std::istream& is) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto pos = line.find(',');
    if (pos == std::string::npos) {
      throw InvalidArgument("aggregate CSV line " + std::to_string(line_no) + ": expected key,value");
    }
    std::string value = line.substr(pos + 1);
    if (!value.empty() && value.back() == '\r') value.pop_back();
    kv[line.substr(0, pos)] = value;
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw InvalidArgument("aggregate CSV is missing key '" + key + "'");
    return it->second;
  };
  auto num = [&](const std::string& key) { return parse_double(get(key), key); };

  AggregateSummary s;
  s.n = static_cast<std::size_t>(num("n"));
  const auto& cov = get("covariates");
  if (!cov.empty()) s.covariate_names = split(cov, ';');
  for (const auto& name : s.covariate_names) {
    s.covariate_means.push_back(num("mean." + name));
    s.covariate_sds.push_back(num("sd." + name));
  }
  const auto& outcome = get("outcome");
  if (outcome == "binary") {
    s.arms = BinaryTable{num("table.a"), num("table.b"), num("table.c"), num("table.d")};
  } else if (outcome == "continuous") {
    s.arms = ContinuousArms{num("arm1.mean"), num("arm1.sd"), num("arm1.n"),
                            num("arm0.mean"), num("arm0.sd"), num("arm0.n")};
  } else if (outcome == "count") {
    s.arms = CountArms{num("arm1.events"), num("arm1.exposure"), num("arm0.events"), num("arm0.exposure")};
  } else {
    throw InvalidArgument("aggregate CSV: unknown outcome type '" + outcome + "'");
  }
  s.marginal = {num("marginal.value"), num("marginal.se"), parse_scale(get("marginal.scale"))};
  if (kv.count("conditional.value")) {
    ConditionalEstimate c;
    c.value = num("conditional.value");
    c.se = num("conditional.se");
    c.scale = parse_scale(get("conditional.scale"));
    const auto& set = get("conditional.set");
    if (!set.empty()) c.conditioning_set = split(set, ';');
    s.conditional = c;
  }
  return s;
}

}  // namespace estimand
