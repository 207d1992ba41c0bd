#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "estimand/aggregate.hpp"
#include "estimand/errors.hpp"
#include "estimand/format.hpp"
#include "estimand/link.hpp"

namespace estimand {

/// The estimand an effect estimate targets.
struct EstimandLabel {
  enum class Kind { MTE, CTEM, PACTE, ConditionalOnSet };

  Kind kind = Kind::MTE;
  std::vector<std::string> conditioning_set;  // ConditionalOnSet only, kept sorted

  static EstimandLabel mte() { return {Kind::MTE, {}}; }
  static EstimandLabel ctem() { return {Kind::CTEM, {}}; }
  static EstimandLabel pacte() { return {Kind::PACTE, {}}; }
  static EstimandLabel conditional_on(std::vector<std::string> set) {
    std::sort(set.begin(), set.end());
    set.erase(std::unique(set.begin(), set.end()), set.end());
    return {Kind::ConditionalOnSet, std::move(set)};
  }

  bool is_marginal() const { return kind == Kind::MTE; }

  std::string to_string() const {
    switch (kind) {
      case Kind::MTE: return "MTE";
      case Kind::CTEM: return "CTEM";
      case Kind::PACTE: return "PACTE";
      case Kind::ConditionalOnSet: return "CONDITIONAL-ON-SET{" + join(conditioning_set, ";") + "}";
    }
    return "?";
  }

  friend bool operator==(const EstimandLabel&, const EstimandLabel&) = default;
};

enum class Method { Crude, MAIC, STCPlugin, STCGcomp, Regression };

inline std::string_view method_name(Method m) {
  switch (m) {
    case Method::Crude: return "Crude";
    case Method::MAIC: return "MAIC";
    case Method::STCPlugin: return "STCPlugin";
    case Method::STCGcomp: return "STCGcomp";
    case Method::Regression: return "Regression";
  }
  return "?";
}

inline Method parse_method(std::string_view text) {
  for (Method m : {Method::Crude, Method::MAIC, Method::STCPlugin, Method::STCGcomp, Method::Regression})
    if (method_name(m) == text) return m;
  throw InvalidArgument("unknown method '" + std::string(text) + "' (expected Crude, MAIC, STCPlugin or STCGcomp)");
}

/// Estimand targeted by each adjustment method: MAIC and G-computation STC
/// target the MTE, plug-in STC the CTEM, a crude contrast of arm summaries
/// the MTE, and a covariate-adjusted regression coefficient the conditional
/// effect given its adjustment set.
inline EstimandLabel label_for(Method m, std::vector<std::string> conditioning_set = {}) {
  switch (m) {
    case Method::Crude:
    case Method::MAIC:
    case Method::STCGcomp: return EstimandLabel::mte();
    case Method::STCPlugin: return EstimandLabel::ctem();
    case Method::Regression: return EstimandLabel::conditional_on(std::move(conditioning_set));
  }
  return EstimandLabel::mte();
}

/// Methodology-to-estimand taxonomy, including methods that are listed for
/// reference but not implemented here.
struct TaxonomyEntry {
  std::string_view methodology;
  std::string_view estimands;
  bool implemented;
};

inline const std::vector<TaxonomyEntry>& method_taxonomy() {
  static const std::vector<TaxonomyEntry> table = {
      {"Matching-adjusted indirect comparison", "MTE", true},
      {"Simulated treatment comparison (plug-in)", "CTEM", true},
      {"Simulated treatment comparison (G-computation)", "MTE", true},
      {"Multilevel network meta-regression", "PACTE and MTE", false},
      {"Network meta-interpolation", "CTEM", false},
      {"Cross-network meta-regression", "CTEM", false},
  };
  return table;
}

/// An effect estimate with the estimand it targets.
struct AdjustmentResult {
  double estimate = 0.0;
  double se = 0.0;
  Scale scale = Scale::MeanDifference;
  EstimandLabel label;
  Method method = Method::Crude;
  std::string population = "BC";

  void validate() const {
    if (!std::isfinite(estimate) || !std::isfinite(se) || se < 0.0) {
      throw DomainError(std::string(method_name(method)) + " produced a non-finite estimate or standard error");
    }
  }
};

/// Crude marginal estimate from a published summary.
inline AdjustmentResult crude_result(const AggregateSummary& s, std::string population = "BC") {
  AdjustmentResult r{s.marginal.value, s.marginal.se, s.marginal.scale, label_for(Method::Crude), Method::Crude,
                     std::move(population)};
  return r;
}

/// Published covariate-adjusted coefficient from a summary.
inline AdjustmentResult conditional_result(const AggregateSummary& s, std::string population = "BC") {
  if (!s.conditional) throw InvalidArgument("summary carries no conditional estimate");
  const auto& c = *s.conditional;
  return {c.value, c.se, c.scale, label_for(Method::Regression, c.conditioning_set), Method::Regression,
          std::move(population)};
}

/// Anchored indirect comparison of A vs B through the common comparator C.
struct ITCResult {
  double delta_ab = 0.0;
  double se = 0.0;
  std::string population_tag;
  AdjustmentResult ac;
  AdjustmentResult bc;
};

inline ITCResult anchored_itc(const AdjustmentResult& ac, const AdjustmentResult& bc) {
  if (ac.scale != bc.scale) {
    throw ScaleMismatchError("cannot anchor a " + std::string(scale_name(ac.scale)) + " estimate against a " +
                             std::string(scale_name(bc.scale)) + " estimate");
  }
  ITCResult r;
  r.delta_ab = ac.estimate - bc.estimate;
  r.se = std::sqrt(ac.se * ac.se + bc.se * bc.se);
  r.population_tag = ac.population == bc.population ? ac.population : ac.population + "|" + bc.population;
  r.ac = ac;
  r.bc = bc;
  return r;
}

struct Compatibility {
  bool compatible = false;
  std::string diagnosis;
};

/// Whether two estimates target the same estimand on the same scale. The
/// diagnosis does not depend on argument order.
inline Compatibility compatibility_check(const AdjustmentResult& x, const AdjustmentResult& y) {
  std::vector<std::string> problems;
  if (x.scale != y.scale) {
    auto a = std::string(scale_name(x.scale));
    auto b = std::string(scale_name(y.scale));
    if (b < a) std::swap(a, b);
    problems.push_back("scales differ (" + a + " vs " + b + ")");
  }
  const auto& lx = x.label;
  const auto& ly = y.label;
  if (lx.is_marginal() != ly.is_marginal()) {
    problems.push_back("marginal vs conditional");
  } else if (lx.kind != ly.kind) {
    auto a = lx.to_string();
    auto b = ly.to_string();
    if (b < a) std::swap(a, b);
    problems.push_back("different conditional estimands (" + a + " vs " + b + ")");
  } else if (lx.kind == EstimandLabel::Kind::ConditionalOnSet && lx.conditioning_set != ly.conditioning_set) {
    auto a = join(lx.conditioning_set, ";");
    auto b = join(ly.conditioning_set, ";");
    if (b < a) std::swap(a, b);
    problems.push_back("conditioning sets differ ({" + a + "} vs {" + b + "})");
  }
  if (problems.empty()) return {true, "compatible: both target " + lx.to_string() + " on " +
                                          std::string(scale_name(x.scale)) + " scale"};
  return {false, join(problems, "; ")};
}

// ---------------------------------------------------------------------------
// CSV

inline void write_adjustment_csv_header(std::ostream& os) {
  os << "method,estimand_label,scale,population,estimate,se\n";
}

inline void write_adjustment_csv_row(std::ostream& os, const AdjustmentResult& r) {
  os << method_name(r.method) << ',' << r.label.to_string() << ',' << scale_name(r.scale) << ',' << r.population
     << ',' << format_double(r.estimate) << ',' << format_double(r.se) << '\n';
}

inline void write_itc_csv_header(std::ostream& os) {
  os << "ac_method,ac_estimand_label,bc_method,bc_estimand_label,scale,population,delta_ab,se,compatible,"
        "diagnosis\n";
}

inline void write_itc_csv_row(std::ostream& os, const ITCResult& r) {
  const auto c = compatibility_check(r.ac, r.bc);
  os << method_name(r.ac.method) << ',' << r.ac.label.to_string() << ',' << method_name(r.bc.method) << ','
     << r.bc.label.to_string() << ',' << scale_name(r.ac.scale) << ',' << r.population_tag << ','
     << format_double(r.delta_ab) << ',' << format_double(r.se) << ',' << (c.compatible ? "true" : "false") << ",\""
     << c.diagnosis << "\"\n";
}

}  // namespace estimand
