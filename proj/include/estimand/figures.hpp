#pragma once

#include <array>
#include <string>
#include <vector>

#include "estimand/estimands.hpp"

namespace estimand {

/// One reference equality pattern: a model class crossed with a link and the
/// expected shading.
struct FigurePanel {
  std::string id;  // "1a" ... "3c"
  ModelClass model_class;
  LinkFunction link;
  EqualityMatrix expected;
};

/// Representative coefficients per model class, used with X ~ N(0.5, 1).
inline Coefficients canonical_coefficients(ModelClass c) {
  switch (c) {
    case ModelClass::Homogeneous: return Homogeneous{0.5, 1.0, 1.0};
    case ModelClass::LinearHeterogeneous: return LinearHeterogeneous{0.5, 1.0, 1.0, 0.5};
    case ModelClass::Quadratic: return Quadratic{0.5, 0.5, -0.3, 1.0, 0.4, 0.3};
  }
  return Homogeneous{};
}

inline CovariateDistribution canonical_distribution() { return CovariateDistribution::normal(0.5, 1.0); }

inline std::vector<FigurePanel> figure_panels() {
  const auto all = EqualityMatrix::from_pairs(true, true, true);
  const auto ctem_pacte = EqualityMatrix::from_pairs(false, false, true);
  const auto mte_pacte = EqualityMatrix::from_pairs(false, true, false);
  const auto none = EqualityMatrix::from_pairs(false, false, false);
  const auto id = LinkFunction::identity();
  const auto lg = LinkFunction::log();
  const auto lt = LinkFunction::logit();
  return {
      {"1a", ModelClass::Homogeneous, id, all},
      {"1b", ModelClass::Homogeneous, lg, all},
      {"1c", ModelClass::Homogeneous, lt, ctem_pacte},
      {"2a", ModelClass::LinearHeterogeneous, id, all},
      {"2b", ModelClass::LinearHeterogeneous, lg, ctem_pacte},
      {"2c", ModelClass::LinearHeterogeneous, lt, ctem_pacte},
      {"3a", ModelClass::Quadratic, id, mte_pacte},
      {"3b", ModelClass::Quadratic, lg, none},
      {"3c", ModelClass::Quadratic, lt, none},
  };
}

inline std::string panel_title(const FigurePanel& p) {
  std::string scale;
  switch (p.link.kind()) {
    case LinkKind::Identity: scale = "mean difference"; break;
    case LinkKind::Log: scale = "log risk ratio"; break;
    case LinkKind::Logit: scale = "log odds ratio"; break;
  }
  return "Panel " + p.id + ": " + std::string(model_class_name(p.model_class)) + " model, " +
         std::string(p.link.name()) + " link, " + scale;
}

struct PanelCheck {
  FigurePanel panel;
  EstimandReport report;
  EqualityMatrix observed;
  bool matches = false;
};

/// Evaluates one panel for a given model (same class and link as the panel).
inline PanelCheck check_panel(const FigurePanel& panel, const OutcomeModel& model, const CovariateDistribution& dist,
                              const QuadratureSettings& settings = {}) {
  PanelCheck c{panel, compute_estimands(model, dist, settings), {}, false};
  c.observed = equality_matrix(c.report);
  c.matches = c.observed == panel.expected;
  return c;
}

/// All nine panels under the canonical parameterisations.
inline std::vector<PanelCheck> verify_figures(const QuadratureSettings& settings = {}) {
  std::vector<PanelCheck> out;
  const auto dist = canonical_distribution();
  for (const auto& p : figure_panels()) {
    const auto model = OutcomeModel::canonical(p.link, canonical_coefficients(p.model_class));
    out.push_back(check_panel(p, model, dist, settings));
  }
  return out;
}

}  // namespace estimand
