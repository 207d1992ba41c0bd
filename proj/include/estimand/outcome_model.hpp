#pragma once

#include <cmath>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "estimand/covariate.hpp"
#include "estimand/errors.hpp"
#include "estimand/link.hpp"

namespace estimand {

/// E(Y^t | X) = g^{-1}(b0 + bx X + bt t)
struct Homogeneous {
  double beta0 = 0.0;
  double beta_x = 0.0;
  double beta_t = 0.0;
};

/// E(Y^t | X) = g^{-1}(b0 + bx X + bt t + bxt X t)
struct LinearHeterogeneous {
  double beta0 = 0.0;
  double beta_x = 0.0;
  double beta_t = 0.0;
  double beta_xt = 0.0;
};

/// E(Y^t | X) = g^{-1}(b0 + b1 X + b2 X^2 + bt t + b1t X t + b2t X^2 t)
struct Quadratic {
  double beta0 = 0.0;
  double beta1 = 0.0;
  double beta2 = 0.0;
  double beta_t = 0.0;
  double beta1_t = 0.0;
  double beta2_t = 0.0;
};

using Coefficients = std::variant<Homogeneous, LinearHeterogeneous, Quadratic>;

enum class ModelClass { Homogeneous, LinearHeterogeneous, Quadratic };

inline std::string_view model_class_name(ModelClass c) {
  switch (c) {
    case ModelClass::Homogeneous: return "homogeneous";
    case ModelClass::LinearHeterogeneous: return "linear-heterogeneous";
    case ModelClass::Quadratic: return "quadratic";
  }
  return "?";
}

enum class FamilyKind { Gaussian, Poisson, Bernoulli };

struct OutcomeFamily {
  FamilyKind kind = FamilyKind::Gaussian;
  double noise_sd = 1.0;  // Gaussian only

  static OutcomeFamily gaussian(double sd = 1.0) { return {FamilyKind::Gaussian, sd}; }
  static OutcomeFamily poisson() { return {FamilyKind::Poisson, 0.0}; }
  static OutcomeFamily bernoulli() { return {FamilyKind::Bernoulli, 0.0}; }
};

inline std::string_view family_name(FamilyKind f) {
  switch (f) {
    case FamilyKind::Gaussian: return "gaussian";
    case FamilyKind::Poisson: return "poisson";
    case FamilyKind::Bernoulli: return "bernoulli";
  }
  return "?";
}

/// Canonical family for a link: Identity-Gaussian, Log-Poisson, Logit-Bernoulli.
constexpr FamilyKind canonical_family(LinkFunction link) {
  switch (link.kind()) {
    case LinkKind::Identity: return FamilyKind::Gaussian;
    case LinkKind::Log: return FamilyKind::Poisson;
    case LinkKind::Logit: return FamilyKind::Bernoulli;
  }
  return FamilyKind::Gaussian;
}

constexpr LinkFunction canonical_link(FamilyKind family) {
  switch (family) {
    case FamilyKind::Gaussian: return LinkFunction::identity();
    case FamilyKind::Poisson: return LinkFunction::log();
    case FamilyKind::Bernoulli: return LinkFunction::logit();
  }
  return LinkFunction::identity();
}

/// Outcome-generating mechanism. The first covariate is the X of the three
/// illustrative parameterisations; optional further covariates enter the
/// linear predictor as purely prognostic main effects.
class OutcomeModel {
 public:
  OutcomeModel(LinkFunction link, OutcomeFamily family, Coefficients coefficients,
               std::vector<double> extra_prognostic = {}, double person_time = 1.0)
      : link_(link),
        family_(family),
        coefficients_(coefficients),
        extra_prognostic_(std::move(extra_prognostic)),
        person_time_(person_time) {
    if (canonical_family(link_) != family_.kind) {
      throw FamilyLinkError("family " + std::string(family_name(family_.kind)) + " cannot be paired with the " +
                            std::string(link_.name()) + " link");
    }
    if (family_.kind == FamilyKind::Gaussian && !(family_.noise_sd >= 0.0 && std::isfinite(family_.noise_sd))) {
      throw InvalidArgument("gaussian noise sd must be finite and non-negative");
    }
    if (!(person_time_ > 0.0) || !std::isfinite(person_time_)) {
      throw InvalidArgument("person-time must be positive");
    }
  }

  /// Model with the canonical family for `link`.
  static OutcomeModel canonical(LinkFunction link, Coefficients coefficients, double noise_sd = 1.0,
                                std::vector<double> extra_prognostic = {}) {
    OutcomeFamily family{canonical_family(link), canonical_family(link) == FamilyKind::Gaussian ? noise_sd : 0.0};
    return OutcomeModel(link, family, coefficients, std::move(extra_prognostic));
  }

  LinkFunction link() const { return link_; }
  const OutcomeFamily& family() const { return family_; }
  const Coefficients& coefficients() const { return coefficients_; }
  const std::vector<double>& extra_prognostic() const { return extra_prognostic_; }
  double person_time() const { return person_time_; }
  double offset() const { return link_.kind() == LinkKind::Log ? std::log(person_time_) : 0.0; }

  /// Number of covariates the model expects.
  std::size_t arity() const { return 1 + extra_prognostic_.size(); }

  ModelClass model_class() const {
    return static_cast<ModelClass>(coefficients_.index());
  }

  /// Treatment coefficient beta_T.
  double beta_t() const {
    return std::visit([](const auto& c) { return c.beta_t; }, coefficients_);
  }

  /// Coefficient of the quadratic treatment interaction (0 unless Quadratic).
  double beta2_t() const {
    if (const auto* q = std::get_if<Quadratic>(&coefficients_)) return q->beta2_t;
    return 0.0;
  }

  /// Copy with replaced coefficients (same link, family, extras).
  OutcomeModel with_coefficients(Coefficients c) const {
    return OutcomeModel(link_, family_, c, extra_prognostic_, person_time_);
  }

  /// Treatment-free part of the linear predictor, without offset.
  double baseline_predictor(double x1) const {
    return std::visit(detail::overloaded{
                          [&](const Homogeneous& c) { return c.beta0 + c.beta_x * x1; },
                          [&](const LinearHeterogeneous& c) { return c.beta0 + c.beta_x * x1; },
                          [&](const Quadratic& c) { return c.beta0 + c.beta1 * x1 + c.beta2 * x1 * x1; },
                      },
                      coefficients_);
  }

  /// Treatment-dependent part of the linear predictor at t = 1, i.e. the
  /// conditional effect at X = x on the linear-predictor scale.
  double treatment_predictor(double x1) const {
    return std::visit(detail::overloaded{
                          [](const Homogeneous& c) { return c.beta_t; },
                          [&](const LinearHeterogeneous& c) { return c.beta_t + c.beta_xt * x1; },
                          [&](const Quadratic& c) { return c.beta_t + c.beta1_t * x1 + c.beta2_t * x1 * x1; },
                      },
                      coefficients_);
  }

  void check_arity(std::span<const double> x) const {
    if (x.size() != arity()) {
      throw ArityError("model expects " + std::to_string(arity()) + " covariate(s), got " +
                       std::to_string(x.size()));
    }
  }

  double prognostic_extra(std::span<const double> x) const {
    double s = 0.0;
    for (std::size_t j = 0; j < extra_prognostic_.size(); ++j) s += extra_prognostic_[j] * x[j + 1];
    return s;
  }

 private:
  LinkFunction link_;
  OutcomeFamily family_;
  Coefficients coefficients_;
  std::vector<double> extra_prognostic_;
  double person_time_ = 1.0;
};

inline void check_treatment(int t) {
  if (t != 0 && t != 1) throw InvalidArgument("treatment indicator must be 0 or 1");
}

/// eta inside g^{-1}(.) for treatment t and covariates x, including the
/// log(person-time) offset for log-link models.
inline double linear_predictor(const OutcomeModel& model, int t, std::span<const double> x) {
  check_treatment(t);
  model.check_arity(x);
  double eta = model.baseline_predictor(x[0]) + model.prognostic_extra(x) + model.offset();
  if (t == 1) eta += model.treatment_predictor(x[0]);
  return eta;
}

inline double linear_predictor(const OutcomeModel& model, int t, double x) {
  return linear_predictor(model, t, std::span<const double>(&x, 1));
}

/// E(Y^t | X = x) = g^{-1}(eta).
inline double conditional_mean(const OutcomeModel& model, int t, std::span<const double> x) {
  return model.link().inverse(linear_predictor(model, t, x));
}

inline double conditional_mean(const OutcomeModel& model, int t, double x) {
  return conditional_mean(model, t, std::span<const double>(&x, 1));
}

}  // namespace estimand
