#pragma once

#include <cmath>
#include <string>
#include <string_view>

#include "estimand/errors.hpp"

namespace estimand {

enum class LinkKind { Identity, Log, Logit };

/// Canonical GLM link g(.) together with its inverse and derivatives.
class LinkFunction {
 public:
  constexpr LinkFunction() = default;
  constexpr explicit LinkFunction(LinkKind kind) : kind_(kind) {}

  static constexpr LinkFunction identity() { return LinkFunction(LinkKind::Identity); }
  static constexpr LinkFunction log() { return LinkFunction(LinkKind::Log); }
  static constexpr LinkFunction logit() { return LinkFunction(LinkKind::Logit); }

  constexpr LinkKind kind() const { return kind_; }

  /// True when `mu` lies in the domain of g.
  bool in_domain(double mu) const {
    switch (kind_) {
      case LinkKind::Identity: return std::isfinite(mu);
      case LinkKind::Log: return mu > 0.0 && std::isfinite(mu);
      case LinkKind::Logit: return mu > 0.0 && mu < 1.0;
    }
    return false;
  }

  /// g(mu). Throws DomainError outside the link's domain.
  double apply(double mu) const {
    if (!in_domain(mu)) {
      throw DomainError(std::string(name()) + " link undefined at mean " + std::to_string(mu));
    }
    switch (kind_) {
      case LinkKind::Identity: return mu;
      case LinkKind::Log: return std::log(mu);
      case LinkKind::Logit: return std::log(mu) - std::log1p(-mu);
    }
    return mu;
  }

  /// g^{-1}(eta).
  double inverse(double eta) const {
    switch (kind_) {
      case LinkKind::Identity: return eta;
      case LinkKind::Log: return std::exp(eta);
      case LinkKind::Logit:
        if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
        {
          const double e = std::exp(eta);
          return e / (1.0 + e);
        }
    }
    return eta;
  }

  /// d g^{-1}(eta) / d eta.
  double inverse_derivative(double eta) const {
    switch (kind_) {
      case LinkKind::Identity: return 1.0;
      case LinkKind::Log: return std::exp(eta);
      case LinkKind::Logit: {
        const double p = inverse(eta);
        return p * (1.0 - p);
      }
    }
    return 1.0;
  }

  /// g'(mu).
  double derivative(double mu) const {
    switch (kind_) {
      case LinkKind::Identity: return 1.0;
      case LinkKind::Log: return 1.0 / mu;
      case LinkKind::Logit: return 1.0 / (mu * (1.0 - mu));
    }
    return 1.0;
  }

  constexpr std::string_view name() const {
    switch (kind_) {
      case LinkKind::Identity: return "identity";
      case LinkKind::Log: return "log";
      case LinkKind::Logit: return "logit";
    }
    return "?";
  }

  friend constexpr bool operator==(LinkFunction a, LinkFunction b) { return a.kind_ == b.kind_; }

 private:
  LinkKind kind_ = LinkKind::Identity;
};

inline LinkFunction parse_link(std::string_view text) {
  if (text == "identity") return LinkFunction::identity();
  if (text == "log") return LinkFunction::log();
  if (text == "logit") return LinkFunction::logit();
  throw InvalidArgument("unknown link '" + std::string(text) + "' (expected identity, log or logit)");
}

/// Contrast scale of a treatment effect.
enum class Scale { MeanDifference, RiskDifference, LogRiskRatio, LogOddsRatio };

/// Scale imposed by a link on the linear predictor.
constexpr Scale scale_for_link(LinkFunction link) {
  switch (link.kind()) {
    case LinkKind::Identity: return Scale::MeanDifference;
    case LinkKind::Log: return Scale::LogRiskRatio;
    case LinkKind::Logit: return Scale::LogOddsRatio;
  }
  return Scale::MeanDifference;
}

/// Link whose g(mu1) - g(mu0) realises `scale`.
constexpr LinkFunction link_for_scale(Scale scale) {
  switch (scale) {
    case Scale::MeanDifference:
    case Scale::RiskDifference: return LinkFunction::identity();
    case Scale::LogRiskRatio: return LinkFunction::log();
    case Scale::LogOddsRatio: return LinkFunction::logit();
  }
  return LinkFunction::identity();
}

constexpr std::string_view scale_name(Scale scale) {
  switch (scale) {
    case Scale::MeanDifference: return "mean-difference";
    case Scale::RiskDifference: return "risk-difference";
    case Scale::LogRiskRatio: return "log-risk-ratio";
    case Scale::LogOddsRatio: return "log-odds-ratio";
  }
  return "?";
}

inline Scale parse_scale(std::string_view text) {
  for (Scale s : {Scale::MeanDifference, Scale::RiskDifference, Scale::LogRiskRatio,
                  Scale::LogOddsRatio}) {
    if (scale_name(s) == text) return s;
  }
  throw InvalidArgument("unknown scale '" + std::string(text) + "'");
}

}  // namespace estimand
