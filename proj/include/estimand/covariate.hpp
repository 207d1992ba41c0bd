#pragma once

#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "estimand/errors.hpp"
#include "estimand/format.hpp"

namespace estimand {

struct NormalLaw {
  double mean = 0.0;
  double sd = 1.0;
};

struct BernoulliLaw {
  double p = 0.5;
};

struct DiscreteLaw {
  std::vector<double> values;
  std::vector<double> probs;
};

using UnivariateLaw = std::variant<NormalLaw, BernoulliLaw, DiscreteLaw>;

namespace detail {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

inline double law_mean(const UnivariateLaw& law) {
  return std::visit(overloaded{
                        [](const NormalLaw& n) { return n.mean; },
                        [](const BernoulliLaw& b) { return b.p; },
                        [](const DiscreteLaw& d) {
                          double m = 0.0;
                          for (std::size_t i = 0; i < d.values.size(); ++i) m += d.probs[i] * d.values[i];
                          return m;
                        },
                    },
                    law);
}

inline double law_variance(const UnivariateLaw& law) {
  return std::visit(overloaded{
                        [](const NormalLaw& n) { return n.sd * n.sd; },
                        [](const BernoulliLaw& b) { return b.p * (1.0 - b.p); },
                        [](const DiscreteLaw& d) {
                          const double m = law_mean(d);
                          double v = 0.0;
                          for (std::size_t i = 0; i < d.values.size(); ++i) {
                            const double c = d.values[i] - m;
                            v += d.probs[i] * c * c;
                          }
                          return v;
                        },
                    },
                    law);
}

inline void validate_law(const UnivariateLaw& law) {
  std::visit(overloaded{
                 [](const NormalLaw& n) {
                   if (!std::isfinite(n.mean) || !(n.sd > 0.0) || !std::isfinite(n.sd)) {
                     throw InvalidArgument("normal law requires finite mean and sd > 0");
                   }
                 },
                 [](const BernoulliLaw& b) {
                   if (!(b.p > 0.0 && b.p < 1.0)) {
                     throw InvalidArgument("bernoulli law requires p in (0, 1)");
                   }
                 },
                 [](const DiscreteLaw& d) {
                   if (d.values.empty() || d.values.size() != d.probs.size()) {
                     throw InvalidArgument("discrete law requires matching, non-empty values and probs");
                   }
                   double total = 0.0;
                   for (std::size_t i = 0; i < d.probs.size(); ++i) {
                     if (!(d.probs[i] > 0.0) || !std::isfinite(d.values[i])) {
                       throw InvalidArgument("discrete law requires finite values and probs > 0");
                     }
                     total += d.probs[i];
                   }
                   if (std::abs(total - 1.0) > 1e-12) {
                     throw InvalidArgument("discrete law probs must sum to 1 (got " +
                                           std::to_string(total) + ")");
                   }
                 },
             },
             law);
}

}  // namespace detail

/// Law of the baseline covariate vector X: a single univariate law or an
/// independent product of univariate laws. Immutable once built.
class CovariateDistribution {
 public:
  static CovariateDistribution normal(double mean, double sd) { return CovariateDistribution({NormalLaw{mean, sd}}); }
  static CovariateDistribution bernoulli(double p) { return CovariateDistribution({BernoulliLaw{p}}); }
  static CovariateDistribution discrete(std::vector<double> values, std::vector<double> probs) {
    return CovariateDistribution({DiscreteLaw{std::move(values), std::move(probs)}});
  }
  static CovariateDistribution point_mass(double x) { return discrete({x}, {1.0}); }

  /// Independent product; nested products are flattened.
  static CovariateDistribution product(const std::vector<CovariateDistribution>& parts) {
    std::vector<UnivariateLaw> laws;
    for (const auto& p : parts) laws.insert(laws.end(), p.components_.begin(), p.components_.end());
    return CovariateDistribution(std::move(laws));
  }

  explicit CovariateDistribution(std::vector<UnivariateLaw> components) : components_(std::move(components)) {
    if (components_.empty()) throw InvalidArgument("covariate distribution needs at least one component");
    for (const auto& c : components_) detail::validate_law(c);
  }

  std::size_t dimension() const { return components_.size(); }
  const std::vector<UnivariateLaw>& components() const { return components_; }
  const UnivariateLaw& component(std::size_t j) const { return components_.at(j); }

  double mean(std::size_t j = 0) const { return detail::law_mean(components_.at(j)); }
  double variance(std::size_t j = 0) const { return detail::law_variance(components_.at(j)); }
  double second_moment(std::size_t j = 0) const {
    const double m = mean(j);
    return variance(j) + m * m;
  }
  double sd(std::size_t j = 0) const { return std::sqrt(variance(j)); }

  std::vector<double> means() const {
    std::vector<double> out;
    for (std::size_t j = 0; j < dimension(); ++j) out.push_back(mean(j));
    return out;
  }
  std::vector<double> sds() const {
    std::vector<double> out;
    for (std::size_t j = 0; j < dimension(); ++j) out.push_back(sd(j));
    return out;
  }

  /// True when the law has a normal component (so expectations need
  /// Gauss-Hermite rather than an exact finite sum).
  bool has_continuous_component() const {
    for (const auto& c : components_)
      if (std::holds_alternative<NormalLaw>(c)) return true;
    return false;
  }

  template <class Engine>
  void sample_into(Engine& engine, std::span<double> out) const {
    for (std::size_t j = 0; j < components_.size(); ++j) {
      out[j] = std::visit(detail::overloaded{
                              [&](const NormalLaw& n) {
                                return std::normal_distribution<double>(n.mean, n.sd)(engine);
                              },
                              [&](const BernoulliLaw& b) {
                                return std::uniform_real_distribution<double>(0.0, 1.0)(engine) < b.p ? 1.0 : 0.0;
                              },
                              [&](const DiscreteLaw& d) {
                                const double u = std::uniform_real_distribution<double>(0.0, 1.0)(engine);
                                double acc = 0.0;
                                for (std::size_t i = 0; i + 1 < d.probs.size(); ++i) {
                                  acc += d.probs[i];
                                  if (u < acc) return d.values[i];
                                }
                                return d.values.back();
                              },
                          },
                          components_[j]);
    }
  }

  template <class Engine>
  std::vector<double> sample(Engine& engine) const {
    std::vector<double> x(dimension());
    sample_into(engine, x);
    return x;
  }

  std::string describe() const;

 private:
  std::vector<UnivariateLaw> components_;
};

inline std::string describe_law(const UnivariateLaw& law) {
  return std::visit(detail::overloaded{
                        [](const NormalLaw& n) {
                          return "Normal{" + format_double(n.mean) + ", " + format_double(n.sd) + "}";
                        },
                        [](const BernoulliLaw& b) { return "Bernoulli{" + format_double(b.p) + "}"; },
                        [](const DiscreteLaw& d) {
                          std::string s = "Discrete{";
                          for (std::size_t i = 0; i < d.values.size(); ++i) {
                            if (i) s += ", ";
                            s += format_double(d.values[i]) + ":" + format_double(d.probs[i]);
                          }
                          return s + "}";
                        },
                    },
                    law);
}

inline std::string CovariateDistribution::describe() const {
  if (components_.size() == 1) return describe_law(components_[0]);
  std::string s = "Product{";
  for (std::size_t j = 0; j < components_.size(); ++j) {
    if (j) s += ", ";
    s += describe_law(components_[j]);
  }
  return s + "}";
}

/// Returns a law of the same family as `tmpl`, re-parameterised to the
/// given per-component means and sds where the family allows it (Normal,
/// Bernoulli). Discrete components are returned unchanged.
inline CovariateDistribution match_moments(const CovariateDistribution& tmpl, std::span<const double> means,
                                           std::span<const double> sds) {
  if (means.size() != tmpl.dimension() || sds.size() != tmpl.dimension()) {
    throw ArityError("moment vectors do not match the distribution dimension");
  }
  std::vector<UnivariateLaw> laws;
  for (std::size_t j = 0; j < tmpl.dimension(); ++j) {
    laws.push_back(std::visit(detail::overloaded{
                                  [&](const NormalLaw&) -> UnivariateLaw { return NormalLaw{means[j], sds[j]}; },
                                  [&](const BernoulliLaw&) -> UnivariateLaw { return BernoulliLaw{means[j]}; },
                                  [&](const DiscreteLaw& d) -> UnivariateLaw { return d; },
                              },
                              tmpl.component(j)));
  }
  return CovariateDistribution(std::move(laws));
}

}  // namespace estimand
