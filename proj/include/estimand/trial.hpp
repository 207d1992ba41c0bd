#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "estimand/covariate.hpp"
#include "estimand/errors.hpp"
#include "estimand/format.hpp"
#include "estimand/outcome_model.hpp"
#include "estimand/rng.hpp"

namespace estimand {

struct TrialConfig {
  OutcomeModel model;
  CovariateDistribution dist;
  std::size_t n = 0;
  double allocation = 0.5;  // P(t = 1)
  std::uint64_t seed = 0;

  void validate() const {
    if (n < 2) throw InvalidArgument("trial size must be at least 2");
    if (!(allocation > 0.0 && allocation < 1.0)) throw InvalidArgument("allocation must lie in (0, 1)");
    if (model.arity() != dist.dimension()) {
      throw ArityError("model expects " + std::to_string(model.arity()) + " covariate(s), distribution has " +
                       std::to_string(dist.dimension()));
    }
  }
};

inline std::vector<std::string> default_covariate_names(std::size_t k) {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < k; ++j) names.push_back("x" + std::to_string(j + 1));
  return names;
}

/// Subject-level trial data, stored column-wise. Row i has covariates
/// x[i*k .. i*k+k), treatment t[i] and outcome y[i].
struct TrialIPD {
  std::vector<std::string> covariate_names;
  std::vector<double> x;
  std::vector<int> t;
  std::vector<double> y;
  FamilyKind family = FamilyKind::Gaussian;
  double person_time = 1.0;
  std::optional<TrialConfig> provenance;

  std::size_t size() const { return t.size(); }
  std::size_t covariate_count() const { return covariate_names.size(); }
  std::span<const double> covariates(std::size_t i) const {
    const std::size_t k = covariate_count();
    return {x.data() + i * k, k};
  }
  double covariate(std::size_t i, std::size_t j) const { return x[i * covariate_count() + j]; }

  std::size_t arm_size(int arm) const {
    std::size_t c = 0;
    for (int v : t) c += (v == arm);
    return c;
  }

  std::size_t covariate_index(std::string_view name) const {
    for (std::size_t j = 0; j < covariate_names.size(); ++j)
      if (covariate_names[j] == name) return j;
    throw InvalidArgument("unknown covariate '" + std::string(name) + "'");
  }

  /// Rows selected by index (with repetition), e.g. a bootstrap resample.
  TrialIPD subset(std::span<const std::size_t> rows) const {
    TrialIPD out;
    out.covariate_names = covariate_names;
    out.family = family;
    out.person_time = person_time;
    const std::size_t k = covariate_count();
    out.x.reserve(rows.size() * k);
    out.t.reserve(rows.size());
    out.y.reserve(rows.size());
    for (std::size_t r : rows) {
      auto xi = covariates(r);
      out.x.insert(out.x.end(), xi.begin(), xi.end());
      out.t.push_back(t[r]);
      out.y.push_back(y[r]);
    }
    return out;
  }

  /// Checks y against the family's support.
  void validate() const {
    const std::size_t n = size();
    if (y.size() != n || x.size() != n * covariate_count()) throw InvalidArgument("IPD columns have unequal lengths");
    for (std::size_t i = 0; i < n; ++i) {
      if (t[i] != 0 && t[i] != 1) throw InvalidArgument("row " + std::to_string(i) + ": treatment must be 0 or 1");
      const double v = y[i];
      if (!std::isfinite(v)) throw InvalidArgument("row " + std::to_string(i) + ": outcome is not finite");
      if (family == FamilyKind::Bernoulli && v != 0.0 && v != 1.0) {
        throw InvalidArgument("row " + std::to_string(i) + ": binary outcome must be 0 or 1");
      }
      if (family == FamilyKind::Poisson && (v < 0.0 || v != std::floor(v))) {
        throw InvalidArgument("row " + std::to_string(i) + ": count outcome must be a non-negative integer");
      }
    }
  }
};

namespace detail {

template <class Engine>
double draw_outcome(const OutcomeFamily& family, double mean, Engine& engine) {
  switch (family.kind) {
    case FamilyKind::Gaussian:
      if (family.noise_sd == 0.0) return mean;
      return std::normal_distribution<double>(mean, family.noise_sd)(engine);
    case FamilyKind::Poisson: return static_cast<double>(std::poisson_distribution<long long>(mean)(engine));
    case FamilyKind::Bernoulli: return std::uniform_real_distribution<double>(0.0, 1.0)(engine) < mean ? 1.0 : 0.0;
  }
  return mean;
}

}  // namespace detail

/// Simulates a randomised trial. Row i draws from its own stream keyed by
/// (seed, i): X ~ dist, T ~ Bernoulli(allocation) independent of X, and
/// Y ~ family(E(Y^T | X)).
inline TrialIPD simulate_trial(const TrialConfig& config) {
  config.validate();
  const std::size_t k = config.dist.dimension();
  TrialIPD ipd;
  ipd.covariate_names = default_covariate_names(k);
  ipd.family = config.model.family().kind;
  ipd.person_time = config.model.person_time();
  ipd.provenance = config;
  ipd.x.resize(config.n * k);
  ipd.t.resize(config.n);
  ipd.y.resize(config.n);
  for (std::size_t i = 0; i < config.n; ++i) {
    auto rng = CounterRng::for_stream(config.seed, i);
    std::span<double> xi(ipd.x.data() + i * k, k);
    config.dist.sample_into(rng, xi);
    const int t = rng.uniform() < config.allocation ? 1 : 0;
    ipd.t[i] = t;
    ipd.y[i] = detail::draw_outcome(config.model.family(), conditional_mean(config.model, t, xi), rng);
  }
  return ipd;
}

// ---------------------------------------------------------------------------
// CSV: columns x1..xk, t, y

inline void write_ipd_csv(std::ostream& os, const TrialIPD& ipd) {
  for (const auto& name : ipd.covariate_names) os << name << ',';
  os << "t,y\n";
  for (std::size_t i = 0; i < ipd.size(); ++i) {
    for (double v : ipd.covariates(i)) os << format_double(v) << ',';
    os << ipd.t[i] << ',' << format_double(ipd.y[i]) << '\n';
  }
}

inline TrialIPD read_ipd_csv(std::istream& is, FamilyKind family, double person_time = 1.0) {
  std::string line;
  if (!std::getline(is, line)) throw InvalidArgument("IPD CSV is empty");
  auto header = split(line, ',');
  if (header.size() < 2 || header[header.size() - 2] != "t" || header.back() != "y") {
    throw InvalidArgument("IPD CSV header must end with columns t,y");
  }
  TrialIPD ipd;
  ipd.family = family;
  ipd.person_time = person_time;
  ipd.covariate_names.assign(header.begin(), header.end() - 2);
  const std::size_t k = ipd.covariate_names.size();
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto cells = split(line, ',');
    if (cells.size() != k + 2) {
      throw InvalidArgument("IPD CSV line " + std::to_string(line_no) + ": expected " + std::to_string(k + 2) +
                            " fields, got " + std::to_string(cells.size()));
    }
    const std::string ctx = "IPD CSV line " + std::to_string(line_no);
    for (std::size_t j = 0; j < k; ++j) ipd.x.push_back(parse_double(cells[j], ctx));
    const double t = parse_double(cells[k], ctx);
    if (t != 0.0 && t != 1.0) throw InvalidArgument(ctx + ": treatment must be 0 or 1");
    ipd.t.push_back(static_cast<int>(t));
    ipd.y.push_back(parse_double(cells[k + 1], ctx));
  }
  ipd.validate();
  return ipd;
}

}  // namespace estimand
