#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <toml.hpp>

#include "estimand/bench.hpp"
#include "estimand/covariate.hpp"
#include "estimand/errors.hpp"
#include "estimand/estimands.hpp"
#include "estimand/glm.hpp"
#include "estimand/outcome_model.hpp"
#include "estimand/quadrature.hpp"
#include "estimand/stc.hpp"

namespace estimand {

struct TrialSettings {
  std::size_t n = 1000;
  double allocation = 0.5;
  std::uint64_t seed = 1;
  std::optional<std::vector<std::string>> conditioning_set;  // adds a regression estimate to the summary
  bool continuity_correction = false;
};

struct AdjustSettings {
  std::filesystem::path ipd;        // index (AC) trial, CSV x1..xk,t,y
  std::filesystem::path aggregate;  // competitor (BC) summary, key-value CSV
  std::string link = "logit";
  std::vector<Method> methods = {Method::MAIC, Method::STCPlugin, Method::STCGcomp, Method::Crude};
  std::vector<BcReporting> bc_reporting = {BcReporting::MarginalCrude};
  std::optional<Formula> formula;
  bool maic_second_moments = false;
  GcompStandardError gcomp_se = GcompStandardError::Bootstrap;
  int bootstrap_replicates = 1000;
  std::uint64_t seed = 7;
};

struct BenchSettings {
  std::size_t n_ac = 2000;
  std::size_t n_bc = 2000;
  double allocation = 0.5;
  std::vector<Method> ac_methods = {Method::MAIC};
  std::vector<BcReporting> bc_reporting = {BcReporting::MarginalCrude, BcReporting::ConditionalCoefficient};
  std::vector<std::string> conditioning_set;
  int replications = 2000;
  std::uint64_t seed = 1;
  bool maic_second_moments = false;
  std::optional<Formula> outcome_formula;
  GcompStandardError gcomp_se = GcompStandardError::DeltaMethod;
  int bootstrap_replicates = 1000;
  unsigned threads = 0;
};

struct ProbeSpec {
  std::string name;
  CovariateDistribution perturbed;
  SharedMoments shared = SharedMoments::None;
  double tolerance = 1e-8;
};

/// A parsed scenario file. Every section is optional; subcommands check for
/// the ones they need.
struct ConfigFile {
  std::filesystem::path path;
  std::optional<OutcomeModel> model;
  std::optional<OutcomeModel> model_bc;
  std::optional<CovariateDistribution> dist;
  std::optional<CovariateDistribution> dist_ac;
  std::optional<CovariateDistribution> dist_bc;
  QuadratureSettings quadrature;
  TrialSettings trial;
  std::optional<AdjustSettings> adjust;
  std::optional<BenchSettings> bench;
  std::vector<ProbeSpec> probes;

  const OutcomeModel& require_model() const {
    if (!model) throw ConfigError(where() + "missing [model] section");
    return *model;
  }
  const CovariateDistribution& require_dist() const {
    if (!dist) throw ConfigError(where() + "missing [dist] section");
    return *dist;
  }
  std::string where() const { return path.empty() ? std::string() : path.string() + ": "; }
};

namespace detail {

inline std::string at(const toml::node& n) {
  const auto& src = n.source();
  std::string s = src.path ? std::string(*src.path) : std::string("<config>");
  return s + ":" + std::to_string(src.begin.line) + ": ";
}

[[noreturn]] inline void config_fail(const toml::node& n, const std::string& what) {
  throw ConfigError(at(n) + what);
}

inline void allow_keys(const toml::table& t, std::string_view section, std::initializer_list<std::string_view> keys) {
  for (auto&& [k, v] : t) {
    if (std::find(keys.begin(), keys.end(), k.str()) == keys.end()) {
      config_fail(v, "unknown key '" + std::string(k.str()) + "' in " + std::string(section));
    }
  }
}

inline double get_real(const toml::table& t, std::string_view key, std::optional<double> fallback) {
  const toml::node* n = t.get(key);
  if (!n) {
    if (fallback) return *fallback;
    throw ConfigError(at(t) + "missing required key '" + std::string(key) + "'");
  }
  if (!n->is_number()) config_fail(*n, "'" + std::string(key) + "' must be a number");
  return *n->value<double>();
}

inline std::int64_t get_int(const toml::table& t, std::string_view key, std::int64_t fallback, std::int64_t lo) {
  const toml::node* n = t.get(key);
  if (!n) return fallback;
  if (!n->is_integer()) config_fail(*n, "'" + std::string(key) + "' must be an integer");
  const auto v = n->as_integer()->get();
  if (v < lo) config_fail(*n, "'" + std::string(key) + "' must be at least " + std::to_string(lo));
  return v;
}

inline std::uint64_t get_seed(const toml::table& t, std::string_view key, std::uint64_t fallback) {
  return static_cast<std::uint64_t>(get_int(t, key, static_cast<std::int64_t>(fallback), 0));
}

inline bool get_bool(const toml::table& t, std::string_view key, bool fallback) {
  const toml::node* n = t.get(key);
  if (!n) return fallback;
  if (!n->is_boolean()) config_fail(*n, "'" + std::string(key) + "' must be true or false");
  return n->as_boolean()->get();
}

inline std::optional<std::string> get_string(const toml::table& t, std::string_view key) {
  const toml::node* n = t.get(key);
  if (!n) return std::nullopt;
  if (!n->is_string()) config_fail(*n, "'" + std::string(key) + "' must be a string");
  return n->as_string()->get();
}

inline std::vector<double> get_reals(const toml::table& t, std::string_view key) {
  const toml::node* n = t.get(key);
  if (!n) return {};
  const auto* arr = n->as_array();
  if (!arr) config_fail(*n, "'" + std::string(key) + "' must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : *arr) {
    if (!e.is_number()) config_fail(e, "'" + std::string(key) + "' must contain only numbers");
    out.push_back(*e.value<double>());
  }
  return out;
}

inline std::vector<std::string> get_strings(const toml::table& t, std::string_view key) {
  const toml::node* n = t.get(key);
  if (!n) return {};
  if (n->is_string()) return {n->as_string()->get()};
  const auto* arr = n->as_array();
  if (!arr) config_fail(*n, "'" + std::string(key) + "' must be a string or an array of strings");
  std::vector<std::string> out;
  for (const auto& e : *arr) {
    if (!e.is_string()) config_fail(e, "'" + std::string(key) + "' must contain only strings");
    out.push_back(e.as_string()->get());
  }
  return out;
}

// Runs `parse` and re-throws library validation errors with the node's line.
template <class F>
auto with_line(const toml::node& n, F&& parse) -> decltype(parse()) {
  try {
    return parse();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    config_fail(n, e.what());
  }
}

inline const toml::table& as_section(const toml::node& n, std::string_view name) {
  const auto* t = n.as_table();
  if (!t) config_fail(n, "'" + std::string(name) + "' must be a table");
  return *t;
}

inline ModelClass parse_model_class(const toml::table& t) {
  const auto text = get_string(t, "class").value_or("homogeneous");
  for (auto c : {ModelClass::Homogeneous, ModelClass::LinearHeterogeneous, ModelClass::Quadratic})
    if (model_class_name(c) == text) return c;
  config_fail(*t.get("class"), "unknown model class '" + text + "' (expected homogeneous, linear-heterogeneous or quadratic)");
}

inline OutcomeModel parse_model(const toml::table& t, std::string_view section) {
  allow_keys(t, section,
             {"link", "class", "beta0", "beta_x", "beta_t", "beta_xt", "beta1", "beta2", "beta1t", "beta2t",
              "noise_sd", "extra_prognostic"});
  const auto link_text = get_string(t, "link");
  if (!link_text) throw ConfigError(at(t) + "missing required key 'link' in " + std::string(section));
  const auto link = with_line(*t.get("link"), [&] { return parse_link(*link_text); });
  const auto cls = parse_model_class(t);
  auto forbid = [&](std::initializer_list<std::string_view> keys) {
    for (auto k : keys)
      if (const auto* n = t.get(k))
        config_fail(*n, "'" + std::string(k) + "' does not apply to the " + std::string(model_class_name(cls)) +
                            " model");
  };
  Coefficients coefs;
  switch (cls) {
    case ModelClass::Homogeneous:
      forbid({"beta_xt", "beta1", "beta2", "beta1t", "beta2t"});
      coefs = Homogeneous{get_real(t, "beta0", 0.0), get_real(t, "beta_x", std::nullopt),
                          get_real(t, "beta_t", std::nullopt)};
      break;
    case ModelClass::LinearHeterogeneous:
      forbid({"beta1", "beta2", "beta1t", "beta2t"});
      coefs = LinearHeterogeneous{get_real(t, "beta0", 0.0), get_real(t, "beta_x", std::nullopt),
                                  get_real(t, "beta_t", std::nullopt), get_real(t, "beta_xt", std::nullopt)};
      break;
    case ModelClass::Quadratic:
      forbid({"beta_x", "beta_xt"});
      coefs = Quadratic{get_real(t, "beta0", 0.0),          get_real(t, "beta1", std::nullopt),
                        get_real(t, "beta2", std::nullopt), get_real(t, "beta_t", std::nullopt),
                        get_real(t, "beta1t", std::nullopt), get_real(t, "beta2t", std::nullopt)};
      break;
  }
  const double sd = get_real(t, "noise_sd", 1.0);
  if (link.kind() != LinkKind::Identity && t.get("noise_sd")) {
    config_fail(*t.get("noise_sd"), "'noise_sd' only applies to the identity link");
  }
  const auto extras = get_reals(t, "extra_prognostic");
  return with_line(t, [&] { return OutcomeModel::canonical(link, coefs, sd, extras); });
}

inline CovariateDistribution parse_law(const toml::table& t, std::string_view section) {
  const auto law = get_string(t, "law");
  if (!law) throw ConfigError(at(t) + "missing required key 'law' in " + std::string(section));
  return with_line(t, [&]() -> CovariateDistribution {
    if (*law == "normal") {
      allow_keys(t, section, {"law", "mean", "sd"});
      return CovariateDistribution::normal(get_real(t, "mean", 0.0), get_real(t, "sd", 1.0));
    }
    if (*law == "bernoulli") {
      allow_keys(t, section, {"law", "p"});
      return CovariateDistribution::bernoulli(get_real(t, "p", std::nullopt));
    }
    if (*law == "discrete") {
      allow_keys(t, section, {"law", "values", "probs"});
      auto values = get_reals(t, "values");
      auto probs = get_reals(t, "probs");
      if (values.empty()) throw ConfigError(at(t) + "discrete law needs a non-empty 'values' array");
      if (probs.size() != values.size()) throw ConfigError(at(t) + "'probs' must have one entry per value");
      return CovariateDistribution::discrete(std::move(values), std::move(probs));
    }
    if (*law == "point") {
      allow_keys(t, section, {"law", "value"});
      return CovariateDistribution::point_mass(get_real(t, "value", std::nullopt));
    }
    if (*law == "product") {
      allow_keys(t, section, {"law", "components"});
      const auto* n = t.get("components");
      const auto* arr = n ? n->as_array() : nullptr;
      if (!arr || arr->empty()) throw ConfigError(at(t) + "product law needs a non-empty 'components' array of tables");
      std::vector<CovariateDistribution> parts;
      for (const auto& e : *arr) {
        const auto* c = e.as_table();
        if (!c) config_fail(e, "product components must be inline tables");
        parts.push_back(parse_law(*c, std::string(section) + ".components"));
      }
      return CovariateDistribution::product(parts);
    }
    config_fail(*t.get("law"), "unknown law '" + *law + "' (expected normal, bernoulli, discrete, point or product)");
  });
}

inline QuadratureSettings parse_quadrature(const toml::table& t) {
  allow_keys(t, "[quadrature]", {"nodes", "max_tensor_dimension", "mc_draws", "seed"});
  QuadratureSettings q;
  q.nodes = static_cast<int>(get_int(t, "nodes", q.nodes, 1));
  if (q.nodes > 512) config_fail(*t.get("nodes"), "'nodes' must be at most 512");
  q.max_tensor_dimension = static_cast<std::size_t>(get_int(t, "max_tensor_dimension",
                                                            static_cast<std::int64_t>(q.max_tensor_dimension), 1));
  q.mc_draws = static_cast<std::size_t>(get_int(t, "mc_draws", static_cast<std::int64_t>(q.mc_draws), 2));
  q.seed = get_seed(t, "seed", q.seed);
  return q;
}

template <class T, class Parse>
std::vector<T> parse_list(const toml::table& t, std::string_view key, std::vector<T> fallback, Parse parse) {
  if (!t.get(key)) return fallback;
  std::vector<T> out;
  for (const auto& s : get_strings(t, key)) out.push_back(with_line(*t.get(key), [&] { return parse(s); }));
  if (out.empty()) config_fail(*t.get(key), "'" + std::string(key) + "' must not be empty");
  return out;
}

inline std::optional<Formula> parse_formula(const toml::table& t, std::string_view key) {
  const auto text = get_string(t, key);
  if (!text) return std::nullopt;
  for (auto f : {Formula::TreatmentOnly, Formula::MainEffects, Formula::Interaction, Formula::QuadraticInteraction})
    if (formula_name(f) == *text) return f;
  config_fail(*t.get(key), "unknown formula '" + *text + "'");
}

inline GcompStandardError parse_gcomp_se(const toml::table& t, GcompStandardError fallback) {
  const auto text = get_string(t, "gcomp_se");
  if (!text) return fallback;
  if (*text == "bootstrap") return GcompStandardError::Bootstrap;
  if (*text == "delta") return GcompStandardError::DeltaMethod;
  config_fail(*t.get("gcomp_se"), "'gcomp_se' must be \"bootstrap\" or \"delta\"");
}

inline TrialSettings parse_trial(const toml::table& t) {
  allow_keys(t, "[trial]", {"n", "allocation", "seed", "conditioning_set", "continuity_correction"});
  TrialSettings s;
  s.n = static_cast<std::size_t>(get_int(t, "n", static_cast<std::int64_t>(s.n), 2));
  s.allocation = get_real(t, "allocation", s.allocation);
  if (!(s.allocation > 0.0 && s.allocation < 1.0)) config_fail(*t.get("allocation"), "'allocation' must lie in (0, 1)");
  s.seed = get_seed(t, "seed", s.seed);
  if (t.get("conditioning_set")) s.conditioning_set = get_strings(t, "conditioning_set");
  s.continuity_correction = get_bool(t, "continuity_correction", false);
  return s;
}

inline AdjustSettings parse_adjust(const toml::table& t, const std::filesystem::path& base) {
  allow_keys(t, "[adjust]",
             {"ipd", "aggregate", "link", "methods", "bc_reporting", "formula", "maic_second_moments", "gcomp_se",
              "bootstrap_replicates", "seed"});
  AdjustSettings s;
  auto resolve = [&](std::string_view key) {
    const auto p = get_string(t, key);
    if (!p) throw ConfigError(at(t) + "missing required key '" + std::string(key) + "' in [adjust]");
    std::filesystem::path path(*p);
    return path.is_relative() ? base / path : path;
  };
  s.ipd = resolve("ipd");
  s.aggregate = resolve("aggregate");
  if (auto l = get_string(t, "link")) {
    with_line(*t.get("link"), [&] { return parse_link(*l); });
    s.link = *l;
  }
  s.methods = parse_list(t, "methods", s.methods, parse_method);
  s.bc_reporting = parse_list(t, "bc_reporting", s.bc_reporting, parse_bc_reporting);
  s.formula = parse_formula(t, "formula");
  s.maic_second_moments = get_bool(t, "maic_second_moments", false);
  s.gcomp_se = parse_gcomp_se(t, s.gcomp_se);
  s.bootstrap_replicates = static_cast<int>(get_int(t, "bootstrap_replicates", s.bootstrap_replicates, 2));
  s.seed = get_seed(t, "seed", s.seed);
  return s;
}

inline BenchSettings parse_bench(const toml::table& t) {
  allow_keys(t, "[bench]",
             {"n_ac", "n_bc", "allocation", "ac_methods", "bc_reporting", "conditioning_set", "replications", "seed",
              "maic_second_moments", "outcome_formula", "gcomp_se", "bootstrap_replicates", "threads"});
  BenchSettings s;
  s.n_ac = static_cast<std::size_t>(get_int(t, "n_ac", static_cast<std::int64_t>(s.n_ac), 2));
  s.n_bc = static_cast<std::size_t>(get_int(t, "n_bc", static_cast<std::int64_t>(s.n_bc), 2));
  s.allocation = get_real(t, "allocation", s.allocation);
  if (!(s.allocation > 0.0 && s.allocation < 1.0)) config_fail(*t.get("allocation"), "'allocation' must lie in (0, 1)");
  s.ac_methods = parse_list(t, "ac_methods", s.ac_methods, parse_method);
  s.bc_reporting = parse_list(t, "bc_reporting", s.bc_reporting, parse_bc_reporting);
  s.conditioning_set = get_strings(t, "conditioning_set");
  s.replications = static_cast<int>(get_int(t, "replications", s.replications, 2));
  s.seed = get_seed(t, "seed", s.seed);
  s.maic_second_moments = get_bool(t, "maic_second_moments", false);
  s.outcome_formula = parse_formula(t, "outcome_formula");
  s.gcomp_se = parse_gcomp_se(t, s.gcomp_se);
  s.bootstrap_replicates = static_cast<int>(get_int(t, "bootstrap_replicates", s.bootstrap_replicates, 2));
  s.threads = static_cast<unsigned>(get_int(t, "threads", 0, 0));
  return s;
}

inline ProbeSpec parse_probe(const toml::table& t) {
  allow_keys(t, "[[probe]]", {"name", "shared", "tolerance", "perturbed"});
  ProbeSpec p{get_string(t, "name").value_or("probe"), CovariateDistribution::point_mass(0.0)};
  const auto shared = get_string(t, "shared").value_or("none");
  bool known = false;
  for (auto s : {SharedMoments::None, SharedMoments::Mean, SharedMoments::MeanAndVariance}) {
    if (shared_moments_name(s) == shared) {
      p.shared = s;
      known = true;
    }
  }
  if (!known) config_fail(*t.get("shared"), "'shared' must be none, mean or mean+variance");
  p.tolerance = get_real(t, "tolerance", 1e-8);
  const auto* n = t.get("perturbed");
  if (!n) throw ConfigError(at(t) + "probe needs a 'perturbed' law table");
  p.perturbed = parse_law(as_section(*n, "perturbed"), "[[probe]].perturbed");
  return p;
}

}  // namespace detail

/// Parses a scenario document. `source` names it in error messages; relative
/// data paths resolve against `base`.
inline ConfigFile parse_config(std::string_view text, std::string source = "<config>",
                               const std::filesystem::path& base = {}) {
  toml::table root;
  try {
    root = toml::parse(text, std::move(source));
  } catch (const toml::parse_error& e) {
    const auto& src = e.source();
    throw ConfigError((src.path ? std::string(*src.path) : std::string("<config>")) + ":" +
                      std::to_string(src.begin.line) + ": " + std::string(e.description()));
  }
  ConfigFile cfg;
  detail::allow_keys(root, "the document",
                     {"model", "model_bc", "dist", "dist_ac", "dist_bc", "quadrature", "trial", "adjust", "bench",
                      "probe"});
  using detail::as_section;
  if (const auto* n = root.get("model")) cfg.model = detail::parse_model(as_section(*n, "model"), "[model]");
  if (const auto* n = root.get("model_bc")) cfg.model_bc = detail::parse_model(as_section(*n, "model_bc"), "[model_bc]");
  if (const auto* n = root.get("dist")) cfg.dist = detail::parse_law(as_section(*n, "dist"), "[dist]");
  if (const auto* n = root.get("dist_ac")) cfg.dist_ac = detail::parse_law(as_section(*n, "dist_ac"), "[dist_ac]");
  if (const auto* n = root.get("dist_bc")) cfg.dist_bc = detail::parse_law(as_section(*n, "dist_bc"), "[dist_bc]");
  if (const auto* n = root.get("quadrature")) cfg.quadrature = detail::parse_quadrature(as_section(*n, "quadrature"));
  if (const auto* n = root.get("trial")) cfg.trial = detail::parse_trial(as_section(*n, "trial"));
  if (const auto* n = root.get("adjust")) cfg.adjust = detail::parse_adjust(as_section(*n, "adjust"), base);
  if (const auto* n = root.get("bench")) cfg.bench = detail::parse_bench(as_section(*n, "bench"));
  if (const auto* n = root.get("probe")) {
    const auto* arr = n->as_array();
    if (!arr) detail::config_fail(*n, "'probe' must be an array of tables ([[probe]])");
    for (const auto& e : *arr) cfg.probes.push_back(detail::parse_probe(as_section(e, "probe")));
  }
  if (cfg.model && cfg.dist && cfg.model->arity() != cfg.dist->dimension()) {
    throw ConfigError("[model] expects " + std::to_string(cfg.model->arity()) + " covariates but [dist] has " +
                      std::to_string(cfg.dist->dimension()));
  }
  return cfg;
}

inline ConfigFile load_config(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read config '" + path.string() + "'");
  const std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  auto cfg = parse_config(text, path.string(), path.parent_path());
  cfg.path = path;
  return cfg;
}

/// Bench scenario from [model], optional [model_bc], [dist_ac]/[dist_bc]
/// (each falling back to [dist]) and [bench].
inline ScenarioConfig make_scenario(const ConfigFile& cfg) {
  const auto& model = cfg.require_model();
  const auto dist_ac = cfg.dist_ac ? cfg.dist_ac : cfg.dist;
  const auto dist_bc = cfg.dist_bc ? cfg.dist_bc : cfg.dist;
  if (!dist_ac || !dist_bc) throw ConfigError(cfg.where() + "bench needs [dist_ac] and [dist_bc] (or [dist])");
  const BenchSettings b = cfg.bench.value_or(BenchSettings{});
  ScenarioConfig s(model, cfg.model_bc.value_or(model), *dist_ac, *dist_bc);
  s.n_ac = b.n_ac;
  s.n_bc = b.n_bc;
  s.allocation = b.allocation;
  for (auto m : b.ac_methods)
    for (auto r : b.bc_reporting) s.pairings.push_back({m, r});
  s.conditioning_set = b.conditioning_set;
  s.replications = b.replications;
  s.seed = b.seed;
  s.maic_second_moments = b.maic_second_moments;
  s.outcome_formula = b.outcome_formula;
  s.gcomp_se = b.gcomp_se;
  s.bootstrap_replicates = b.bootstrap_replicates;
  s.quadrature = cfg.quadrature;
  s.threads = b.threads;
  try {
    s.validate();
  } catch (const Error& e) {
    throw ConfigError(cfg.where() + e.what());
  }
  return s;
}

}  // namespace estimand
