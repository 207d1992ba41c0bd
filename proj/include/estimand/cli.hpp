#pragma once

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "estimand/config.hpp"
#include "estimand/estimand.hpp"

namespace estimand::cli {

struct Invocation {
  std::string subcommand;
  std::filesystem::path config;
  std::filesystem::path out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> quadrature_nodes;
  std::optional<int> replications;
};

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex16(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  return os;
}

inline void check_written(std::ostream& os, const std::filesystem::path& path) {
  os.flush();
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

inline ConfigFile load(const Invocation& inv) {
  if (inv.config.empty()) throw ConfigError(inv.subcommand + " needs --config <path>");
  auto cfg = load_config(inv.config);
  if (inv.quadrature_nodes) {
    if (*inv.quadrature_nodes < 1 || *inv.quadrature_nodes > 512) {
      throw InvalidArgument("--quadrature-nodes must lie in [1, 512]");
    }
    cfg.quadrature.nodes = *inv.quadrature_nodes;
  }
  return cfg;
}

inline int cmd_estimands(const Invocation& inv, std::ostream& out) {
  auto cfg = load(inv);
  if (inv.seed) cfg.quadrature.seed = *inv.seed;
  const auto& model = cfg.require_model();
  const auto& dist = cfg.require_dist();
  const auto report = compute_estimands(model, dist, cfg.quadrature);
  const auto matrix = equality_matrix(report);
  ensure_dir(inv.out);
  {
    const auto path = inv.out / "estimands.csv";
    auto os = open_out(path);
    write_estimands_csv_header(os);
    write_estimands_csv_row(os, report);
    check_written(os, path);
  }
  const std::string title = std::string(model_class_name(model.model_class())) + " model, " +
                            std::string(model.link().name()) + " link, X ~ " + dist.describe();
  const std::string grid = render_matrix(matrix, title);
  {
    const auto path = inv.out / "matrix.txt";
    auto os = open_out(path);
    os << grid;
    check_written(os, path);
  }
  if (!cfg.probes.empty()) {
    const auto path = inv.out / "probes.csv";
    auto os = open_out(path);
    os << "probe,scale,shared_moments,base_law,perturbed_law,mte_base,mte_perturbed,mte_shift,tolerance,verdict\n";
    for (const auto& p : cfg.probes) {
      const auto r = dependence_probe(model, dist, p.perturbed, p.shared, cfg.quadrature, p.tolerance);
      os << p.name << ',' << scale_name(report.scale) << ',' << shared_moments_name(r.shared) << ",\""
         << dist.describe() << "\",\"" << p.perturbed.describe() << "\"," << format_double(r.mte_base) << ','
         << format_double(r.mte_perturbed) << ',' << format_double(r.mte_shift) << ','
         << format_double(r.tolerance) << ',' << verdict_name(r.verdict) << " (evidence from this perturbation)\n";
    }
    check_written(os, path);
  }
  out << grid;
  return 0;
}

// Loads <dir>/<panel>.toml for each panel; the model must match the panel's
// class and link.
inline std::vector<PanelCheck> checks_from_dir(const std::filesystem::path& dir, const QuadratureSettings* nodes_override) {
  std::vector<PanelCheck> out;
  for (const auto& p : figure_panels()) {
    auto cfg = load_config(dir / (p.id + ".toml"));
    if (nodes_override) cfg.quadrature = *nodes_override;
    const auto& model = cfg.require_model();
    if (model.model_class() != p.model_class || !(model.link() == p.link)) {
      throw ConfigError(cfg.where() + "panel " + p.id + " needs a " + std::string(model_class_name(p.model_class)) +
                        " model with the " + std::string(p.link.name()) + " link");
    }
    out.push_back(check_panel(p, model, cfg.require_dist(), cfg.quadrature));
  }
  return out;
}

inline int cmd_verify_figures(const Invocation& inv, std::ostream& out, std::ostream& err) {
  QuadratureSettings settings;
  if (inv.quadrature_nodes) {
    if (*inv.quadrature_nodes < 1 || *inv.quadrature_nodes > 512) {
      throw InvalidArgument("--quadrature-nodes must lie in [1, 512]");
    }
    settings.nodes = *inv.quadrature_nodes;
  }
  const auto checks = inv.config.empty() ? verify_figures(settings)
                                         : checks_from_dir(inv.config, inv.quadrature_nodes ? &settings : nullptr);
  std::ostringstream text;
  int mismatches = 0;
  for (const auto& c : checks) {
    text << render_matrix(c.observed, panel_title(c.panel));
    text << "  MTE=" << format_double(c.report.mte) << " CTEM=" << format_double(c.report.ctem)
         << " PACTE=" << format_double(c.report.pacte) << "  " << (c.matches ? "matches" : "MISMATCH") << "\n\n";
    if (!c.matches) ++mismatches;
  }
  text << (mismatches == 0 ? "all 9 panels match\n" : std::to_string(mismatches) + " panel(s) disagree\n");
  if (inv.out != ".") {
    ensure_dir(inv.out);
    const auto path = inv.out / "figures.txt";
    auto os = open_out(path);
    os << text.str();
    check_written(os, path);
  }
  out << text.str();
  if (mismatches) {
    err << "error[E_FIGURE_MISMATCH]: " << mismatches << " panel(s) disagree with the expected shading\n";
    return 2;
  }
  return 0;
}

inline int cmd_simulate(const Invocation& inv, std::ostream& out) {
  const auto cfg = load(inv);
  const auto& model = cfg.require_model();
  const auto& dist = cfg.require_dist();
  TrialConfig tc{model, dist, cfg.trial.n, cfg.trial.allocation, inv.seed.value_or(cfg.trial.seed)};
  const auto ipd = simulate_trial(tc);
  AggregateOptions opts;
  opts.continuity_correction = cfg.trial.continuity_correction;
  opts.conditioning_set = cfg.trial.conditioning_set;
  const auto summary = aggregate(ipd, scale_for_link(model.link()), opts);
  ensure_dir(inv.out);
  {
    const auto path = inv.out / "ipd.csv";
    auto os = open_out(path);
    write_ipd_csv(os, ipd);
    check_written(os, path);
  }
  {
    const auto path = inv.out / "aggregate.csv";
    auto os = open_out(path);
    write_aggregate_csv(os, summary);
    check_written(os, path);
  }
  out << "simulated " << ipd.size() << " subjects (" << ipd.arm_size(1) << " treated)\n";
  return 0;
}

inline int cmd_adjust(const Invocation& inv, std::ostream& out) {
  const auto cfg = load(inv);
  if (!cfg.adjust) throw ConfigError(cfg.where() + "missing [adjust] section");
  const auto& a = *cfg.adjust;
  const auto link = parse_link(a.link);
  const auto scale = scale_for_link(link);
  TrialIPD ipd;
  {
    std::ifstream is(a.ipd, std::ios::binary);
    if (!is) throw IoError("cannot read IPD '" + a.ipd.string() + "'");
    ipd = read_ipd_csv(is, canonical_family(link));
  }
  AggregateSummary bc;
  {
    std::ifstream is(a.aggregate, std::ios::binary);
    if (!is) throw IoError("cannot read aggregate summary '" + a.aggregate.string() + "'");
    bc = read_aggregate_csv(is);
  }
  if (bc.covariate_names != ipd.covariate_names) {
    throw InvalidArgument("IPD covariates {" + join(ipd.covariate_names, ";") + "} differ from summary covariates {" +
                          join(bc.covariate_names, ";") + "}");
  }
  const Formula formula = a.formula.value_or(cfg.model ? formula_for(cfg.model->model_class()) : Formula::Interaction);

  std::vector<AdjustmentResult> ac_results;
  for (auto m : a.methods) {
    switch (m) {
      case Method::MAIC: {
        const auto w = maic_weights(ipd, bc.covariate_means, bc.covariate_sds, a.maic_second_moments);
        ac_results.push_back(maic_estimate(ipd, w, scale));
        out << "MAIC effective sample size " << format_double(w.ess) << " of " << ipd.size() << "\n";
        break;
      }
      case Method::STCPlugin: ac_results.push_back(stc_plugin(ipd, bc.covariate_means, link, {formula, {}})); break;
      case Method::STCGcomp: {
        std::vector<CovariateDistribution> parts;
        const auto& tmpl_src = cfg.dist_bc ? cfg.dist_bc : cfg.dist;
        CovariateDistribution tmpl = tmpl_src ? *tmpl_src : CovariateDistribution::normal(0.0, 1.0);
        if (!tmpl_src) {
          for (std::size_t j = 0; j < bc.covariate_means.size(); ++j) parts.push_back(CovariateDistribution::normal(0.0, 1.0));
          tmpl = CovariateDistribution::product(parts);
        }
        GcompOptions g;
        g.formula = formula;
        g.quadrature = cfg.quadrature;
        g.se_method = a.gcomp_se;
        g.bootstrap_replicates = a.bootstrap_replicates;
        g.seed = inv.seed.value_or(a.seed);
        ac_results.push_back(stc_gcomp(ipd, match_moments(tmpl, bc.covariate_means, bc.covariate_sds), link, g));
        break;
      }
      case Method::Crude: ac_results.push_back(crude_result(aggregate(ipd, scale), "AC")); break;
      case Method::Regression: throw InvalidArgument("Regression is not an AC adjustment method");
    }
  }
  std::vector<AdjustmentResult> bc_results;
  for (auto r : a.bc_reporting)
    bc_results.push_back(r == BcReporting::MarginalCrude ? crude_result(bc) : conditional_result(bc));

  ensure_dir(inv.out);
  {
    const auto path = inv.out / "adjustment.csv";
    auto os = open_out(path);
    write_adjustment_csv_header(os);
    for (const auto& r : ac_results) write_adjustment_csv_row(os, r);
    for (const auto& r : bc_results) write_adjustment_csv_row(os, r);
    check_written(os, path);
  }
  {
    const auto path = inv.out / "itc.csv";
    auto os = open_out(path);
    write_itc_csv_header(os);
    for (const auto& ac : ac_results)
      for (const auto& b : bc_results) write_itc_csv_row(os, anchored_itc(ac, b));
    check_written(os, path);
  }
  for (const auto& ac : ac_results)
    for (const auto& b : bc_results) {
      const auto itc = anchored_itc(ac, b);
      const auto c = compatibility_check(ac, b);
      out << method_name(ac.method) << " vs " << method_name(b.method) << ": " << format_double(itc.delta_ab)
          << " (se " << format_double(itc.se) << ") " << c.diagnosis << "\n";
    }
  return 0;
}

inline int cmd_bench(const Invocation& inv, std::ostream& out) {
  const auto cfg = load(inv);
  auto scenario = make_scenario(cfg);
  if (inv.seed) scenario.seed = *inv.seed;
  if (inv.replications) {
    if (*inv.replications < 2) throw InvalidArgument("--replications must be at least 2");
    scenario.replications = *inv.replications;
  }
  std::string key = read_file(inv.config);
  key += "\nseed=" + std::to_string(scenario.seed) + "\nreplications=" + std::to_string(scenario.replications) +
         "\nnodes=" + std::to_string(scenario.quadrature.nodes) + "\n";
  const auto dir = inv.out / hex16(fnv1a(key));
  const auto report = run_scenario(scenario);
  emit_report(report, dir);
  {
    const auto path = dir / "config.toml";
    auto os = open_out(path);
    os << read_file(inv.config);
    check_written(os, path);
  }
  for (const auto& r : report.rows) {
    out << r.pairing << ": bias " << format_double(r.bias) << " (mc_se " << format_double(r.mc_se) << "), coverage "
        << format_double(r.coverage_95) << "\n";
  }
  out << dir.string() << "\n";
  return 0;
}

}  // namespace detail

inline int exit_code(const Error& e) { return e.kind() == ErrorKind::Numeric ? 2 : 1; }

/// Runs one invocation. Returns 0 on success, 1 on configuration or
/// validation errors, 2 on numeric failures. Diagnostics go to `err` as
/// `error[CODE]: message`.
inline int run(const std::vector<std::string>& argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Treatment-effect estimands, population adjustment and incompatibility bench", "estimand"};
  app.require_subcommand(1);
  Invocation inv;
  std::optional<std::uint64_t> seed;
  std::optional<int> nodes, reps;
  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", inv.config, config_required ? "scenario TOML file" : "panel config directory");
    if (config_required) c->required();
    sub->add_option("--out", inv.out, "output directory");
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--quadrature-nodes", nodes, "Gauss-Hermite nodes per normal component");
  };
  auto* estimands = app.add_subcommand("estimands", "MTE, CTEM, PACTE and the equality matrix for one scenario");
  add_common(estimands, true);
  auto* figures = app.add_subcommand("verify-figures", "check the nine equality patterns");
  add_common(figures, false);
  auto* simulate = app.add_subcommand("simulate", "simulate one trial and its published summary");
  add_common(simulate, true);
  auto* adjust = app.add_subcommand("adjust", "population-adjusted anchored comparison from IPD and a summary");
  add_common(adjust, true);
  auto* bench = app.add_subcommand("bench", "Monte Carlo study of compatible and incompatible pairings");
  add_common(bench, true);
  bench->add_option("--replications", reps, "override [bench] replications");

  std::vector<std::string> args(argv.rbegin(), argv.rend());
  if (!args.empty()) args.pop_back();  // program name
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error[E_USAGE]: " << e.what() << "\n";
    return 1;
  }
  inv.subcommand = app.get_subcommands().front()->get_name();
  inv.seed = seed;
  inv.quadrature_nodes = nodes;
  inv.replications = reps;
  try {
    if (inv.subcommand == "estimands") return detail::cmd_estimands(inv, out);
    if (inv.subcommand == "verify-figures") return detail::cmd_verify_figures(inv, out, err);
    if (inv.subcommand == "simulate") return detail::cmd_simulate(inv, out);
    if (inv.subcommand == "adjust") return detail::cmd_adjust(inv, out);
    return detail::cmd_bench(inv, out);
  } catch (const Error& e) {
    err << "error[" << e.code() << "]: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error[E_IO]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error[E_INTERNAL]: " << e.what() << "\n";
    return 2;
  }
}

inline int run(int argc, char** argv) { return run(std::vector<std::string>(argv, argv + argc)); }

}  // namespace estimand::cli
