#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "estimand/config.hpp"
#include "estimand/estimand.hpp"
#include "oracles.hpp"

using namespace estimand;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects failure messages; the first few are reported.
struct Checker {
  int failures = 0;
  std::ostringstream first;

  void expect(bool ok, const std::string& what) {
    if (ok) return;
    if (failures++ < 3) first << (failures > 1 ? "; " : "") << what;
  }
  Outcome done(const std::string& summary) const {
    if (failures == 0) return {true, summary};
    return {false, std::to_string(failures) + " failure(s): " + first.str()};
  }
};

std::string fmt(double v) { return format_double(v); }

const fs::path source_dir{ESTIMAND_SOURCE_DIR};
const std::string cli_binary{ESTIMAND_CLI};

fs::path work_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "estimand_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int shell(const std::string& args, const fs::path& log) {
  const std::string cmd = "\"" + cli_binary + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return status == -1 ? -1 : WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
  return files;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double signum(double v) { return (v > 0) - (v < 0); }

Outcome figures() {
  Checker c;
  const auto t0 = std::chrono::steady_clock::now();
  const auto checks = verify_figures();
  int matched = 0;
  for (const auto& k : checks) {
    matched += k.matches;
    c.expect(k.matches, "panel " + k.panel.id + " shading differs");
  }
  QuadratureSettings doubled;
  doubled.nodes = 128;
  const auto fine = verify_figures(doubled);
  double drift = 0.0;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    const auto& a = checks[i].report;
    const auto& b = fine[i].report;
    drift = std::max({drift, std::abs(a.mte - b.mte), std::abs(a.pacte - b.pacte), std::abs(a.ctem - b.ctem)});
  }
  c.expect(drift < 1e-9, "doubling quadrature nodes moved an estimand by " + fmt(drift));
  const auto log = work_dir() / "verify_figures.log";
  const int code = shell("verify-figures", log);
  const double elapsed = seconds_since(t0);
  c.expect(code == 0, "verify-figures exited " + std::to_string(code));
  c.expect(elapsed < 5.0, "runtime " + fmt(elapsed) + " s");
  return c.done(std::to_string(matched) + "/9 panels match, node-doubling drift " + fmt(drift) + ", CLI exit " +
                std::to_string(code) + ", " + fmt(elapsed) + " s");
}

Outcome closed_forms() {
  Checker c;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> coef(-1.0, 1.0), mean(-1.0, 1.0), sd(0.3, 1.5), small(-0.15, 0.15),
      p(0.1, 0.9);
  double worst = 0.0;
  int evaluated = 0;
  for (int i = 0; i < 200; ++i) {
    const int cls = i % 3;
    const bool log_link = (i / 3) % 4 == 0 && cls == 0;
    const auto link = log_link ? LinkFunction::log() : LinkFunction::identity();
    Coefficients beta;
    if (cls == 0) beta = Homogeneous{coef(gen), coef(gen), coef(gen)};
    else if (cls == 1) beta = LinearHeterogeneous{coef(gen), coef(gen), coef(gen), coef(gen)};
    else beta = Quadratic{coef(gen), coef(gen), small(gen), coef(gen), coef(gen), small(gen)};
    const auto model = OutcomeModel::canonical(link, beta);
    const auto dist = i % 5 == 4 ? CovariateDistribution::bernoulli(p(gen)) : CovariateDistribution::normal(mean(gen), sd(gen));
    const auto closed = closed_form_mte(model, dist);
    c.expect(closed.has_value(), "no closed form for case " + std::to_string(i));
    if (!closed) continue;
    const double err = std::abs(*closed - mte(model, dist));
    worst = std::max(worst, err);
    ++evaluated;
    c.expect(err < 1e-8, "case " + std::to_string(i) + " differs by " + fmt(err));
  }
  const double elapsed = seconds_since(t0);
  c.expect(elapsed < 10.0, "runtime " + fmt(elapsed) + " s");
  return c.done(std::to_string(evaluated) + " cases, max |diff| " + fmt(worst) + ", " + fmt(elapsed) + " s");
}

Outcome jensen() {
  Checker c;
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> b0(-1.0, 1.0), mag(0.2, 2.0), mean(-1.0, 1.0), sd(0.3, 2.0), p(0.1, 0.9);
  std::bernoulli_distribution coin(0.5);
  const std::vector<double> shrink{1.0, 0.5, 0.25, 0.1, 0.01};
  for (int i = 0; i < 100; ++i) {
    const double beta0 = b0(gen);
    const double beta_x = (coin(gen) ? 1 : -1) * mag(gen);
    const double beta_t = (coin(gen) ? 1 : -1) * mag(gen);
    const auto dist = i % 2 ? CovariateDistribution::normal(mean(gen), sd(gen)) : CovariateDistribution::bernoulli(p(gen));
    double previous = 0.0;
    for (double s : shrink) {
      const auto model = OutcomeModel::canonical(LinkFunction::logit(), Homogeneous{beta0, s * beta_x, beta_t});
      const double m = mte(model, dist);
      const double ratio = m / beta_t;
      c.expect(ratio > 0.0 && ratio < 1.0,
               "model " + std::to_string(i) + " scale " + fmt(s) + ": MTE/betaT = " + fmt(ratio));
      c.expect(std::abs(m) > previous, "model " + std::to_string(i) + ": |MTE| not increasing at scale " + fmt(s));
      previous = std::abs(m);
    }
  }
  return c.done("100 models x 5 prognostic scales: 0 < MTE/betaT < 1 and |MTE| increasing as betaX -> 0");
}

Outcome quadratic_ordering() {
  Checker c;
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> coef(-1.0, 1.0), mag(0.05, 0.5), mean(-1.0, 1.0), sd(0.5, 1.2),
      log_b2(-0.3, 0.1);
  std::bernoulli_distribution coin(0.5);
  double worst_identity = 0.0;
  for (auto link : {LinkFunction::identity(), LinkFunction::log(), LinkFunction::logit()}) {
    for (int i = 0; i < 100; ++i) {
      const double b2t = (coin(gen) ? 1 : -1) * (link.kind() == LinkKind::Log ? 0.4 * mag(gen) : mag(gen));
      const double b2 = link.kind() == LinkKind::Log ? log_b2(gen) : coef(gen);
      const auto model = OutcomeModel::canonical(
          link, Quadratic{coef(gen), coef(gen), b2, coef(gen), coef(gen), b2t});
      const auto dist = CovariateDistribution::normal(mean(gen), sd(gen));
      const double gap = pacte(model, dist) - ctem(model, dist);
      c.expect(signum(gap) == signum(b2t), std::string(link.name()) + " model " + std::to_string(i) +
                                               ": sign(PACTE-CTEM) != sign(beta2T)");
      if (link.kind() == LinkKind::Identity) {
        const double d = std::abs(mte(model, dist) - pacte(model, dist));
        worst_identity = std::max(worst_identity, d);
        c.expect(d < 1e-8, "identity model " + std::to_string(i) + ": |MTE-PACTE| = " + fmt(d));
      }
    }
  }
  return c.done("300 models: sign(PACTE-CTEM) = sign(beta2T); identity max |MTE-PACTE| " + fmt(worst_identity));
}

Outcome taxonomy() {
  Checker c;
  struct Row {
    std::string name;
    OutcomeModel model;
    CovariateDistribution base;
    CovariateDistribution perturbed;
    SharedMoments shared;
    Verdict expected;
  };
  const auto id = LinkFunction::identity();
  const auto lg = LinkFunction::log();
  const auto lt = LinkFunction::logit();
  const auto n01 = CovariateDistribution::normal(0, 1);
  const auto n02 = CovariateDistribution::normal(0, 2);
  const auto n11 = CovariateDistribution::normal(1, 1);
  const auto pm1 = CovariateDistribution::discrete({-1, 1}, {0.5, 0.5});
  const auto hom = [](LinkFunction g) { return OutcomeModel::canonical(g, Homogeneous{-0.5, 1.0, 0.8}); };
  const auto het = [](LinkFunction g) { return OutcomeModel::canonical(g, LinearHeterogeneous{-0.5, 0.6, 0.8, 0.4}); };
  const auto quad = [](LinkFunction g) {
    return OutcomeModel::canonical(g, Quadratic{-0.5, 0.5, 0.1, 0.8, 0.3, 0.1});
  };
  const std::vector<Row> rows = {
      // prognostic covariate only
      {"homogeneous identity, location shift", hom(id), n01, n11, SharedMoments::None, Verdict::Invariant},
      {"homogeneous identity, variance change", hom(id), n01, n02, SharedMoments::Mean, Verdict::Invariant},
      {"homogeneous log, location shift", hom(lg), n01, n11, SharedMoments::None, Verdict::Invariant},
      {"homogeneous log, variance change", hom(lg), n01, n02, SharedMoments::Mean, Verdict::Invariant},
      {"homogeneous logit, variance change", hom(lt), n01, n02, SharedMoments::Mean, Verdict::Dependent},
      {"homogeneous logit, location shift", hom(lt), n01, n11, SharedMoments::None, Verdict::Dependent},
      // linear effect modification
      {"linear identity, variance change", het(id), n01, n02, SharedMoments::Mean, Verdict::Invariant},
      {"linear identity, shape change", het(id), n01, pm1, SharedMoments::MeanAndVariance, Verdict::Invariant},
      {"linear identity, location shift", het(id), n01, n11, SharedMoments::None, Verdict::Dependent},
      {"linear log, variance change", het(lg), n01, n02, SharedMoments::Mean, Verdict::Dependent},
      {"linear logit, variance change", het(lt), n01, n02, SharedMoments::Mean, Verdict::Dependent},
      // quadratic
      {"quadratic identity, shape change", quad(id), n01, pm1, SharedMoments::MeanAndVariance, Verdict::Invariant},
      {"quadratic identity, variance change", quad(id), n01, n02, SharedMoments::Mean, Verdict::Dependent},
      {"quadratic log, shape change", quad(lg), n01, pm1, SharedMoments::MeanAndVariance, Verdict::Dependent},
      {"quadratic logit, shape change", quad(lt), n01, pm1, SharedMoments::MeanAndVariance, Verdict::Dependent},
      {"quadratic logit, variance change", quad(lt), n01, n02, SharedMoments::Mean, Verdict::Dependent},
  };
  for (const auto& r : rows) {
    const auto p = dependence_probe(r.model, r.base, r.perturbed, r.shared);
    const double s = std::abs(p.mte_shift);
    if (r.expected == Verdict::Invariant) {
      c.expect(p.verdict == Verdict::Invariant && s < 1e-8, r.name + ": shift " + fmt(p.mte_shift));
    } else {
      c.expect(p.verdict == Verdict::Dependent && s >= 1e-3, r.name + ": shift " + fmt(p.mte_shift));
    }
  }
  return c.done(std::to_string(rows.size()) + " probe rows reproduced");
}

Outcome alignment() {
  Checker c;
  const auto t0 = std::chrono::steady_clock::now();
  const auto source = CovariateDistribution::normal(0, 1);
  const auto target = CovariateDistribution::normal(0.5, 1);
  const std::vector<double> target_mean{0.5};
  std::uint64_t seed = 1000;
  double worst_z = 0.0;
  for (auto link : {LinkFunction::identity(), LinkFunction::log(), LinkFunction::logit()}) {
    for (auto cls : {ModelClass::Homogeneous, ModelClass::LinearHeterogeneous, ModelClass::Quadratic}) {
      Coefficients beta;
      switch (cls) {
        case ModelClass::Homogeneous: beta = Homogeneous{-0.5, 0.5, 0.8}; break;
        case ModelClass::LinearHeterogeneous: beta = LinearHeterogeneous{-0.5, 0.5, 0.8, 0.4}; break;
        case ModelClass::Quadratic: beta = Quadratic{-0.5, 0.4, -0.2, 0.8, 0.3, 0.2}; break;
      }
      const auto model = OutcomeModel::canonical(link, beta);
      const auto ipd = simulate_trial({model, source, 1'000'000, 0.5, ++seed});
      const auto scale = scale_for_link(link);
      const double mte_truth = mte(model, target);
      const double ctem_truth = ctem(model, target);
      const std::string cell = std::string(link.name()) + "/" + std::string(model_class_name(cls));
      auto check = [&](const char* method, double est, double se, double truth) {
        const double z = std::abs(est - truth) / se;
        worst_z = std::max(worst_z, z);
        c.expect(z <= 3.0, cell + " " + method + ": z = " + fmt(z));
      };
      try {
        const auto w = maic_weights(ipd, target_mean);
        const auto r = maic_estimate(ipd, w, scale);
        check("MAIC", r.estimate, r.se, mte_truth);
        GcompOptions g;
        g.formula = formula_for(cls);
        g.se_method = GcompStandardError::DeltaMethod;
        const auto gc = stc_gcomp(ipd, target, link, g);
        check("STCGcomp", gc.estimate, gc.se, mte_truth);
        const auto pl = stc_plugin(ipd, target_mean, link, {formula_for(cls), {}});
        check("STCPlugin", pl.estimate, pl.se, ctem_truth);
      } catch (const Error& e) {
        c.expect(false, cell + ": " + e.what());
      }
    }
  }
  const double elapsed = seconds_since(t0);
  c.expect(elapsed < 120.0, "runtime " + fmt(elapsed) + " s");
  return c.done("27 cells at n=1e6, max |z| " + fmt(worst_z) + ", " + fmt(elapsed) + " s");
}

Outcome incompatibility() {
  Checker c;
  const auto t0 = std::chrono::steady_clock::now();
  const auto cfg = load_config(source_dir / "configs" / "examples" / "bench_incompatibility.toml");
  const auto scenario = make_scenario(cfg);
  c.expect(scenario.n_ac == 2000 && scenario.n_bc == 2000 && scenario.replications == 2000,
           "scenario is not n=2000, R=2000");
  const auto report = run_scenario(scenario);
  const double gap = oracle::two_point_mte - 1.0;
  std::ostringstream summary;
  for (const auto& r : report.rows) {
    if (r.ac_method != Method::MAIC) continue;
    if (r.bc_reporting == BcReporting::ConditionalCoefficient) {
      c.expect(std::abs(r.bias - gap) <= 3 * r.mc_se,
               "conditional bias " + fmt(r.bias) + " vs " + fmt(gap) + " (mc_se " + fmt(r.mc_se) + ")");
      summary << "conditional bias " << fmt(r.bias) << " (mc_se " << fmt(r.mc_se) << "); ";
    } else {
      c.expect(std::abs(r.bias) < 3 * r.mc_se, "marginal bias " + fmt(r.bias) + " (mc_se " + fmt(r.mc_se) + ")");
      c.expect(r.coverage_95 >= 0.93 && r.coverage_95 <= 0.97, "marginal coverage " + fmt(r.coverage_95));
      summary << "marginal bias " << fmt(r.bias) << " (mc_se " << fmt(r.mc_se) << "), coverage "
              << fmt(r.coverage_95) << "; ";
    }
  }
  c.expect(report.rows.size() == 2, "expected two MAIC rows");
  const double elapsed = seconds_since(t0);
  c.expect(elapsed < 600.0, "runtime " + fmt(elapsed) + " s");
  summary << fmt(elapsed) << " s";
  return c.done(summary.str());
}

Outcome maic_contract() {
  Checker c;
  const auto law = CovariateDistribution::product(
      {CovariateDistribution::normal(0, 1), CovariateDistribution::normal(1, 0.5), CovariateDistribution::bernoulli(0.4)});
  const auto ipd = simulate_trial({OutcomeModel::canonical(LinkFunction::logit(), Homogeneous{0, 1, 1}, 1.0, {0.3, 0.2}), law, 1000, 0.5, 5});
  // Squares only for the continuous components; a binary x equals its square.
  const Eigen::MatrixXd full = maic_moment_matrix(ipd, true);
  Eigen::MatrixXd moments(full.rows(), 5);
  moments << full.leftCols(3), full.middleCols(3, 2);
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> m1(-0.5, 0.5), m2(0.7, 1.3), pr(0.25, 0.55), s1(0.8, 1.2), s2(0.4, 0.6);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const std::vector<double> means{m1(gen), m2(gen), pr(gen)};
    const std::vector<double> sds{s1(gen), s2(gen)};
    const bool second = rep % 2 == 1;
    std::vector<double> target = means;
    if (second)
      for (std::size_t j = 0; j < 2; ++j) target.push_back(sds[j] * sds[j] + means[j] * means[j]);
    const Eigen::MatrixXd m = second ? moments : moments.leftCols(3);
    try {
      const auto w = maic_weights(m, target);
      Eigen::VectorXd matched = Eigen::VectorXd::Zero(m.cols());
      for (std::size_t i = 0; i < ipd.size(); ++i) matched += w.weights[i] * m.row(static_cast<Eigen::Index>(i)).transpose();
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double d = std::abs(matched[j] - target[static_cast<std::size_t>(j)]);
        worst = std::max(worst, d);
        c.expect(d < 1e-8, "target " + std::to_string(rep) + " moment " + std::to_string(j) + " off by " + fmt(d));
      }
      c.expect(w.ess <= static_cast<double>(ipd.size()), "ess above n");
    } catch (const Error& e) {
      c.expect(false, "target " + std::to_string(rep) + ": " + e.what());
    }
  }
  Eigen::MatrixXd two(2, 1);
  two << 0, 1;
  const auto w = maic_weights(two, std::vector<double>{0.75});
  c.expect(std::abs(w.weights[0] - 0.25) < 1e-10 && std::abs(w.weights[1] - 0.75) < 1e-10,
           "two-subject weights " + fmt(w.weights[0]) + ", " + fmt(w.weights[1]));
  return c.done("100 targets, max moment error " + fmt(worst) + "; two-subject weights (" + fmt(w.weights[0]) + ", " +
                fmt(w.weights[1]) + ")");
}

Outcome determinism() {
  Checker c;
  const auto examples = source_dir / "configs" / "examples";
  const std::vector<std::pair<std::string, std::string>> invocations = {
      {"estimands", "estimands --config \"" + (examples / "estimands_logit.toml").string() + "\""},
      {"figures", "verify-figures --config \"" + (source_dir / "configs" / "figures").string() + "\""},
      {"simulate", "simulate --config \"" + (examples / "simulate_bc.toml").string() + "\""},
      {"adjust", "adjust --config \"" + (examples / "adjust.toml").string() + "\""},
      {"bench", "bench --config \"" + (examples / "bench_identity.toml").string() + "\" --replications 100"},
  };
  int compared = 0;
  for (const auto& [name, args] : invocations) {
    std::map<std::string, std::string> runs[2];
    for (int k = 0; k < 2; ++k) {
      const auto out = work_dir() / "determinism" / (name + "_" + std::to_string(k));
      fs::create_directories(out);
      const int code = shell(args + " --out \"" + out.string() + "\"", work_dir() / (name + ".log"));
      c.expect(code == 0, name + " exited " + std::to_string(code));
      runs[k] = tree(out);
    }
    c.expect(!runs[0].empty(), name + " wrote nothing");
    c.expect(runs[0] == runs[1], name + " output directories differ");
    compared += static_cast<int>(runs[0].size());
  }
  return c.done(std::to_string(invocations.size()) + " invocations, " + std::to_string(compared) +
                " files byte-identical across runs");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"figure reproduction", figures},
      {"closed form vs numeric", closed_forms},
      {"Jensen / non-collapsibility ordering", jensen},
      {"quadratic ordering", quadratic_ordering},
      {"dependence taxonomy", taxonomy},
      {"estimator-estimand alignment", alignment},
      {"incompatibility bias", incompatibility},
      {"MAIC contract", maic_contract},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first
              << "): " << o.detail << std::endl;
  }
  std::cout << criteria.size() - static_cast<std::size_t>(failed) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
