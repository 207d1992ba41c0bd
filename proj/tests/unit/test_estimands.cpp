#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "estimand/estimand.hpp"
#include "oracles.hpp"

using namespace estimand;

namespace {

const auto kId = LinkFunction::identity();
const auto kLog = LinkFunction::log();
const auto kLogit = LinkFunction::logit();

OutcomeModel model(LinkFunction g, Coefficients c) { return OutcomeModel::canonical(g, c); }

}  // namespace

TEST(Ctex, Examples) {
  for (auto g : {kId, kLog, kLogit}) EXPECT_DOUBLE_EQ(ctex(model(g, Homogeneous{0.2, 1.0, 0.7}), -3.0), 0.7);
  EXPECT_DOUBLE_EQ(ctex(model(kId, LinearHeterogeneous{0, 1, 1, 0.5}), 2.0), 2.0);
  EXPECT_DOUBLE_EQ(ctex(model(kLogit, Quadratic{0, 0, 0, 1, 0, 1}), 2.0), 5.0);
}

TEST(Ctex, MatchesDefinitionOnLinkScale) {
  const std::vector<OutcomeModel> models = {model(kLogit, LinearHeterogeneous{-0.5, 1.2, 0.4, -0.3}),
                                            model(kLog, Quadratic{-1.0, 0.2, -0.1, 0.3, 0.2, 0.1}),
                                            model(kId, Quadratic{1.0, 0.5, 0.2, -1.0, 0.3, 0.4})};
  for (const auto& m : models) {
    for (double x = -3.0; x <= 3.0; x += 0.5) {
      const double v = ctex(m, x);
      EXPECT_NEAR(ctex_by_definition(m, std::span<const double>(&x, 1)), v, 1e-10);
      EXPECT_DOUBLE_EQ(ctex_curve(m)(x), v);
    }
  }
}

TEST(Ctex, HomogeneousIsConstant) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  const auto m = model(kLogit, Homogeneous{0.3, 1.7, -0.45});
  const auto curve = ctex_curve(m);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng);
    EXPECT_EQ(ctex(m, x), -0.45);
    EXPECT_EQ(curve(x), -0.45);
  }
  const auto d = CovariateDistribution::normal(0.2, 1.4);
  EXPECT_EQ(ctem(m, d), -0.45);
  EXPECT_NEAR(pacte(m, d), -0.45, 1e-14);
}

TEST(Ctem, Examples) {
  EXPECT_DOUBLE_EQ(ctem(model(kId, Quadratic{0, 0, 0, 1, 0, 1}), CovariateDistribution::normal(0, 1)), 1.0);
  EXPECT_DOUBLE_EQ(ctem(model(kLogit, Homogeneous{0, 1, 0.7}), CovariateDistribution::bernoulli(0.2)), 0.7);
  EXPECT_NEAR(ctem(model(kId, LinearHeterogeneous{0, 1, 1, 0.5}), CovariateDistribution::bernoulli(0.4)), 1.2, 1e-15);
}

TEST(Pacte, Examples) {
  EXPECT_NEAR(pacte(model(kId, Quadratic{0, 0, 0, 1, 0, 1}), CovariateDistribution::normal(0, 1)), 2.0, 1e-12);
  EXPECT_NEAR(pacte(model(kLog, Homogeneous{0, 1, 0.7}), CovariateDistribution::normal(3, 2)), 0.7, 1e-14);
  EXPECT_NEAR(pacte(model(kId, LinearHeterogeneous{0, 1, 1, 0.5}), CovariateDistribution::bernoulli(0.4)), 1.2, 1e-15);
}

TEST(Mte, Examples) {
  EXPECT_NEAR(mte(model(kId, Quadratic{0, 0, 0, 1, 1, 0.5}), CovariateDistribution::normal(1, 2)), 4.5, 1e-10);
  EXPECT_NEAR(mte(model(kLogit, Homogeneous{0, 2, 1}), CovariateDistribution::bernoulli(0.5)), 0.8698, 1e-3);
  EXPECT_NEAR(mte(model(kLogit, Homogeneous{0, 2, 1}), CovariateDistribution::bernoulli(0.5)), oracle::two_point_mte,
              1e-14);
  EXPECT_NEAR(mte(model(kLog, Homogeneous{-1, 0.3, 0.4}), CovariateDistribution::normal(0, 1)), 0.4, 1e-9);
}

TEST(Mte, LogitAgainstFrozenAndSimpsonOracles) {
  const auto m = model(kLogit, Homogeneous{0, 1, 1});
  EXPECT_NEAR(mte(m, CovariateDistribution::normal(0, 1)), oracle::logit_homog_mte_sd1, 1e-12);
  EXPECT_NEAR(mte(m, CovariateDistribution::normal(0, 2)), oracle::logit_homog_mte_sd2, 1e-9);
  QuadratureSettings fine;
  fine.nodes = 200;
  EXPECT_NEAR(mte(m, CovariateDistribution::normal(0, 2), fine), oracle::logit_homog_mte_sd2, 1e-12);

  // Heterogeneous logit model against Simpson integration.
  const auto het = model(kLogit, LinearHeterogeneous{-0.4, 0.9, 0.6, 0.5});
  const double m1 = oracle::normal_expectation([](double x) { return oracle::expit(-0.4 + 0.9 * x + 0.6 + 0.5 * x); },
                                               0.3, 1.2);
  const double m0 = oracle::normal_expectation([](double x) { return oracle::expit(-0.4 + 0.9 * x); }, 0.3, 1.2);
  EXPECT_NEAR(mte(het, CovariateDistribution::normal(0.3, 1.2)), oracle::logit(m1) - oracle::logit(m0), 1e-10);
}

TEST(Mte, LogQuadraticAgainstSimpson) {
  const auto m = model(kLog, Quadratic{-1.0, 0.4, -0.2, 0.5, 0.3, 0.1});
  const double mu = 0.5, sd = 1.0;
  const double m1 = oracle::normal_expectation(
      [](double x) { return std::exp(-1.0 + 0.4 * x - 0.2 * x * x + 0.5 + 0.3 * x + 0.1 * x * x); }, mu, sd);
  const double m0 = oracle::normal_expectation([](double x) { return std::exp(-1.0 + 0.4 * x - 0.2 * x * x); }, mu, sd);
  EXPECT_NEAR(mte(m, CovariateDistribution::normal(mu, sd)), std::log(m1) - std::log(m0), 1e-10);
}

TEST(Mte, DivergentLogMomentIsADomainError) {
  const auto m = model(kLog, Quadratic{0.5, 0.5, 0.3, 1.0, 0.4, 0.3});  // 0.6 >= 1 / (2 sd^2)
  EXPECT_THROW(mte(m, CovariateDistribution::normal(0.5, 1.0)), DomainError);
  EXPECT_NO_THROW(mte(m, CovariateDistribution::bernoulli(0.5)));
}

TEST(Mte, ErrorEstimateAndNodeDoubling) {
  for (const auto& check : verify_figures()) {
    QuadratureSettings doubled;
    doubled.nodes = 128;
    const auto model_ = OutcomeModel::canonical(check.panel.link, canonical_coefficients(check.panel.model_class));
    EXPECT_LT(std::abs(mte(model_, canonical_distribution(), doubled) - check.report.mte), 1e-9) << check.panel.id;
    EXPECT_LT(std::abs(pacte(model_, canonical_distribution(), doubled) - check.report.pacte), 1e-9) << check.panel.id;
  }
}

TEST(ClosedForm, Examples) {
  const auto bern = CovariateDistribution::bernoulli(0.4);
  const auto cf = closed_form_mte(model(kId, LinearHeterogeneous{0, 1, 1, 0.5}), bern);
  ASSERT_TRUE(cf.has_value());
  EXPECT_NEAR(*cf, 1.2, 1e-15);
  EXPECT_FALSE(closed_form_mte(model(kLogit, Homogeneous{0, 1, 1}), bern).has_value());
  EXPECT_FALSE(closed_form_mte(model(kLog, LinearHeterogeneous{0, 1, 1, 0.5}), bern).has_value());
  EXPECT_FALSE(closed_form_mte(model(kLog, Quadratic{0, 0.1, -0.1, 1, 0.1, 0.1}), bern).has_value());
  const auto log_h = closed_form_mte(model(kLog, Homogeneous{0, 1, 0.25}), bern);
  ASSERT_TRUE(log_h.has_value());
  EXPECT_EQ(*log_h, 0.25);
}

TEST(ClosedForm, AgreesWithQuadratureOnRandomModels) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> c(-1.0, 1.0), mu(-1.0, 1.0), sd(0.3, 2.0);
  for (int i = 0; i < 200; ++i) {
    const auto dist = CovariateDistribution::normal(mu(rng), sd(rng));
    const std::vector<OutcomeModel> ms = {model(kId, Homogeneous{c(rng), c(rng), c(rng)}),
                                          model(kId, LinearHeterogeneous{c(rng), c(rng), c(rng), c(rng)}),
                                          model(kId, Quadratic{c(rng), c(rng), c(rng), c(rng), c(rng), c(rng)}),
                                          model(kLog, Homogeneous{c(rng), c(rng), c(rng)})};
    for (const auto& m : ms) {
      const auto cf = closed_form_mte(m, dist);
      ASSERT_TRUE(cf.has_value());
      EXPECT_LT(std::abs(*cf - mte(m, dist)), 1e-8);
    }
  }
}

TEST(Properties, IdentityLinkIsDirectlyCollapsible) {
  const auto dist = CovariateDistribution::normal(0.7, 1.3);
  for (Coefficients c : {Coefficients{Homogeneous{1, 2, 0.3}}, Coefficients{LinearHeterogeneous{1, 2, 0.3, -0.6}},
                         Coefficients{Quadratic{1, 0.5, 0.2, 0.3, -0.4, 0.8}}}) {
    const auto m = model(kId, c);
    EXPECT_NEAR(mte(m, dist), pacte(m, dist), 1e-10);
  }
}

TEST(Properties, JensenOrderingForLogitHomogeneous) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> b0(-2, 2), bx(0.2, 3), bt(0.1, 2), mu(-1, 1), sd(0.3, 2);
  for (int i = 0; i < 100; ++i) {
    const double beta_t = (i % 2 ? 1.0 : -1.0) * bt(rng);
    const double beta_x = (i % 3 ? 1.0 : -1.0) * bx(rng);
    const auto dist = CovariateDistribution::normal(mu(rng), sd(rng));
    const double v = mte(model(kLogit, Homogeneous{b0(rng), beta_x, beta_t}), dist);
    if (beta_t > 0) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, beta_t);
    } else {
      EXPECT_LT(v, 0.0);
      EXPECT_GT(v, beta_t);
    }
  }
  EXPECT_NEAR(mte(model(kLogit, Homogeneous{0.3, 0.0, 0.8}), CovariateDistribution::normal(0, 2)), 0.8, 1e-8);
}

TEST(Properties, QuadraticOrderingOfPacteAndCtem) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> c(-1, 1), b2t(0.05, 1), mu(-1, 1), sd(0.3, 2);
  for (int i = 0; i < 100; ++i) {
    const double beta2t = (i % 2 ? 1.0 : -1.0) * b2t(rng);
    const auto dist = CovariateDistribution::normal(mu(rng), sd(rng));
    for (auto g : {kId, kLog, kLogit}) {
      const auto m = model(g, Quadratic{c(rng), c(rng), 0.0, c(rng), c(rng), beta2t});
      const double diff = pacte(m, dist) - ctem(m, dist);
      EXPECT_EQ(std::signbit(diff), std::signbit(beta2t));
      EXPECT_NEAR(diff, beta2t * dist.variance(), 1e-10);
    }
  }
}

TEST(Properties, LinearCtexCollapsesCtemAndPacte) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> c(-2, 2);
  const std::vector<CovariateDistribution> laws = {CovariateDistribution::normal(0.4, 1.7),
                                                   CovariateDistribution::bernoulli(0.35),
                                                   CovariateDistribution::discrete({-1, 0, 5}, {0.2, 0.5, 0.3})};
  for (int i = 0; i < 50; ++i) {
    for (const auto& d : laws) {
      for (auto g : {kId, kLog, kLogit}) {
        const auto h = model(g, Homogeneous{c(rng), c(rng), c(rng)});
        const auto l = model(g, LinearHeterogeneous{c(rng), c(rng), c(rng), c(rng)});
        EXPECT_NEAR(ctem(h, d), pacte(h, d), 1e-10);
        EXPECT_NEAR(ctem(l, d), pacte(l, d), 1e-10);
      }
    }
  }
}

TEST(EqualityMatrixTest, Examples) {
  const auto d = CovariateDistribution::normal(0.5, 1);
  const auto all = equality_matrix(model(kId, Homogeneous{0.5, 1, 1}), d);
  for (auto a : {Summary::MTE, Summary::CTEM, Summary::PACTE})
    for (auto b : {Summary::MTE, Summary::CTEM, Summary::PACTE}) EXPECT_TRUE(all(a, b));
  const auto logit = equality_matrix(model(kLogit, Homogeneous{0.5, 1, 1}), d);
  EXPECT_TRUE(logit(Summary::CTEM, Summary::PACTE));
  EXPECT_FALSE(logit(Summary::MTE, Summary::CTEM));
  EXPECT_FALSE(logit(Summary::MTE, Summary::PACTE));
  const auto quad = equality_matrix(model(kId, Quadratic{0.5, 0.5, 0.3, 1, 0.4, 0.3}), d);
  EXPECT_TRUE(quad(Summary::MTE, Summary::PACTE));
  EXPECT_FALSE(quad(Summary::CTEM, Summary::MTE));
  EXPECT_FALSE(quad(Summary::CTEM, Summary::PACTE));
}

TEST(EqualityMatrixTest, SymmetricReflexiveTransitive) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> c(-1, 1);
  const auto d = CovariateDistribution::normal(0.2, 0.9);
  for (int i = 0; i < 60; ++i) {
    for (auto g : {kId, kLog, kLogit}) {
      const Coefficients coefs = i % 3 == 0   ? Coefficients{Homogeneous{c(rng), c(rng), c(rng)}}
                                 : i % 3 == 1 ? Coefficients{LinearHeterogeneous{c(rng), c(rng), c(rng), c(rng)}}
                                              : Coefficients{Quadratic{c(rng), c(rng), -0.2, c(rng), c(rng), 0.2}};
      const auto m = equality_matrix(model(g, coefs), d);
      const std::array<Summary, 3> s{Summary::MTE, Summary::CTEM, Summary::PACTE};
      for (auto a : s) {
        EXPECT_TRUE(m(a, a));
        for (auto b : s) {
          EXPECT_EQ(m(a, b), m(b, a));
          for (auto e : s) {
            if (m(a, b) && m(b, e)) {
              EXPECT_TRUE(m(a, e));
            }
          }
        }
      }
    }
  }
}

TEST(EqualityMatrixTest, RenderMirrorsFigureLayout) {
  const auto text = render_matrix(EqualityMatrix::from_pairs(false, true, false), "t");
  EXPECT_EQ(text,
            "t\n"
            "        MTE   CTEM  PACTE\n"
            "PACTE   #     .     o\n"
            "CTEM    .     o     .\n"
            "MTE     o     .     #\n");
}

TEST(Figures, AllNinePanelsMatch) {
  const auto checks = verify_figures();
  ASSERT_EQ(checks.size(), 9u);
  for (const auto& c : checks) EXPECT_TRUE(c.matches) << panel_title(c.panel) << "\n" << render_matrix(c.observed);
}

TEST(Figures, AMismatchIsDetected) {
  const auto panel = figure_panels()[2];  // 1c
  const auto wrong = OutcomeModel::canonical(LinkFunction::logit(), Homogeneous{0.5, 0.0, 1.0});
  EXPECT_FALSE(check_panel(panel, wrong, canonical_distribution()).matches);
}

TEST(Report, CsvCarriesScaleAndFlags) {
  const auto r = compute_estimands(model(kLogit, Homogeneous{0, 2, 1}), CovariateDistribution::bernoulli(0.5));
  EXPECT_EQ(r.scale, Scale::LogOddsRatio);
  std::ostringstream os;
  write_estimands_csv_header(os);
  write_estimands_csv_row(os, r);
  std::istringstream lines(os.str());
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);
  EXPECT_EQ(header, "scale,MTE,CTEM,PACTE,MTE_closed_form,CTEM_closed_form,PACTE_closed_form");
  EXPECT_EQ(row.substr(0, 15), "log-odds-ratio,");
  EXPECT_NE(row.find(",false,true,true"), std::string::npos) << row;
}

TEST(DependenceProbe, Examples) {
  const auto id = model(kId, Homogeneous{0.2, 1.5, 0.7});
  auto p = dependence_probe(id, CovariateDistribution::normal(0, 1), CovariateDistribution::normal(0, 4),
                            SharedMoments::Mean);
  EXPECT_EQ(p.verdict, Verdict::Invariant);

  const auto logit = model(kLogit, Homogeneous{0, 1, 1});
  p = dependence_probe(logit, CovariateDistribution::normal(0, 1), CovariateDistribution::normal(0, 2),
                       SharedMoments::Mean);
  EXPECT_EQ(p.verdict, Verdict::Dependent);
  EXPECT_LT(std::abs(p.mte_perturbed), std::abs(p.mte_base));
  EXPECT_NEAR(p.mte_shift, oracle::logit_homog_mte_sd2 - oracle::logit_homog_mte_sd1, 1e-9);

  const auto quad = model(kId, Quadratic{0.1, 0.5, 0.3, 1.0, 0.4, 0.3});
  p = dependence_probe(quad, CovariateDistribution::normal(0, 1), CovariateDistribution::discrete({-1, 1}, {0.5, 0.5}),
                       SharedMoments::MeanAndVariance);
  EXPECT_EQ(p.verdict, Verdict::Invariant);
  EXPECT_LE(std::abs(p.mte_shift), 1e-8);
}

TEST(DependenceProbe, RejectsFalseSharedMomentClaims) {
  const auto m = model(kId, Homogeneous{0, 1, 1});
  EXPECT_THROW(dependence_probe(m, CovariateDistribution::normal(0, 1), CovariateDistribution::normal(1, 1),
                                SharedMoments::Mean),
               InvalidArgument);
  EXPECT_THROW(dependence_probe(m, CovariateDistribution::normal(0, 1), CovariateDistribution::normal(0, 2),
                                SharedMoments::MeanAndVariance),
               InvalidArgument);
}
