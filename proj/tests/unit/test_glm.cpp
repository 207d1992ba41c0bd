#include <gtest/gtest.h>

#include <cmath>

#include "estimand/estimand.hpp"
#include "oracles.hpp"

using namespace estimand;

namespace {

// Binary x, binary t, binary y with the given counts per (x, t) cell.
TrialIPD binary_cells(const std::array<std::array<std::pair<int, int>, 2>, 2>& events_total) {
  TrialIPD ipd;
  ipd.family = FamilyKind::Bernoulli;
  ipd.covariate_names = {"x1"};
  for (int x = 0; x < 2; ++x) {
    for (int t = 0; t < 2; ++t) {
      const auto [events, total] = events_total[x][t];
      for (int i = 0; i < total; ++i) {
        ipd.x.push_back(x);
        ipd.t.push_back(t);
        ipd.y.push_back(i < events ? 1.0 : 0.0);
      }
    }
  }
  return ipd;
}

}  // namespace

TEST(Glm, NoiselessIdentityDataIsInterpolated) {
  const auto model = OutcomeModel::canonical(LinkFunction::identity(), Homogeneous{1, 2, 0.5}, 0.0);
  const auto ipd = simulate_trial({model, CovariateDistribution::normal(0, 1), 200, 0.5, 4});
  const auto fit = fit_glm(ipd, Formula::MainEffects, LinkFunction::identity());
  EXPECT_TRUE(fit.converged);
  EXPECT_NEAR(fit.coefficient("(Intercept)"), 1.0, 1e-10);
  EXPECT_NEAR(fit.coefficient("x1"), 2.0, 1e-10);
  EXPECT_NEAR(fit.coefficient("t"), 0.5, 1e-10);
}

TEST(Glm, SaturatedLogitMatchesCellLogits) {
  const auto ipd = binary_cells({{{{{30, 100}, {45, 90}}}, {{{60, 110}, {70, 80}}}}});
  const auto fit = fit_glm(ipd, Formula::Interaction, LinkFunction::logit());
  ASSERT_TRUE(fit.converged);
  auto lg = [](double e, double n) { return std::log(e / (n - e)); };
  const double l00 = lg(30, 100), l01 = lg(45, 90), l10 = lg(60, 110), l11 = lg(70, 80);
  EXPECT_NEAR(fit.coefficient("(Intercept)"), l00, 1e-9);
  EXPECT_NEAR(fit.coefficient("x1"), l10 - l00, 1e-9);
  EXPECT_NEAR(fit.coefficient("t"), l01 - l00, 1e-9);
  EXPECT_NEAR(fit.coefficient("x1:t"), (l11 - l10) - (l01 - l00), 1e-9);
  EXPECT_NEAR(fit.se("x1:t"), std::sqrt(1. / 30 + 1. / 70 + 1. / 45 + 1. / 45 + 1. / 60 + 1. / 50 + 1. / 70 + 1. / 10),
              1e-8);
}

TEST(Glm, TreatmentOnlyLogitEqualsWoolf) {
  const auto model = OutcomeModel::canonical(LinkFunction::logit(), Homogeneous{-0.3, 1, 0.8});
  const auto ipd = simulate_trial({model, CovariateDistribution::normal(0, 1), 5000, 0.5, 12});
  const auto fit = fit_glm(ipd, Formula::TreatmentOnly, LinkFunction::logit());
  const auto crude = aggregate(ipd, Scale::LogOddsRatio).marginal;
  EXPECT_NEAR(fit.treatment_coefficient(), crude.value, 1e-8);
  EXPECT_NEAR(fit.treatment_se(), crude.se, 1e-8);
}

TEST(Glm, ConvergedImpliesSmallScoreAndSymmetricCovariance) {
  for (auto g : {LinkFunction::identity(), LinkFunction::log(), LinkFunction::logit()}) {
    const auto model = OutcomeModel::canonical(g, Quadratic{-0.5, 0.3, -0.1, 0.4, 0.2, 0.1});
    const auto ipd = simulate_trial({model, CovariateDistribution::normal(0.2, 1), 4000, 0.5, 21});
    const auto fit = fit_glm(ipd, Formula::QuadraticInteraction, g);
    ASSERT_TRUE(fit.converged) << g.name();
    EXPECT_LT(fit.score_norm, 1e-10);
    EXPECT_LT((fit.covariance - fit.covariance.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(fit.covariance);
    EXPECT_GE(eig.eigenvalues().minCoeff(), 0.0);
    EXPECT_EQ(fit.terms, (std::vector<std::string>{"(Intercept)", "x1", "x1^2", "t", "x1:t", "x1^2:t"}));
  }
}

TEST(Glm, RankDeficiencyIsSingularDesign) {
  TrialIPD ipd;
  ipd.family = FamilyKind::Gaussian;
  ipd.covariate_names = {"x1", "x2"};
  for (int i = 0; i < 40; ++i) {
    ipd.x.push_back(i);
    ipd.x.push_back(2.0 * i);
    ipd.t.push_back(i % 2);
    ipd.y.push_back(0.1 * i);
  }
  EXPECT_THROW(fit_glm(ipd, Formula::MainEffects, LinkFunction::identity()), SingularDesignError);
}

TEST(Glm, SeparationIsDetected) {
  TrialIPD ipd;
  ipd.family = FamilyKind::Bernoulli;
  ipd.covariate_names = {"x1"};
  for (int i = 0; i < 60; ++i) {
    const double x = i - 29.5;
    ipd.x.push_back(x);
    ipd.t.push_back(i % 2);
    ipd.y.push_back(x > 0 ? 1.0 : 0.0);
  }
  EXPECT_THROW(fit_glm(ipd, Formula::MainEffects, LinkFunction::logit()), SeparationError);
}

TEST(Glm, FamilyMismatchRejected) {
  const auto model = OutcomeModel::canonical(LinkFunction::identity(), Homogeneous{0, 1, 1});
  const auto ipd = simulate_trial({model, CovariateDistribution::normal(0, 1), 100, 0.5, 1});
  EXPECT_THROW(fit_glm(ipd, Formula::MainEffects, LinkFunction::logit()), FamilyLinkError);
}

TEST(Glm, IterationCapIsReportedNotThrown) {
  const auto model = OutcomeModel::canonical(LinkFunction::logit(), Homogeneous{0, 1, 1});
  const auto ipd = simulate_trial({model, CovariateDistribution::normal(0, 1), 500, 0.5, 2});
  FitOptions fo;
  fo.max_iterations = 1;
  const auto fit = fit_glm(ipd, Formula::MainEffects, LinkFunction::logit(), fo);
  EXPECT_FALSE(fit.converged);
  EXPECT_EQ(fit.iterations, 1);
}

TEST(Glm, CentringMakesTreatmentCoefficientTheEffectAtTheCentre) {
  const auto model = OutcomeModel::canonical(LinkFunction::logit(), LinearHeterogeneous{-0.2, 0.8, 0.5, 0.6});
  const auto ipd = simulate_trial({model, CovariateDistribution::normal(0, 1), 3000, 0.5, 31});
  const auto raw = fit_glm(ipd, Formula::Interaction, LinkFunction::logit());
  FitOptions fo;
  fo.centering = {0.7};
  const auto centred = fit_glm(ipd, Formula::Interaction, LinkFunction::logit(), fo);
  EXPECT_NEAR(centred.treatment_coefficient(), raw.coefficient("t") + 0.7 * raw.coefficient("x1:t"), 1e-8);
}

TEST(Glm, LargeSampleConsistency) {
  const auto d = CovariateDistribution::normal(0, 1);
  // TreatmentOnly tracks the MTE for every link.
  for (auto g : {LinkFunction::identity(), LinkFunction::log(), LinkFunction::logit()}) {
    const auto model = OutcomeModel::canonical(g, Homogeneous{-0.5, 0.5, 0.4});
    const auto ipd = simulate_trial({model, d, 1'000'000, 0.5, 77});
    const auto fit = fit_glm(ipd, Formula::TreatmentOnly, g);
    EXPECT_NEAR(fit.treatment_coefficient(), mte(model, d), 3 * fit.treatment_se()) << g.name();
    if (g.kind() == LinkKind::Identity) {
      const auto full = fit_glm(ipd, Formula::MainEffects, g);
      EXPECT_NEAR(full.coefficient("(Intercept)"), -0.5, 3 * full.se("(Intercept)"));
      EXPECT_NEAR(full.coefficient("x1"), 0.5, 3 * full.se("x1"));
      EXPECT_NEAR(full.coefficient("t"), 0.4, 3 * full.se("t"));
    }
  }
}

TEST(Glm, NonCollapsibilityRealisedInData) {
  const auto model = OutcomeModel::canonical(LinkFunction::logit(), Homogeneous{0, 2, 1});
  const auto ipd = simulate_trial({model, CovariateDistribution::normal(0, 1), 1'000'000, 0.5, 78});
  const auto adjusted = fit_glm(ipd, Formula::MainEffects, LinkFunction::logit());
  const auto crude = fit_glm(ipd, Formula::TreatmentOnly, LinkFunction::logit());
  EXPECT_GT(std::abs(adjusted.treatment_coefficient()), std::abs(crude.treatment_coefficient()));
  EXPECT_NEAR(adjusted.coefficient("x1"), 2.0, 3 * adjusted.se("x1"));
  EXPECT_NEAR(adjusted.coefficient("t"), 1.0, 3 * adjusted.se("t"));
}
