#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "estimand/adjustment.hpp"
#include "estimand/errors.hpp"
#include "estimand/format.hpp"
#include "estimand/link.hpp"
#include "estimand/trial.hpp"

namespace estimand {

struct MaicWeights {
  Eigen::VectorXd alpha;             // moment-matching coefficients
  std::vector<double> weights;       // normalised to sum to 1
  double ess = 0.0;                  // (sum w)^2 / sum w^2
  Eigen::MatrixXd centered_moments;  // moment functions minus target, one row per subject
  int iterations = 0;
};

/// Moment functions of the index covariates: x_j for every covariate and,
/// when `second_moments`, x_j^2 as well.
inline Eigen::MatrixXd maic_moment_matrix(const TrialIPD& ipd, bool second_moments = false) {
  const auto n = static_cast<Eigen::Index>(ipd.size());
  const auto k = static_cast<Eigen::Index>(ipd.covariate_count());
  Eigen::MatrixXd m(n, second_moments ? 2 * k : k);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      const double v = ipd.covariate(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
      m(i, j) = v;
      if (second_moments) m(i, k + j) = v * v;
    }
  }
  return m;
}

/// Target moments matching maic_moment_matrix: means, then E(X^2) = sd^2 + mean^2.
inline std::vector<double> maic_targets(std::span<const double> means, std::span<const double> sds,
                                        bool second_moments = false) {
  std::vector<double> t(means.begin(), means.end());
  if (second_moments) {
    if (sds.size() != means.size()) throw ArityError("need one sd per covariate mean");
    for (std::size_t j = 0; j < means.size(); ++j) t.push_back(sds[j] * sds[j] + means[j] * means[j]);
  }
  return t;
}

/// Method-of-moments weights w_i proportional to exp(alpha' (m_i - target)),
/// with alpha minimising log sum_i exp(alpha' (m_i - target)) by damped
/// Newton. At the optimum the weighted moments equal the target.
inline MaicWeights maic_weights(const Eigen::MatrixXd& index_moments, std::span<const double> target_moments,
                                double tolerance = 1e-10, int max_iterations = 500) {
  const Eigen::Index n = index_moments.rows();
  const Eigen::Index k = index_moments.cols();
  if (static_cast<Eigen::Index>(target_moments.size()) != k) {
    throw ArityError("target has " + std::to_string(target_moments.size()) + " moments, index data " +
                     std::to_string(k));
  }
  if (n < 2) throw InvalidArgument("MAIC needs at least two index subjects");
  const Eigen::Map<const Eigen::VectorXd> target(target_moments.data(), k);

  MaicWeights out;
  out.centered_moments = index_moments.rowwise() - target.transpose();
  const auto& z = out.centered_moments;

  // The target must lie strictly inside each moment's observed range.
  for (Eigen::Index j = 0; j < k; ++j) {
    if (!(z.col(j).minCoeff() < 0.0 && z.col(j).maxCoeff() > 0.0)) {
      throw InfeasibleTargetError("target moment " + std::to_string(j) + " (" + format_double(target[j]) +
                                  ") lies outside the index data range [" +
                                  format_double(index_moments.col(j).minCoeff()) + ", " +
                                  format_double(index_moments.col(j).maxCoeff()) + "]");
    }
  }

  auto objective = [&](const Eigen::VectorXd& a, Eigen::VectorXd* p) {
    const Eigen::VectorXd s = z * a;
    const double top = s.maxCoeff();
    const Eigen::VectorXd e = (s.array() - top).exp();
    const double total = e.sum();
    if (p) *p = e / total;
    return top + std::log(total);
  };

  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd p;
  double f = objective(alpha, &p);
  Eigen::VectorXd grad = z.transpose() * p;
  int it = 0;
  for (; it < max_iterations && grad.cwiseAbs().maxCoeff() >= tolerance; ++it) {
    const Eigen::MatrixXd centered = z.rowwise() - grad.transpose();
    const Eigen::MatrixXd H = centered.transpose() * (centered.array().colwise() * p.array()).matrix();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0)) {
      throw InfeasibleTargetError("moment-matching Hessian is singular (constant or collinear moments)");
    }
    const Eigen::VectorXd step = -ldlt.solve(grad);
    const double gnorm = grad.norm();
    double t = 1.0;
    Eigen::VectorXd candidate_p, candidate_grad, candidate;
    double candidate_f = 0.0;
    bool accepted = false;
    for (int h = 0; h < 60 && !accepted; ++h, t *= 0.5) {
      candidate = alpha + t * step;
      candidate_f = objective(candidate, &candidate_p);
      candidate_grad = z.transpose() * candidate_p;
      accepted = candidate_f <= f + 1e-4 * t * grad.dot(step) || candidate_grad.norm() < gnorm;
    }
    if (!accepted) break;
    alpha = candidate;
    f = candidate_f;
    p = candidate_p;
    grad = candidate_grad;
  }
  if (!(grad.cwiseAbs().maxCoeff() < tolerance)) {
    Eigen::Index worst = 0;
    grad.cwiseAbs().maxCoeff(&worst);
    throw InfeasibleTargetError("moment matching did not converge in " + std::to_string(it) +
                                " iterations; moment " + std::to_string(worst) + " unmatched by " +
                                format_double(grad[worst]) + " (target outside the convex hull?)");
  }
  out.alpha = alpha;
  out.iterations = it;
  out.weights.assign(p.data(), p.data() + p.size());
  out.ess = 1.0 / p.squaredNorm();  // p sums to one
  return out;
}

/// Convenience overload: moment matrix and targets from IPD and published
/// covariate summaries. Squares of 0/1 covariates are dropped, since they
/// repeat the first moment.
inline MaicWeights maic_weights(const TrialIPD& ipd, std::span<const double> target_means,
                                std::span<const double> target_sds = {}, bool second_moments = false) {
  auto moments = maic_moment_matrix(ipd, second_moments);
  auto targets = maic_targets(target_means, target_sds, second_moments);
  if (!second_moments) return maic_weights(moments, targets);
  const auto k = static_cast<Eigen::Index>(ipd.covariate_count());
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < 2 * k; ++j) {
    const bool binary = j >= k && (moments.col(j - k).array() * (1.0 - moments.col(j - k).array())).abs().maxCoeff() == 0.0;
    if (!binary) keep.push_back(j);
  }
  Eigen::MatrixXd kept(moments.rows(), static_cast<Eigen::Index>(keep.size()));
  std::vector<double> kept_targets;
  for (std::size_t c = 0; c < keep.size(); ++c) {
    kept.col(static_cast<Eigen::Index>(c)) = moments.col(keep[c]);
    kept_targets.push_back(targets[static_cast<std::size_t>(keep[c])]);
  }
  return maic_weights(kept, kept_targets);
}

/// Weighted per-arm outcome means contrasted on `scale`. The standard error
/// is the sandwich variance of the stacked estimating equations for
/// (alpha, mean_1, mean_0), so it accounts for estimating the weights.
inline AdjustmentResult maic_estimate(const TrialIPD& ipd, const MaicWeights& w, Scale scale,
                                      std::string population = "BC") {
  const std::size_t n = ipd.size();
  if (w.weights.size() != n || static_cast<std::size_t>(w.centered_moments.rows()) != n) {
    throw ArityError("MAIC weights are not aligned with the IPD rows");
  }
  double w1 = 0, w0 = 0, s1 = 0, s0 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (ipd.t[i] == 1) {
      w1 += w.weights[i];
      s1 += w.weights[i] * ipd.y[i];
    } else {
      w0 += w.weights[i];
      s0 += w.weights[i] * ipd.y[i];
    }
  }
  if (w1 < 1e-6 || w0 < 1e-6) {
    throw DegenerateArmError("an arm carries near-zero total MAIC weight (" + format_double(std::min(w1, w0)) + ")");
  }
  const double mu1 = s1 / w1;
  const double mu0 = s0 / w0;
  const auto g = link_for_scale(scale);
  if (!g.in_domain(mu1) || !g.in_domain(mu0)) {
    throw DomainError("weighted arm means (" + format_double(mu0) + ", " + format_double(mu1) +
                      ") are outside the " + std::string(scale_name(scale)) + " domain");
  }

  // Sandwich: theta = (alpha, mu1, mu0); psi_i = (w z, t w (y - mu1), (1-t) w (y - mu0)).
  const Eigen::Index k = w.centered_moments.cols();
  const Eigen::Index q = k + 2;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(q, q);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(q, q);
  Eigen::VectorXd psi(q);
  const double scale_w = static_cast<double>(n);  // weights rescaled to mean one
  for (std::size_t i = 0; i < n; ++i) {
    const double wi = w.weights[i] * scale_w;
    const auto zi = w.centered_moments.row(static_cast<Eigen::Index>(i)).transpose();
    const double r1 = ipd.t[i] == 1 ? ipd.y[i] - mu1 : 0.0;
    const double r0 = ipd.t[i] == 0 ? ipd.y[i] - mu0 : 0.0;
    psi.head(k) = wi * zi;
    psi[k] = wi * r1;
    psi[k + 1] = wi * r0;
    B.noalias() += psi * psi.transpose();
    A.topLeftCorner(k, k).noalias() += wi * zi * zi.transpose();
    A.block(k, 0, 1, k) += wi * r1 * zi.transpose();
    A.block(k + 1, 0, 1, k) += wi * r0 * zi.transpose();
    A(k, k) -= ipd.t[i] == 1 ? wi : 0.0;
    A(k + 1, k + 1) -= ipd.t[i] == 0 ? wi : 0.0;
  }
  const Eigen::MatrixXd Ainv = A.fullPivLu().inverse();
  const Eigen::MatrixXd V = Ainv * B * Ainv.transpose();
  Eigen::Vector2d grad(g.derivative(mu1), -g.derivative(mu0));
  const double var = grad.transpose() * V.bottomRightCorner(2, 2) * grad;

  AdjustmentResult r;
  r.estimate = g.apply(mu1) - g.apply(mu0);
  r.se = std::sqrt(std::max(0.0, var));
  r.scale = scale;
  r.method = Method::MAIC;
  r.label = label_for(Method::MAIC);
  r.population = std::move(population);
  r.validate();
  return r;
}

}  // namespace estimand
