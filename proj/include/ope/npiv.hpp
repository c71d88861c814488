#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "ope/kernels.hpp"

namespace ope {

/// One-step min-max NPIV instance: hypothesis features (rows of (W,S,A)),
/// instrument features (rows of (Z,S,A)), and the response vector
/// Y_i = R_i + v_next(W'_i, S'_i).
struct NpivProblem {
  Eigen::MatrixXd hypothesis_features;  // n x d_h
  Eigen::MatrixXd instrument_features;  // n x d_f
  Eigen::VectorXd response;             // n
  KernelSpec kernel_h;
  KernelSpec kernel_f;
};

/// Tuning parameters of the closed-form solve. Only the combinations
/// M/delta^2 and lambda^2*mu enter the formula; `scale` is the
/// cross-validated knob they are derived from.
struct HyperParams {
  double ratio_m_delta2 = 1.0;
  double lambda2_mu = 0.0;
  double scale = 1.0;
};

/// Fitted representer model: prediction at x is sum_i alpha_i k_h(anchor_i, x).
struct NpivModel {
  Eigen::VectorXd alpha;
  Eigen::MatrixXd anchors;  // training hypothesis features
  KernelSpec kernel_h;
};

/// varsigma(n) = 5 / n^0.4
double scaling_varsigma(std::int64_t n);

/// zeta(scale, n) = scale * varsigma(n)^4 / 2
double scaling_zeta(double scale, std::int64_t n);

/// Solves alpha = (K_H M K_H + 4 lambda^2 mu K_H)^+ K_H M Y with
/// M = K_F^{1/2} (ratio/n K_F + I)^{-1} K_F^{1/2}.
NpivModel fit_npiv(const NpivProblem& problem, const HyperParams& hp);

/// K(query, anchors) * alpha; query rows must match anchor dimension.
Eigen::VectorXd predict(const NpivModel& model, const Eigen::MatrixXd& query);

/// eps^T M eps with M built from the instrument Gram and ratio; clamped at 0.
double projected_loss(const Eigen::VectorXd& residuals,
                      const GramMatrix& instrument_gram,
                      double ratio_m_delta2);

struct CvSelection {
  double best_scale = 0.0;
  NpivModel model;
  std::vector<double> mean_losses;  // one entry per pool element
};

/// K-fold cross-validation over the scale pool: per-fold hyper-parameters
/// come from the scaling functions of the fold sizes, the winning scale
/// (ties toward the smallest) is refit on all data.
CvSelection cv_select_scale(const NpivProblem& problem,
                            const std::vector<double>& scale_pool, int folds,
                            std::uint64_t rng_seed);

namespace detail {

/// Closed-form solve without the n >= 2 guard (test entry point).
NpivModel fit_npiv_unchecked(const NpivProblem& problem, const HyperParams& hp);

/// The fold partition used by cv_select_scale: indices 0..n-1 shuffled once
/// from rng_seed and split into `folds` nearly equal sorted blocks.
std::vector<std::vector<Eigen::Index>> cv_fold_partition(Eigen::Index n,
                                                         int folds,
                                                         std::uint64_t rng_seed);

/// M = K^{1/2} (ratio/n K + I)^{-1} K^{1/2}, computed as (c K + I)^{-1} K
/// (the factors commute) and symmetrized.
Eigen::MatrixXd projection_matrix(const Eigen::MatrixXd& gram, double ratio);

}  // namespace detail

}  // namespace ope
