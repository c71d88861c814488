#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "ope/kernels.hpp"
#include "ope/npiv.hpp"
#include "ope/policy.hpp"
#include "ope/simulator.hpp"

namespace ope {

/// Kernel pair for one recursion step: hypothesis space over (W,S,A) rows,
/// instrument space over (Z,S,A) rows.
struct StepKernels {
  KernelSpec hypothesis;
  KernelSpec instrument;
};

/// Fitted V-bridge at step t: the Q-bridge model over (W,S,A), the scale the
/// cross-validation picked, and v_t evaluated at the batch's (W_t, S_t).
struct VBridgeStep {
  int t = 0;
  NpivModel model;
  double selected_scale = 0.0;
  Eigen::VectorXd v_values_on_batch;
};

struct OpeResult {
  double value_estimate = 0.0;
  std::vector<VBridgeStep> per_step;  // index t-1 holds step t
  Eigen::Index n = 0;
  int horizon = 0;
  std::uint64_t seed = 0;
};

/// v_t(w, s) = sum_a policy(a | s, t) * q_t(w, s, a).
double q_to_v(const NpivModel& q_model, const Eigen::VectorXd& w,
              const Eigen::VectorXd& s, const PolicySpec& policy, int t);

/// Backward recursion t = T..1: fit the step-t Q-bridge by NPIV on
/// Y_t = R_t + v_{t+1}(W_{t+1}, S_{t+1}) (zero beyond the horizon), convert
/// to v_t under the target policy, finish with the step-1 batch mean.
/// Bandwidths come from the per-step median heuristic unless `kernels`
/// supplies T explicit pairs. Requires n >= 5 * folds.
OpeResult estimate_v_bridges(const TrajectoryBatch& batch,
                             const PolicySpec& policy,
                             const std::optional<std::vector<StepKernels>>& kernels,
                             const std::vector<double>& scale_pool, int folds,
                             std::uint64_t rng_seed);

/// Mean of the step-1 bridge values: the off-policy value estimate.
double aggregate_policy_value(const VBridgeStep& step1);

}  // namespace ope
