#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace ope {

/// Discrete-action policy over observed state: prob(s, a, t) must be
/// nonnegative and sum to 1 over action_set at every queried state.
/// Policies that ignore time simply disregard t (1-based step index).
struct PolicySpec {
  std::vector<double> action_set;
  std::function<double(const Eigen::VectorXd& state, double action, int t)> prob;
};

}  // namespace ope
