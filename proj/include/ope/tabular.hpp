#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ope {

/// Finite confounded POMDP with observed state s, hidden confounder u,
/// proxies w and z, and actions indexed 0..nA-1.
///
/// Storage conventions (s always outermost, then u, then a):
///   row(s,u)   = s*nU + u
///   row(s,u,a) = (s*nU + u)*nA + a
/// transition[t]:  row (s,u,a), col (s',u')     -> P_t(s',u' | s,u,a)
/// w_emission[t]:  row (s,u),   col w           -> P_t(w | u,s)
/// z_emission[t]:  row (s,u,a), col z           -> P_t(z | u,s,a)
/// behavior[t]:    row (s,u),   col a           -> behavior prob of a at (u,s)
/// reward[t]:      index (s,u,a)                -> r_t(s,u,a) in [-1,1]
/// initial:        index (s,u)                  -> P(S_1=s, U_1=u)
/// All per-t vectors have T entries (index t-1 holds step t).
struct TabularPomdp {
  int nS = 0, nU = 0, nW = 0, nZ = 0, nA = 0;
  int T = 0;
  std::vector<Eigen::MatrixXd> transition;
  std::vector<Eigen::MatrixXd> w_emission;
  std::vector<Eigen::MatrixXd> z_emission;
  std::vector<Eigen::MatrixXd> behavior;
  std::vector<Eigen::VectorXd> reward;
  Eigen::VectorXd initial;

  int su(int s, int u) const { return s * nU + u; }
  int sua(int s, int u, int a) const { return (s * nU + u) * nA + a; }
};

/// Target policy over the observed state only: probs[t-1](s, a).
struct TabularPolicy {
  std::vector<Eigen::MatrixXd> probs;
};

/// Dimension and normalization checks; throws InvalidInput on violation.
void validate(const TabularPomdp& pomdp);

/// Behavior-induced occupancy d_t(s,u) for t = 1..T by exact forward
/// propagation from the initial distribution.
std::vector<Eigen::VectorXd> occupancy(const TabularPomdp& pomdp);

struct RankIssue {
  char kind = 'W';  // 'W' for P_t(W|U,s), 'U' for P_t(U|Z,s,a)
  int t = 0, s = 0, a = -1;
  int rank = 0, required = 0;
};

struct RankReport {
  bool passed = true;
  std::vector<RankIssue> deficiencies;
  std::vector<RankIssue> skipped_unreachable;
  double min_singular_value = 0.0;  // smallest sigma_min over checked matrices
};

/// Identification rank conditions: for every reachable (t,s) the matrix
/// [P_t(w|u,s)]_{w,u} has rank nU, and for every reachable (t,s,a) the
/// Bayes-derived [P_t(u|z,s,a)]_{z,u} (rows limited to positive-probability
/// z) has rank nU. Rank counts singular values above 1e-9 * sigma_max.
RankReport check_rank_conditions(const TabularPomdp& pomdp);

/// Exact policy value by backward dynamic programming over (s,u).
double true_value_dp(const TabularPomdp& pomdp, const TabularPolicy& target);

struct BridgeSolution {
  std::vector<Eigen::MatrixXd> q;  // per t: row w, col (s*nA + a)
  std::vector<Eigen::MatrixXd> v;  // per t: row w, col s
  double max_residual = 0.0;
};

/// Solves the per-(t,s,a) moment systems M q = b backward in t, where
/// M[z][w] = P(w|z,s,a,t) and b[z] = E[R_t + v_{t+1}(W_{t+1},S_{t+1}) |
/// z,s,a,t], by minimum-norm pseudo-inverse. Unreachable cells get q = 0.
/// A residual above 1e-8 raises NoBridgeSolution carrying (t,s,a).
BridgeSolution solve_q_bridges(const TabularPomdp& pomdp,
                               const TabularPolicy& target);

/// E[v_1(W_1, S_1)] under the initial distribution and W-emission.
double ope_via_bridges(const TabularPomdp& pomdp, const TabularPolicy& target);

struct TabularDims {
  int nS = 2, nU = 2, nW = 2, nZ = 2, nA = 2;
  int T = 2;
};

/// Random instance with strictly positive conditional laws, rewards in
/// [-1,1], rejection-sampled until every rank-condition matrix clears a
/// singular-value margin of 0.05 (at most 1000 attempts).
TabularPomdp random_pomdp(const TabularDims& dims, std::uint64_t seed);

/// Uniform target policy over actions, one row block per step.
TabularPolicy uniform_tabular_policy(const TabularPomdp& pomdp);

/// Random target policy with strictly positive action probabilities.
TabularPolicy random_tabular_policy(const TabularPomdp& pomdp,
                                    std::uint64_t seed);

/// JSON file round-trip of an instance plus optional target policy.
struct TabularInstance {
  TabularPomdp pomdp;
  std::optional<TabularPolicy> target;
};
void save_tabular_json(const TabularInstance& instance, const std::string& path);
TabularInstance load_tabular_json(const std::string& path);

}  // namespace ope
