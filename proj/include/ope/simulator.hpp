#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include <Eigen/Dense>

#include "ope/policy.hpp"
#include "ope/rng.hpp"

namespace ope {

enum class InitialStateSampler { StdNormal, StdUniformBox };

/// Data-generating constants of the confounded-POMDP benchmark. The proxy
/// triple (Z, W, U) given (S, A) is jointly Gaussian with linear means
///   E[Z|s,a] = alpha0 + alpha_a a + alpha_s's,
///   E[W|s,a] = mu0    + mu_a a    + mu_s's,
///   E[U|s,a] = kappa0 + kappa_a a + kappa_s's,
/// covariance Sigma (rows/cols ordered Z, W, U), reward
/// expit{a(u + s1 - 2 s2)/2} + Uniform[-h, h], and transition
/// S' = S + a u [1,1]' + N(0, I).
struct SimParams {
  double alpha0 = 0.0, alpha_a = 0.0;
  Eigen::Vector2d alpha_s = Eigen::Vector2d::Zero();
  double mu0 = 0.0, mu_a = 0.0;
  Eigen::Vector2d mu_s = Eigen::Vector2d::Zero();
  double kappa0 = 0.0, kappa_a = 0.0;
  Eigen::Vector2d kappa_s = Eigen::Vector2d::Zero();
  Eigen::Matrix3d sigma = Eigen::Matrix3d::Identity();
  double t0 = 0.0, tu = 0.0;
  Eigen::Vector2d ts = Eigen::Vector2d::Zero();
  double reward_noise_halfwidth = 0.1;
  double epsilon_greedy = 0.2;
  InitialStateSampler s1_sampler = InitialStateSampler::StdNormal;

  /// The benchmark constants: alpha = (0, 0.5, [0.5 0.5]),
  /// mu = (0, -0.25, [0.5 0.5]), kappa = (0, -0.5, [0.5 0.5]),
  /// Sigma unit diagonal with offdiag (0.25, 0.5, 0.5),
  /// behavior exponent t = (0, 1, [-0.5 -0.5]), epsilon = 0.2.
  static SimParams defaults();
};

/// Column t-1 holds step t (1-based math index). Hidden confounder U is
/// deliberately absent: the batch is the observable dataset.
struct TrajectoryBatch {
  Eigen::MatrixXd s1, s2;  // n x T state coordinates
  Eigen::MatrixXd w, z;    // n x T proxies
  Eigen::MatrixXd a;       // n x T actions in {-1, +1}
  Eigen::MatrixXd r;       // n x T rewards in [-h, 1+h]

  Eigen::Index size() const { return s1.rows(); }
  int horizon() const { return static_cast<int>(s1.cols()); }
};

/// expit{-a (t0 + tu u + ts's)}; the two actions sum to exactly 1.
double behavior_policy_prob(const SimParams& params, double u,
                            const Eigen::Vector2d& s, double a);

/// Behavior policy marginalized over U | S:
/// expit{-a (t0 + tu kappa0 + (ts + tu kappa_s)'s)}.
double marginal_behavior_prob(const SimParams& params,
                              const Eigen::Vector2d& s, double a);

/// Epsilon-greedy action for the immediate-reward target policy. Greedy
/// action is sign{kappa0 + (kappa_s + [1,-2])'s} with sign(0) -> +1.
double target_policy(const SimParams& params, const Eigen::Vector2d& s,
                     Rng& rng);

/// Probability the target policy picks `a` at state s:
/// 1 - eps + eps/2 on the greedy action, eps/2 on the other.
double target_policy_prob(const SimParams& params, const Eigen::Vector2d& s,
                          double a);

/// The target policy wrapped for the FQE recursion (time-independent).
PolicySpec target_policy_spec(const SimParams& params);

/// n behavior-policy trajectories of horizon T. Per step: A_t from the
/// marginal behavior policy, then (Z,W,U) | (S,A), reward, transition.
/// Deterministic in seed, independent of threading.
TrajectoryBatch sample_batch(const SimParams& params, Eigen::Index n, int T,
                             std::uint64_t seed);

struct McValue {
  double value = 0.0;
  double std_error = 0.0;
};

/// Test hook replacing the simulator reward; arguments (s, a, u).
using RewardOverride =
    std::function<double(const Eigen::Vector2d& s, double a, double u)>;

/// Ground-truth V(pi) by rolling out the target policy: mean and standard
/// error of the cumulative reward over num_rollouts trajectories.
McValue mc_policy_value(const SimParams& params, int T,
                        std::int64_t num_rollouts, std::uint64_t seed,
                        const RewardOverride& reward_override = nullptr);

/// Columnar export, header `traj,t,s1,s2,w,z,a,r`, one row per (i,t) with
/// traj 0-based, t 1-based, actions as +-1 integers, reals round-tripping.
void save_batch_csv(const TrajectoryBatch& batch, const std::string& path);
TrajectoryBatch load_batch_csv(const std::string& path);

namespace detail {

struct StepDraw {
  double z = 0.0, w = 0.0, u = 0.0, r = 0.0;
  Eigen::Vector2d s_next = Eigen::Vector2d::Zero();
};

/// Draws (Z,W,U) | (s, latent_a), then the reward and next state under the
/// executed action a, consuming the stream in that order. The two actions
/// coincide in observational sampling; an intervention draws the latent
/// triple under a behavior action while executing the policy's choice.
/// noise_factor is a symmetric square root of Sigma.
StepDraw draw_step(const SimParams& params, const Eigen::Matrix3d& noise_factor,
                   const Eigen::Vector2d& s, double latent_a, double a,
                   Rng& rng);

/// Observational step: latent conditioning and execution share one action.
StepDraw draw_step(const SimParams& params, const Eigen::Matrix3d& noise_factor,
                   const Eigen::Vector2d& s, double a, Rng& rng);

/// Symmetric PSD square root of params.sigma (validates SimParams too).
Eigen::Matrix3d noise_factor(const SimParams& params);

Eigen::Vector2d draw_initial_state(const SimParams& params, Rng& rng);

}  // namespace detail

}  // namespace ope
