#include "ope/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <vector>

#include <Eigen/Eigenvalues>

#include "ope/errors.hpp"

namespace ope {

namespace {

double expit(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_action(double a) {
  if (a != 1.0 && a != -1.0)
    throw InvalidInput("action must be -1 or +1");
}

/// prob of a=+1 is expit(-e); the complement is returned for a=-1 so the
/// two probabilities sum to exactly 1.
double two_point_prob(double exponent, double a) {
  const double p_plus = expit(-exponent);
  return a > 0.0 ? p_plus : 1.0 - p_plus;
}

double greedy_action(const SimParams& params, const Eigen::Vector2d& s) {
  const Eigen::Vector2d coef = params.kappa_s + Eigen::Vector2d(1.0, -2.0);
  const double score = params.kappa0 + coef.dot(s);
  return score >= 0.0 ? 1.0 : -1.0;
}

double reward_mean(const Eigen::Vector2d& s, double a, double u) {
  return expit(0.5 * a * (u + s(0) - 2.0 * s(1)));
}

void validate_params(const SimParams& params) {
  if (!(params.epsilon_greedy >= 0.0 && params.epsilon_greedy <= 1.0))
    throw InvalidInput("epsilon_greedy must lie in [0,1]");
  if (params.reward_noise_halfwidth < 0.0)
    throw InvalidInput("reward_noise_halfwidth must be nonnegative");
  if (!params.sigma.allFinite())
    throw InvalidInput("Sigma has non-finite entries");
  const double asym = (params.sigma - params.sigma.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12) throw InvalidInput("Sigma must be symmetric");
  if ((params.sigma.diagonal().array() <= 0.0).any())
    throw InvalidInput("Sigma diagonal must be positive");
}

}  // namespace

SimParams SimParams::defaults() {
  SimParams p;
  p.alpha0 = 0.0;
  p.alpha_a = 0.5;
  p.alpha_s = Eigen::Vector2d(0.5, 0.5);
  p.mu0 = 0.0;
  p.mu_a = -0.25;
  p.mu_s = Eigen::Vector2d(0.5, 0.5);
  p.kappa0 = 0.0;
  p.kappa_a = -0.5;
  p.kappa_s = Eigen::Vector2d(0.5, 0.5);
  p.sigma << 1.0, 0.25, 0.5,
             0.25, 1.0, 0.5,
             0.5, 0.5, 1.0;
  p.t0 = 0.0;
  p.tu = 1.0;
  p.ts = Eigen::Vector2d(-0.5, -0.5);
  p.reward_noise_halfwidth = 0.1;
  p.epsilon_greedy = 0.2;
  p.s1_sampler = InitialStateSampler::StdNormal;
  return p;
}

double behavior_policy_prob(const SimParams& params, double u,
                            const Eigen::Vector2d& s, double a) {
  check_action(a);
  return two_point_prob(params.t0 + params.tu * u + params.ts.dot(s), a);
}

double marginal_behavior_prob(const SimParams& params,
                              const Eigen::Vector2d& s, double a) {
  check_action(a);
  const Eigen::Vector2d coef = params.ts + params.tu * params.kappa_s;
  return two_point_prob(params.t0 + params.tu * params.kappa0 + coef.dot(s), a);
}

double target_policy(const SimParams& params, const Eigen::Vector2d& s,
                     Rng& rng) {
  if (rng.uniform() < params.epsilon_greedy)
    return rng.uniform() < 0.5 ? 1.0 : -1.0;
  return greedy_action(params, s);
}

double target_policy_prob(const SimParams& params, const Eigen::Vector2d& s,
                          double a) {
  check_action(a);
  const double eps = params.epsilon_greedy;
  const double half = eps / 2.0;
  return a == greedy_action(params, s) ? (1.0 - eps) + half : half;
}

PolicySpec target_policy_spec(const SimParams& params) {
  PolicySpec spec;
  spec.action_set = {-1.0, 1.0};
  spec.prob = [params](const Eigen::VectorXd& state, double action, int) {
    if (state.size() != 2) throw InvalidInput("target policy expects a 2-d state");
    return target_policy_prob(params, Eigen::Vector2d(state(0), state(1)), action);
  };
  return spec;
}

TrajectoryBatch sample_batch(const SimParams& params, Eigen::Index n, int T,
                             std::uint64_t seed) {
  if (n < 1) throw InvalidInput("need at least one trajectory");
  if (T < 1) throw InvalidInput("horizon must be at least 1");
  const Eigen::Matrix3d factor = detail::noise_factor(params);

  TrajectoryBatch batch;
  batch.s1.resize(n, T);
  batch.s2.resize(n, T);
  batch.w.resize(n, T);
  batch.z.resize(n, T);
  batch.a.resize(n, T);
  batch.r.resize(n, T);

  for (Eigen::Index i = 0; i < n; ++i) {
    Rng rng = Rng::derive(seed, {stream::kTrajectory, static_cast<std::uint64_t>(i)});
    Eigen::Vector2d s = detail::draw_initial_state(params, rng);
    for (int t = 0; t < T; ++t) {
      const double p_plus = marginal_behavior_prob(params, s, 1.0);
      const double a = rng.uniform() < p_plus ? 1.0 : -1.0;
      const detail::StepDraw step = detail::draw_step(params, factor, s, a, rng);
      batch.s1(i, t) = s(0);
      batch.s2(i, t) = s(1);
      batch.w(i, t) = step.w;
      batch.z(i, t) = step.z;
      batch.a(i, t) = a;
      batch.r(i, t) = step.r;
      s = step.s_next;
    }
  }
  return batch;
}

McValue mc_policy_value(const SimParams& params, int T,
                        std::int64_t num_rollouts, std::uint64_t seed,
                        const RewardOverride& reward_override) {
  if (T < 1) throw InvalidInput("horizon must be at least 1");
  if (num_rollouts < 1) throw InvalidInput("need at least one rollout");
  const Eigen::Matrix3d factor = detail::noise_factor(params);

  double sum = 0.0, sum_sq = 0.0;
  for (std::int64_t j = 0; j < num_rollouts; ++j) {
    Rng rng = Rng::derive(seed, {stream::kRollout, static_cast<std::uint64_t>(j)});
    Eigen::Vector2d s = detail::draw_initial_state(params, rng);
    double ret = 0.0;
    for (int t = 0; t < T; ++t) {
      const double a = target_policy(params, s, rng);
      const double p_plus = marginal_behavior_prob(params, s, 1.0);
      const double b = rng.uniform() < p_plus ? 1.0 : -1.0;
      const detail::StepDraw step = detail::draw_step(params, factor, s, b, a, rng);
      ret += reward_override ? reward_override(s, a, step.u) : step.r;
      s = step.s_next;
    }
    sum += ret;
    sum_sq += ret * ret;
  }

  McValue out;
  const double m = static_cast<double>(num_rollouts);
  out.value = sum / m;
  if (num_rollouts > 1) {
    const double var = std::max(0.0, (sum_sq - m * out.value * out.value) / (m - 1.0));
    out.std_error = std::sqrt(var / m);
  }
  return out;
}

void save_batch_csv(const TrajectoryBatch& batch, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "traj,t,s1,s2,w,z,a,r\n";
  char buf[512];
  const Eigen::Index n = batch.size();
  const int T = batch.horizon();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int t = 0; t < T; ++t) {
      std::snprintf(buf, sizeof(buf), "%lld,%d,%.17g,%.17g,%.17g,%.17g,%d,%.17g\n",
                    static_cast<long long>(i), t + 1, batch.s1(i, t),
                    batch.s2(i, t), batch.w(i, t), batch.z(i, t),
                    static_cast<int>(batch.a(i, t)), batch.r(i, t));
      out << buf;
    }
  }
  if (!out.flush()) throw IoError("write failed: " + path);
}

TrajectoryBatch load_batch_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "traj,t,s1,s2,w,z,a,r")
    throw IoError("unexpected header in " + path);

  struct Row {
    long long i;
    int t;
    double s1, s2, w, z, r;
    int a;
  };
  std::vector<Row> rows;
  long long max_i = -1;
  int max_t = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Row row{};
    const int got = std::sscanf(line.c_str(), "%lld,%d,%lf,%lf,%lf,%lf,%d,%lf",
                                &row.i, &row.t, &row.s1, &row.s2, &row.w,
                                &row.z, &row.a, &row.r);
    if (got != 8)
      throw IoError("malformed row " + std::to_string(line_no) + " in " + path);
    if (row.i < 0 || row.t < 1 || (row.a != 1 && row.a != -1))
      throw IoError("invalid indices or action at row " + std::to_string(line_no));
    max_i = std::max(max_i, row.i);
    max_t = std::max(max_t, row.t);
    rows.push_back(row);
  }
  if (rows.empty()) throw IoError("no data rows in " + path);
  const Eigen::Index n = static_cast<Eigen::Index>(max_i + 1);
  const int T = max_t;
  if (static_cast<long long>(rows.size()) != static_cast<long long>(n) * T)
    throw IoError("incomplete grid of (traj, t) rows in " + path);

  TrajectoryBatch batch;
  batch.s1.setConstant(n, T, std::numeric_limits<double>::quiet_NaN());
  batch.s2.resize(n, T);
  batch.w.resize(n, T);
  batch.z.resize(n, T);
  batch.a.resize(n, T);
  batch.r.resize(n, T);
  for (const Row& row : rows) {
    const Eigen::Index i = row.i;
    const int t = row.t - 1;
    if (!std::isnan(batch.s1(i, t)))
      throw IoError("duplicate (traj, t) row in " + path);
    batch.s1(i, t) = row.s1;
    batch.s2(i, t) = row.s2;
    batch.w(i, t) = row.w;
    batch.z(i, t) = row.z;
    batch.a(i, t) = row.a;
    batch.r(i, t) = row.r;
  }
  return batch;
}

namespace detail {

Eigen::Matrix3d noise_factor(const SimParams& params) {
  validate_params(params);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(params.sigma);
  if (eig.info() != Eigen::Success)
    throw NumericalFailure("eigendecomposition of Sigma failed");
  const double tol = 1e-12 * std::max(1.0, eig.eigenvalues().maxCoeff());
  if (eig.eigenvalues().minCoeff() < -tol)
    throw InvalidInput("Sigma must be positive semidefinite");
  const Eigen::Vector3d root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

Eigen::Vector2d draw_initial_state(const SimParams& params, Rng& rng) {
  if (params.s1_sampler == InitialStateSampler::StdUniformBox)
    return {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
  return {rng.normal(), rng.normal()};
}

StepDraw draw_step(const SimParams& params, const Eigen::Matrix3d& noise_factor,
                   const Eigen::Vector2d& s, double latent_a, double a,
                   Rng& rng) {
  const Eigen::Vector3d mean(
      params.alpha0 + params.alpha_a * latent_a + params.alpha_s.dot(s),
      params.mu0 + params.mu_a * latent_a + params.mu_s.dot(s),
      params.kappa0 + params.kappa_a * latent_a + params.kappa_s.dot(s));
  const Eigen::Vector3d g(rng.normal(), rng.normal(), rng.normal());
  const Eigen::Vector3d zwu = mean + noise_factor * g;

  StepDraw out;
  out.z = zwu(0);
  out.w = zwu(1);
  out.u = zwu(2);
  const double h = params.reward_noise_halfwidth;
  out.r = reward_mean(s, a, out.u) + rng.uniform(-h, h);
  out.s_next = s + a * out.u * Eigen::Vector2d::Ones() +
               Eigen::Vector2d(rng.normal(), rng.normal());
  return out;
}

StepDraw draw_step(const SimParams& params, const Eigen::Matrix3d& noise_factor,
                   const Eigen::Vector2d& s, double a, Rng& rng) {
  return draw_step(params, noise_factor, s, a, a, rng);
}

}  // namespace detail

}  // namespace ope
