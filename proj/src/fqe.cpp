#include "ope/fqe.hpp"

#include <cmath>
#include <string>

#include "ope/errors.hpp"
#include "ope/rng.hpp"

namespace ope {

namespace {

constexpr double kPolicyNormTol = 1e-12;

void check_policy(const PolicySpec& policy) {
  if (policy.action_set.empty())
    throw InvalidInput("policy has an empty action set");
  if (!policy.prob) throw InvalidInput("policy has no probability function");
}

void check_batch(const TrajectoryBatch& batch) {
  const Eigen::Index n = batch.s1.rows();
  const Eigen::Index T = batch.s1.cols();
  const auto same_shape = [&](const Eigen::MatrixXd& m) {
    return m.rows() == n && m.cols() == T;
  };
  if (!same_shape(batch.s2) || !same_shape(batch.w) || !same_shape(batch.z) ||
      !same_shape(batch.a) || !same_shape(batch.r))
    throw InvalidInput("trajectory arrays disagree in shape");
  if (n < 1 || T < 1) throw InvalidInput("batch is empty");
}

bool rows_all_identical(const Eigen::MatrixXd& m) {
  return (m.rowwise() - m.row(0)).cwiseAbs().maxCoeff() == 0.0;
}

/// [col(t) of W or Z, S_t, A_t] as feature rows.
Eigen::MatrixXd step_features(const Eigen::VectorXd& proxy,
                              const TrajectoryBatch& batch, int tc) {
  const Eigen::Index n = batch.size();
  Eigen::MatrixXd f(n, 4);
  f.col(0) = proxy;
  f.col(1) = batch.s1.col(tc);
  f.col(2) = batch.s2.col(tc);
  f.col(3) = batch.a.col(tc);
  return f;
}

/// v_t over the batch at time column tc: sum_a pi(a|s,t) q(w,s,a), with the
/// policy's normalization checked at every queried state.
Eigen::VectorXd v_on_batch(const NpivModel& model, const TrajectoryBatch& batch,
                           int tc, const PolicySpec& policy, int t) {
  const Eigen::Index n = batch.size();
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd norm = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd query(n, 4);
  query.col(0) = batch.w.col(tc);
  query.col(1) = batch.s1.col(tc);
  query.col(2) = batch.s2.col(tc);
  for (double action : policy.action_set) {
    query.col(3).setConstant(action);
    const Eigen::VectorXd pred = predict(model, query);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::VectorXd state(2);
      state << batch.s1(i, tc), batch.s2(i, tc);
      const double p = policy.prob(state, action, t);
      if (!(p >= 0.0) || !std::isfinite(p))
        throw InvalidInput("policy returned an invalid probability");
      v(i) += p * pred(i);
      norm(i) += p;
    }
  }
  if ((norm.array() - 1.0).abs().maxCoeff() > kPolicyNormTol)
    throw InvalidInput("policy probabilities do not sum to 1 at a queried state");
  return v;
}

}  // namespace

double q_to_v(const NpivModel& q_model, const Eigen::VectorXd& w,
              const Eigen::VectorXd& s, const PolicySpec& policy, int t) {
  check_policy(policy);
  Eigen::MatrixXd query(1, w.size() + s.size() + 1);
  query.leftCols(w.size()) = w.transpose();
  query.middleCols(w.size(), s.size()) = s.transpose();

  double value = 0.0;
  double norm = 0.0;
  for (double action : policy.action_set) {
    query(0, query.cols() - 1) = action;
    const double p = policy.prob(s, action, t);
    if (!(p >= 0.0) || !std::isfinite(p))
      throw InvalidInput("policy returned an invalid probability");
    value += p * predict(q_model, query)(0);
    norm += p;
  }
  if (std::abs(norm - 1.0) > kPolicyNormTol)
    throw InvalidInput("policy probabilities do not sum to 1 at the queried state");
  return value;
}

OpeResult estimate_v_bridges(const TrajectoryBatch& batch,
                             const PolicySpec& policy,
                             const std::optional<std::vector<StepKernels>>& kernels,
                             const std::vector<double>& scale_pool, int folds,
                             std::uint64_t rng_seed) {
  check_batch(batch);
  check_policy(policy);
  const Eigen::Index n = batch.size();
  const int T = batch.horizon();
  if (folds < 2) throw InvalidInput("cross-validation needs at least 2 folds");
  if (n < static_cast<Eigen::Index>(5) * folds)
    throw InvalidInput("need at least 5 samples per cross-validation fold");
  if (scale_pool.empty()) throw InvalidInput("scale pool is empty");
  if (kernels && static_cast<int>(kernels->size()) != T)
    throw InvalidInput("kernel list length does not match the horizon");

  OpeResult result;
  result.per_step.resize(static_cast<std::size_t>(T));
  result.n = n;
  result.horizon = T;
  result.seed = rng_seed;

  Eigen::VectorXd v_next = Eigen::VectorXd::Zero(n);
  for (int t = T; t >= 1; --t) {
    const int tc = t - 1;
    NpivProblem problem;
    problem.hypothesis_features = step_features(batch.w.col(tc), batch, tc);
    problem.instrument_features = step_features(batch.z.col(tc), batch, tc);
    problem.response = batch.r.col(tc) + v_next;

    if (rows_all_identical(problem.hypothesis_features))
      throw DegenerateData("hypothesis features identical across samples at step " +
                           std::to_string(t));
    if (rows_all_identical(problem.instrument_features))
      throw DegenerateData("instrument features identical across samples at step " +
                           std::to_string(t));

    if (kernels) {
      problem.kernel_h = (*kernels)[static_cast<std::size_t>(tc)].hypothesis;
      problem.kernel_f = (*kernels)[static_cast<std::size_t>(tc)].instrument;
    } else {
      try {
        problem.kernel_h = gaussian_kernel(median_heuristic(problem.hypothesis_features));
        problem.kernel_f = gaussian_kernel(median_heuristic(problem.instrument_features));
      } catch (const DegenerateData& e) {
        throw DegenerateData(std::string(e.what()) + " at step " + std::to_string(t));
      }
    }

    const std::uint64_t step_seed =
        derive_seed(rng_seed, {stream::kFqeStep, static_cast<std::uint64_t>(t)});
    CvSelection selection = cv_select_scale(problem, scale_pool, folds, step_seed);

    VBridgeStep& step = result.per_step[static_cast<std::size_t>(tc)];
    step.t = t;
    step.selected_scale = selection.best_scale;
    step.v_values_on_batch = v_on_batch(selection.model, batch, tc, policy, t);
    step.model = std::move(selection.model);
    if (!step.v_values_on_batch.allFinite())
      throw NumericalFailure("bridge values non-finite at step " + std::to_string(t));
    v_next = step.v_values_on_batch;
  }

  result.value_estimate = aggregate_policy_value(result.per_step.front());
  return result;
}

double aggregate_policy_value(const VBridgeStep& step1) {
  if (step1.t != 1) throw InvalidInput("aggregation expects the step-1 bridge");
  if (step1.v_values_on_batch.size() == 0)
    throw InvalidInput("no bridge values to aggregate");
  return step1.v_values_on_batch.mean();
}

}  // namespace ope
