#include "doctest.h"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ope/errors.hpp"
#include "ope/fqe.hpp"
#include "ope/kernels.hpp"
#include "ope/npiv.hpp"
#include "ope/rng.hpp"
#include "ope/simulator.hpp"

namespace {

ope::PolicySpec always_plus_policy() {
  ope::PolicySpec spec;
  spec.action_set = {-1.0, 1.0};
  spec.prob = [](const Eigen::VectorXd&, double action, int) {
    return action == 1.0 ? 1.0 : 0.0;
  };
  return spec;
}

ope::PolicySpec uniform_policy() {
  ope::PolicySpec spec;
  spec.action_set = {-1.0, 1.0};
  spec.prob = [](const Eigen::VectorXd&, double, int) { return 0.5; };
  return spec;
}

ope::TrajectoryBatch truncate_batch(const ope::TrajectoryBatch& batch, int T) {
  ope::TrajectoryBatch out;
  out.s1 = batch.s1.leftCols(T);
  out.s2 = batch.s2.leftCols(T);
  out.w = batch.w.leftCols(T);
  out.z = batch.z.leftCols(T);
  out.a = batch.a.leftCols(T);
  out.r = batch.r.leftCols(T);
  return out;
}

void require_results_equal(const ope::OpeResult& a, const ope::OpeResult& b) {
  CHECK(a.value_estimate == b.value_estimate);
  REQUIRE(a.per_step.size() == b.per_step.size());
  for (std::size_t k = 0; k < a.per_step.size(); ++k) {
    CHECK(a.per_step[k].selected_scale == b.per_step[k].selected_scale);
    CHECK((a.per_step[k].model.alpha.array() ==
           b.per_step[k].model.alpha.array())
              .all());
    CHECK((a.per_step[k].v_values_on_batch.array() ==
           b.per_step[k].v_values_on_batch.array())
              .all());
  }
}

}  // namespace

TEST_SUITE("fqe") {

TEST_CASE("q_to_v mixes the bridge over the policy's actions") {
  ope::NpivModel model;
  model.kernel_h = ope::gaussian_kernel(1.0);
  model.anchors.resize(2, 4);
  model.anchors.row(0) << 0.0, 0.0, 0.0, 1.0;
  model.anchors.row(1) << 0.0, 0.0, 0.0, -1.0;
  model.alpha = Eigen::Vector2d(1.0, 2.0);

  const auto q_at = [&](const Eigen::VectorXd& w, const Eigen::VectorXd& s,
                        double a) {
    Eigen::VectorXd query(4);
    query << w(0), s(0), s(1), a;
    double sum = 0.0;
    for (int i = 0; i < 2; ++i)
      sum += model.alpha(i) *
             ope::kernel_eval(model.kernel_h, model.anchors.row(i), query);
    return sum;
  };

  Eigen::VectorXd w(1);
  w << 0.0;
  Eigen::VectorXd s(2);
  s << 0.0, 0.0;

  SUBCASE("deterministic policy returns the single action's bridge") {
    const double v = ope::q_to_v(model, w, s, always_plus_policy(), 1);
    CHECK(v == doctest::Approx(q_at(w, s, 1.0)).epsilon(1e-14));
    CHECK(v == doctest::Approx(1.0 + 2.0 * std::exp(-2.0)).epsilon(1e-14));
  }

  SUBCASE("uniform policy averages the two actions") {
    const double v = ope::q_to_v(model, w, s, uniform_policy(), 1);
    const double expected = 0.5 * (q_at(w, s, 1.0) + q_at(w, s, -1.0));
    CHECK(v == doctest::Approx(expected).epsilon(1e-14));
  }

  SUBCASE("epsilon-greedy weights follow the target policy") {
    Eigen::VectorXd s_greedy(2);
    s_greedy << 1.0, 0.0;
    const ope::PolicySpec target =
        ope::target_policy_spec(ope::SimParams::defaults());
    const double v = ope::q_to_v(model, w, s_greedy, target, 1);
    const double expected =
        0.9 * q_at(w, s_greedy, 1.0) + 0.1 * q_at(w, s_greedy, -1.0);
    CHECK(v == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("zero rewards estimate a zero policy value") {
  const ope::SimParams p = ope::SimParams::defaults();
  ope::TrajectoryBatch batch = ope::sample_batch(p, 60, 2, 3);
  batch.r.setZero();
  const ope::OpeResult result = ope::estimate_v_bridges(
      batch, ope::target_policy_spec(p), std::nullopt, {0.01, 0.001}, 5, 17);
  CHECK(std::abs(result.value_estimate) <= 1e-8);
  for (const ope::VBridgeStep& step : result.per_step)
    CHECK(step.v_values_on_batch.cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("estimates are deterministic in the seed") {
  const ope::SimParams p = ope::SimParams::defaults();
  const ope::TrajectoryBatch batch = ope::sample_batch(p, 50, 2, 4);
  const ope::PolicySpec policy = ope::target_policy_spec(p);
  const std::vector<double> pool{0.02, 0.005};
  const ope::OpeResult a =
      ope::estimate_v_bridges(batch, policy, std::nullopt, pool, 5, 23);
  const ope::OpeResult b =
      ope::estimate_v_bridges(batch, policy, std::nullopt, pool, 5, 23);
  require_results_equal(a, b);
  CHECK(a.n == 50);
  CHECK(a.horizon == 2);
  CHECK(a.seed == 23);
}

TEST_CASE("doubling the rewards doubles the estimate") {
  const ope::SimParams p = ope::SimParams::defaults();
  const ope::TrajectoryBatch batch = ope::sample_batch(p, 60, 2, 6);
  ope::TrajectoryBatch doubled = batch;
  doubled.r *= 2.0;

  const std::vector<double> singleton{0.007};
  const ope::PolicySpec policy = ope::target_policy_spec(p);
  const ope::OpeResult base =
      ope::estimate_v_bridges(batch, policy, std::nullopt, singleton, 5, 9);
  const ope::OpeResult twice =
      ope::estimate_v_bridges(doubled, policy, std::nullopt, singleton, 5, 9);
  CHECK(twice.value_estimate ==
        doctest::Approx(2.0 * base.value_estimate).epsilon(1e-8));
}

TEST_CASE("constant rewards at horizon one are recovered") {
  const ope::SimParams p = ope::SimParams::defaults();
  ope::TrajectoryBatch batch = ope::sample_batch(p, 500, 1, 12);
  batch.r.setConstant(0.7);
  const std::vector<double> pool{0.05, 0.02, 0.007, 0.003, 0.001};
  const ope::OpeResult result = ope::estimate_v_bridges(
      batch, ope::target_policy_spec(p), std::nullopt, pool, 5, 31);
  CHECK(result.value_estimate == doctest::Approx(0.7).epsilon(0.08));
  CHECK(std::abs(result.value_estimate - 0.7) <= 0.05);
}

TEST_CASE("estimate tracks the Monte Carlo value of the target policy") {
  const ope::SimParams p = ope::SimParams::defaults();
  const ope::TrajectoryBatch batch = ope::sample_batch(p, 512, 3, 2025);
  const ope::McValue mc = ope::mc_policy_value(p, 3, 50000, 11);
  const std::vector<double> pool{0.05, 0.0188, 0.00707, 0.00266, 0.001};
  const ope::OpeResult result = ope::estimate_v_bridges(
      batch, ope::target_policy_spec(p), std::nullopt, pool, 5, 7);
  CHECK(std::abs(result.value_estimate - mc.value) <= 0.5);
}

TEST_CASE("per-step bridges stay within the reward envelope") {
  const ope::SimParams p = ope::SimParams::defaults();
  const ope::TrajectoryBatch batch = ope::sample_batch(p, 100, 3, 5);
  const ope::OpeResult result = ope::estimate_v_bridges(
      batch, ope::target_policy_spec(p), std::nullopt, {0.007, 0.02}, 5, 13);

  REQUIRE(result.per_step.size() == 3);
  for (int k = 0; k < 3; ++k) {
    const ope::VBridgeStep& step = result.per_step[static_cast<std::size_t>(k)];
    CHECK(step.t == k + 1);
    CHECK(step.v_values_on_batch.size() == 100);
    const double bound = (3 - (k + 1) + 1) * 1.5;
    CHECK(step.v_values_on_batch.cwiseAbs().maxCoeff() <= bound);
  }

  SUBCASE("the reported value is the step-1 batch mean") {
    CHECK(result.value_estimate ==
          result.per_step.front().v_values_on_batch.mean());
    CHECK(ope::aggregate_policy_value(result.per_step.front()) ==
          result.value_estimate);
  }

  SUBCASE("step-1 values match scoring the fitted bridge directly") {
    const ope::VBridgeStep& step1 = result.per_step.front();
    const ope::PolicySpec policy = ope::target_policy_spec(p);
    Eigen::VectorXd w(1);
    Eigen::VectorXd s(2);
    for (Eigen::Index i = 0; i < 5; ++i) {
      w << batch.w(i, 0);
      s << batch.s1(i, 0), batch.s2(i, 0);
      const double v = ope::q_to_v(step1.model, w, s, policy, 1);
      CHECK(step1.v_values_on_batch(i) == doctest::Approx(v).epsilon(1e-10));
    }
  }
}

TEST_CASE("horizon truncation ignores the dropped columns") {
  const ope::SimParams p = ope::SimParams::defaults();
  const ope::TrajectoryBatch full = ope::sample_batch(p, 50, 3, 21);
  ope::TrajectoryBatch tampered = full;
  tampered.s1.col(2).setConstant(123.0);
  tampered.s2.col(2).setConstant(-55.0);
  tampered.w.col(2).setConstant(9.0);
  tampered.z.col(2).setConstant(-9.0);
  tampered.r.col(2).setConstant(77.0);

  const ope::PolicySpec policy = ope::target_policy_spec(p);
  const std::vector<double> pool{0.01, 0.003};
  const ope::OpeResult a = ope::estimate_v_bridges(
      truncate_batch(full, 2), policy, std::nullopt, pool, 5, 41);
  const ope::OpeResult b = ope::estimate_v_bridges(
      truncate_batch(tampered, 2), policy, std::nullopt, pool, 5, 41);
  require_results_equal(a, b);
  CHECK(a.per_step.size() == 2);
}

TEST_CASE("explicit step kernels bypass the median heuristic") {
  const ope::SimParams p = ope::SimParams::defaults();
  const ope::TrajectoryBatch batch = ope::sample_batch(p, 40, 2, 19);
  const ope::PolicySpec policy = ope::target_policy_spec(p);
  const std::vector<double> pool{0.01, 0.002};

  std::vector<ope::StepKernels> kernels(2);
  for (ope::StepKernels& pair : kernels) {
    pair.hypothesis = ope::gaussian_kernel(2.0);
    pair.instrument = ope::gaussian_kernel(2.5);
  }

  const ope::OpeResult a =
      ope::estimate_v_bridges(batch, policy, kernels, pool, 5, 3);
  const ope::OpeResult b =
      ope::estimate_v_bridges(batch, policy, kernels, pool, 5, 3);
  require_results_equal(a, b);
  CHECK(std::isfinite(a.value_estimate));
  CHECK(a.per_step.front().model.kernel_h.bandwidth == 2.0);

  SUBCASE("kernel list length must match the horizon") {
    const std::vector<ope::StepKernels> wrong(3, kernels.front());
    CHECK_THROWS_AS(
        ope::estimate_v_bridges(batch, policy, wrong, pool, 5, 3),
        ope::InvalidInput);
  }
}

TEST_CASE("input validation rejects unusable batches and policies") {
  const ope::SimParams p = ope::SimParams::defaults();
  const ope::PolicySpec policy = ope::target_policy_spec(p);
  const std::vector<double> pool{0.01};

  SUBCASE("too few samples for the fold count") {
    const ope::TrajectoryBatch batch = ope::sample_batch(p, 24, 2, 1);
    CHECK_THROWS_AS(
        ope::estimate_v_bridges(batch, policy, std::nullopt, pool, 5, 1),
        ope::InvalidInput);
  }

  SUBCASE("fewer than two folds") {
    const ope::TrajectoryBatch batch = ope::sample_batch(p, 30, 2, 1);
    CHECK_THROWS_AS(
        ope::estimate_v_bridges(batch, policy, std::nullopt, pool, 1, 1),
        ope::InvalidInput);
  }

  SUBCASE("empty scale pool") {
    const ope::TrajectoryBatch batch = ope::sample_batch(p, 30, 2, 1);
    CHECK_THROWS_AS(
        ope::estimate_v_bridges(batch, policy, std::nullopt, {}, 5, 1),
        ope::InvalidInput);
  }

  SUBCASE("mismatched batch shapes") {
    ope::TrajectoryBatch batch = ope::sample_batch(p, 30, 2, 1);
    batch.z = batch.z.leftCols(1).eval();
    CHECK_THROWS_AS(
        ope::estimate_v_bridges(batch, policy, std::nullopt, pool, 5, 1),
        ope::InvalidInput);
  }

  SUBCASE("policy probabilities must sum to one") {
    const ope::TrajectoryBatch batch = ope::sample_batch(p, 30, 1, 1);
    ope::PolicySpec broken;
    broken.action_set = {-1.0, 1.0};
    broken.prob = [](const Eigen::VectorXd&, double, int) { return 0.6; };
    CHECK_THROWS_AS(
        ope::estimate_v_bridges(batch, broken, std::nullopt, pool, 5, 1),
        ope::InvalidInput);
  }
}

TEST_CASE("degenerate features are reported with their step index") {
  const ope::SimParams p = ope::SimParams::defaults();

  SUBCASE("identical rows are caught before the bandwidth heuristic") {
    ope::TrajectoryBatch batch;
    batch.s1 = Eigen::MatrixXd::Constant(30, 1, 0.5);
    batch.s2 = Eigen::MatrixXd::Constant(30, 1, -0.5);
    batch.w = Eigen::MatrixXd::Constant(30, 1, 1.0);
    batch.z = Eigen::MatrixXd::Constant(30, 1, 2.0);
    batch.a = Eigen::MatrixXd::Constant(30, 1, 1.0);
    batch.r = Eigen::MatrixXd::Constant(30, 1, 0.3);
    try {
      ope::estimate_v_bridges(batch, ope::target_policy_spec(p), std::nullopt,
                              {0.01}, 5, 1);
      FAIL("expected DegenerateData");
    } catch (const ope::DegenerateData& e) {
      CHECK(std::string(e.what()).find("step 1") != std::string::npos);
    }
  }

  SUBCASE("a zero median distance is caught and tagged") {
    ope::TrajectoryBatch batch;
    batch.s1 = Eigen::MatrixXd::Constant(30, 1, 0.5);
    batch.s2 = Eigen::MatrixXd::Constant(30, 1, -0.5);
    batch.w = Eigen::MatrixXd::Constant(30, 1, 1.0);
    batch.w(0, 0) = 2.0;
    batch.z = Eigen::MatrixXd::Constant(30, 1, 2.0);
    batch.z(0, 0) = 3.0;
    batch.a = Eigen::MatrixXd::Constant(30, 1, 1.0);
    batch.r = Eigen::MatrixXd::Constant(30, 1, 0.3);
    try {
      ope::estimate_v_bridges(batch, ope::target_policy_spec(p), std::nullopt,
                              {0.01}, 5, 1);
      FAIL("expected DegenerateData");
    } catch (const ope::DegenerateData& e) {
      CHECK(std::string(e.what()).find("at step 1") != std::string::npos);
    }
  }
}

TEST_CASE("aggregation is an exact batch mean") {
  ope::VBridgeStep step;
  step.t = 1;

  SUBCASE("constant values") {
    step.v_values_on_batch = Eigen::VectorXd::Constant(5, 3.7);
    CHECK(ope::aggregate_policy_value(step) ==
          doctest::Approx(3.7).epsilon(1e-15));
  }

  SUBCASE("simple average") {
    step.v_values_on_batch.resize(3);
    step.v_values_on_batch << 1.0, 2.0, 3.0;
    CHECK(ope::aggregate_policy_value(step) == 2.0);
  }

  SUBCASE("agrees with compensated summation") {
    ope::Rng rng(88);
    step.v_values_on_batch.resize(1000);
    for (Eigen::Index i = 0; i < 1000; ++i)
      step.v_values_on_batch(i) = rng.uniform(-1.0, 1.0);
    double sum = 0.0, comp = 0.0;
    for (Eigen::Index i = 0; i < 1000; ++i) {
      const double y = step.v_values_on_batch(i) - comp;
      const double t = sum + y;
      comp = (t - sum) - y;
      sum = t;
    }
    const double kahan_mean = sum / 1000.0;
    CHECK(ope::aggregate_policy_value(step) ==
          doctest::Approx(kahan_mean).epsilon(1e-12));
  }

  SUBCASE("only the step-1 bridge may be aggregated") {
    step.t = 2;
    step.v_values_on_batch = Eigen::VectorXd::Constant(5, 1.0);
    CHECK_THROWS_AS(ope::aggregate_policy_value(step), ope::InvalidInput);
  }

  SUBCASE("empty value vectors are rejected") {
    step.v_values_on_batch.resize(0);
    CHECK_THROWS_AS(ope::aggregate_policy_value(step), ope::InvalidInput);
  }
}

}  // TEST_SUITE
