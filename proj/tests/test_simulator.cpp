#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Dense>

#include "ope/errors.hpp"
#include "ope/rng.hpp"
#include "ope/simulator.hpp"

namespace {

double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct TempFile {
  explicit TempFile(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("ope_sim_" + tag + "_" + std::to_string(::getpid()) + ".csv");
  }
  ~TempFile() {
    std::error_code ec;
    std::filesystem::remove(path, ec);
  }
  std::filesystem::path path;
};

void require_batches_equal(const ope::TrajectoryBatch& a,
                           const ope::TrajectoryBatch& b) {
  REQUIRE(a.size() == b.size());
  REQUIRE(a.horizon() == b.horizon());
  CHECK((a.s1.array() == b.s1.array()).all());
  CHECK((a.s2.array() == b.s2.array()).all());
  CHECK((a.w.array() == b.w.array()).all());
  CHECK((a.z.array() == b.z.array()).all());
  CHECK((a.a.array() == b.a.array()).all());
  CHECK((a.r.array() == b.r.array()).all());
}

}  // namespace

TEST_SUITE("simulator") {

TEST_CASE("benchmark defaults carry the documented constants") {
  const ope::SimParams p = ope::SimParams::defaults();
  CHECK(p.alpha0 == 0.0);
  CHECK(p.alpha_a == 0.5);
  CHECK(p.alpha_s == Eigen::Vector2d(0.5, 0.5));
  CHECK(p.mu0 == 0.0);
  CHECK(p.mu_a == -0.25);
  CHECK(p.mu_s == Eigen::Vector2d(0.5, 0.5));
  CHECK(p.kappa0 == 0.0);
  CHECK(p.kappa_a == -0.5);
  CHECK(p.kappa_s == Eigen::Vector2d(0.5, 0.5));
  CHECK(p.t0 == 0.0);
  CHECK(p.tu == 1.0);
  CHECK(p.ts == Eigen::Vector2d(-0.5, -0.5));
  CHECK(p.sigma.diagonal() == Eigen::Vector3d::Ones());
  CHECK(p.sigma(0, 1) == 0.25);
  CHECK(p.sigma(0, 2) == 0.5);
  CHECK(p.sigma(1, 2) == 0.5);
  CHECK(p.sigma == p.sigma.transpose().eval());
  CHECK(p.reward_noise_halfwidth == 0.1);
  CHECK(p.epsilon_greedy == 0.2);
}

TEST_CASE("behavior policy probability follows the logistic form") {
  const ope::SimParams p = ope::SimParams::defaults();
  const Eigen::Vector2d origin(0.0, 0.0);

  SUBCASE("zero confounder and state give an even split") {
    CHECK(ope::behavior_policy_prob(p, 0.0, origin, 1.0) == 0.5);
    CHECK(ope::behavior_policy_prob(p, 0.0, origin, -1.0) == 0.5);
  }

  SUBCASE("unit confounder tilts the coin") {
    const double p_plus = ope::behavior_policy_prob(p, 1.0, origin, 1.0);
    CHECK(p_plus == doctest::Approx(expit(-1.0)).epsilon(1e-14));
    CHECK(p_plus == doctest::Approx(0.2689414213699951).epsilon(1e-14));
  }

  SUBCASE("the two action probabilities sum to one exactly") {
    ope::Rng rng(321);
    for (int i = 0; i < 20; ++i) {
      const double u = rng.normal();
      const Eigen::Vector2d s(rng.normal(), rng.normal());
      const double sum = ope::behavior_policy_prob(p, u, s, 1.0) +
                         ope::behavior_policy_prob(p, u, s, -1.0);
      CHECK(sum == 1.0);
    }
  }

  SUBCASE("actions outside {-1,+1} are rejected") {
    CHECK_THROWS_AS(ope::behavior_policy_prob(p, 0.0, origin, 0.0),
                    ope::InvalidInput);
  }
}

TEST_CASE("marginal behavior probability integrates out the confounder") {
  SUBCASE("defaults cancel the state dependence exactly") {
    const ope::SimParams p = ope::SimParams::defaults();
    ope::Rng rng(77);
    for (int i = 0; i < 10; ++i) {
      const Eigen::Vector2d s(rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0));
      CHECK(ope::marginal_behavior_prob(p, s, 1.0) == 0.5);
      CHECK(ope::marginal_behavior_prob(p, s, -1.0) == 0.5);
    }
  }

  SUBCASE("state-dependent variant reduces to a logistic in the state") {
    ope::SimParams p = ope::SimParams::defaults();
    p.ts = Eigen::Vector2d(0.0, 0.0);
    const Eigen::Vector2d s(1.0, 1.0);
    const double prob = ope::marginal_behavior_prob(p, s, 1.0);
    CHECK(prob == doctest::Approx(expit(-1.0)).epsilon(1e-14));
    const double sum = prob + ope::marginal_behavior_prob(p, s, -1.0);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("target policy is epsilon-greedy on the state gap") {
  SUBCASE("greedy action tracks the sign of s1 - s2") {
    ope::SimParams p = ope::SimParams::defaults();
    p.epsilon_greedy = 0.0;
    ope::Rng rng(5);
    CHECK(ope::target_policy(p, Eigen::Vector2d(1.0, 0.0), rng) == 1.0);
    CHECK(ope::target_policy(p, Eigen::Vector2d(0.0, 1.0), rng) == -1.0);
    CHECK(ope::target_policy(p, Eigen::Vector2d(0.0, 0.0), rng) == 1.0);
  }

  SUBCASE("probabilities split epsilon across both actions") {
    const ope::SimParams p = ope::SimParams::defaults();
    const Eigen::Vector2d s(1.0, 0.0);
    CHECK(ope::target_policy_prob(p, s, 1.0) ==
          doctest::Approx(0.9).epsilon(1e-15));
    CHECK(ope::target_policy_prob(p, s, -1.0) ==
          doctest::Approx(0.1).epsilon(1e-15));
    const double sum = ope::target_policy_prob(p, s, 1.0) +
                       ope::target_policy_prob(p, s, -1.0);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-15));
  }

  SUBCASE("empirical greedy rate matches one minus half epsilon") {
    const ope::SimParams p = ope::SimParams::defaults();
    const Eigen::Vector2d s(2.0, -1.0);
    ope::Rng sampler(2024);
    const int trials = 20000;
    int greedy = 0;
    for (int i = 0; i < trials; ++i)
      if (ope::target_policy(p, s, sampler) == 1.0) ++greedy;
    const double rate = static_cast<double>(greedy) / trials;
    const double se = std::sqrt(0.9 * 0.1 / trials);
    CHECK(std::abs(rate - 0.9) <= 4.0 * se);
  }

  SUBCASE("the policy spec validates the state dimension") {
    const ope::PolicySpec spec =
        ope::target_policy_spec(ope::SimParams::defaults());
    REQUIRE(spec.action_set == std::vector<double>{-1.0, 1.0});
    Eigen::VectorXd good(2);
    good << 1.0, 0.0;
    CHECK(spec.prob(good, 1.0, 1) == doctest::Approx(0.9).epsilon(1e-15));
    Eigen::VectorXd bad(3);
    bad.setZero();
    CHECK_THROWS_AS(spec.prob(bad, 1.0, 1), ope::InvalidInput);
  }
}

TEST_CASE("sample_batch is deterministic and trajectory streams are stable") {
  const ope::SimParams p = ope::SimParams::defaults();
  const ope::TrajectoryBatch a = ope::sample_batch(p, 6, 3, 42);
  const ope::TrajectoryBatch b = ope::sample_batch(p, 6, 3, 42);
  require_batches_equal(a, b);

  SUBCASE("each trajectory draws from its own stream") {
    const ope::TrajectoryBatch single = ope::sample_batch(p, 1, 3, 42);
    CHECK((a.s1.row(0).array() == single.s1.row(0).array()).all());
    CHECK((a.z.row(0).array() == single.z.row(0).array()).all());
    CHECK((a.a.row(0).array() == single.a.row(0).array()).all());
    CHECK((a.r.row(0).array() == single.r.row(0).array()).all());
  }

  SUBCASE("a different seed changes the draw") {
    const ope::TrajectoryBatch d = ope::sample_batch(p, 6, 3, 43);
    CHECK_FALSE((a.r.array() == d.r.array()).all());
  }
}

TEST_CASE("sampled batches satisfy the environment ranges") {
  const ope::SimParams p = ope::SimParams::defaults();
  const ope::TrajectoryBatch batch = ope::sample_batch(p, 200, 4, 7);

  CHECK(batch.size() == 200);
  CHECK(batch.horizon() == 4);
  CHECK(batch.r.minCoeff() >= -0.1 - 1e-12);
  CHECK(batch.r.maxCoeff() <= 1.1 + 1e-12);
  CHECK(((batch.a.array() == 1.0) || (batch.a.array() == -1.0)).all());
  CHECK(batch.s1.allFinite());
  CHECK(batch.s2.allFinite());
  CHECK(batch.w.allFinite());
  CHECK(batch.z.allFinite());

  SUBCASE("actions from the marginal behavior policy are an even coin") {
    const ope::TrajectoryBatch big = ope::sample_batch(p, 10000, 1, 11);
    const double frac = (big.a.array() == 1.0).cast<double>().mean();
    const double se = std::sqrt(0.25 / 10000.0);
    CHECK(std::abs(frac - 0.5) <= 3.0 * se);
  }
}

TEST_CASE("sample_batch validates its arguments") {
  const ope::SimParams p = ope::SimParams::defaults();
  CHECK_THROWS_AS(ope::sample_batch(p, 0, 3, 1), ope::InvalidInput);
  CHECK_THROWS_AS(ope::sample_batch(p, 5, 0, 1), ope::InvalidInput);

  SUBCASE("noise covariance must be positive semidefinite") {
    ope::SimParams bad = ope::SimParams::defaults();
    bad.sigma(0, 1) = bad.sigma(1, 0) = 2.0;
    CHECK_THROWS_AS(ope::sample_batch(bad, 5, 2, 1), ope::InvalidInput);
  }

  SUBCASE("epsilon must stay in the unit interval") {
    ope::SimParams bad = ope::SimParams::defaults();
    bad.epsilon_greedy = 1.5;
    CHECK_THROWS_AS(ope::sample_batch(bad, 5, 2, 1), ope::InvalidInput);
  }
}

TEST_CASE("single-step draws reproduce the conditional moments") {
  const ope::SimParams p = ope::SimParams::defaults();
  const Eigen::Matrix3d factor = ope::detail::noise_factor(p);
  const Eigen::Vector2d s(0.3, -0.7);
  const double a = 1.0;
  const int m = 50000;

  const double mean_z = p.alpha0 + p.alpha_a * a + p.alpha_s.dot(s);
  const double mean_w = p.mu0 + p.mu_a * a + p.mu_s.dot(s);
  const double mean_u = p.kappa0 + p.kappa_a * a + p.kappa_s.dot(s);

  Eigen::MatrixXd draws(m, 3);
  Eigen::MatrixXd resid(m, 2);
  ope::Rng rng(909);
  for (int i = 0; i < m; ++i) {
    const ope::detail::StepDraw step = ope::detail::draw_step(p, factor, s, a, rng);
    draws(i, 0) = step.z;
    draws(i, 1) = step.w;
    draws(i, 2) = step.u;
    resid.row(i) =
        (step.s_next - s - a * step.u * Eigen::Vector2d::Ones()).transpose();
    const double mean_r = expit(0.5 * a * (step.u + s(0) - 2.0 * s(1)));
    CHECK(std::abs(step.r - mean_r) <= p.reward_noise_halfwidth + 1e-12);
  }

  const Eigen::RowVector3d mean = draws.colwise().mean();
  const Eigen::Vector3d target(mean_z, mean_w, mean_u);
  const Eigen::MatrixXd centered = draws.rowwise() - mean;
  const Eigen::Matrix3d cov =
      centered.transpose() * centered / static_cast<double>(m - 1);

  for (int j = 0; j < 3; ++j) {
    const double se = std::sqrt(cov(j, j) / m);
    CHECK(std::abs(mean(j) - target(j)) <= 4.0 * se);
  }
  for (int j = 0; j < 3; ++j) {
    for (int k = 0; k < 3; ++k) {
      const double se = std::sqrt(
          (p.sigma(j, j) * p.sigma(k, k) + p.sigma(j, k) * p.sigma(j, k)) / m);
      CHECK(std::abs(cov(j, k) - p.sigma(j, k)) <= 4.0 * se);
    }
  }

  SUBCASE("transition residuals behave like standard normal noise") {
    const Eigen::RowVector2d rmean = resid.colwise().mean();
    const Eigen::MatrixXd rcentered = resid.rowwise() - rmean;
    const Eigen::Matrix2d rcov =
        rcentered.transpose() * rcentered / static_cast<double>(m - 1);
    for (int j = 0; j < 2; ++j) {
      CHECK(std::abs(rmean(j)) <= 4.0 / std::sqrt(static_cast<double>(m)));
      CHECK(std::abs(rcov(j, j) - 1.0) <= 4.0 * std::sqrt(2.0 / m));
    }
    CHECK(std::abs(rcov(0, 1)) <= 4.0 * std::sqrt(1.0 / m));
  }
}

TEST_CASE("observed noise correlation matches the specified covariance") {
  const ope::SimParams p = ope::SimParams::defaults();
  const ope::TrajectoryBatch batch = ope::sample_batch(p, 50000, 1, 13);
  const Eigen::Index n = batch.size();

  Eigen::VectorXd z_resid(n);
  Eigen::VectorXd w_resid(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector2d s(batch.s1(i, 0), batch.s2(i, 0));
    const double a = batch.a(i, 0);
    z_resid(i) = batch.z(i, 0) - (p.alpha0 + p.alpha_a * a + p.alpha_s.dot(s));
    w_resid(i) = batch.w(i, 0) - (p.mu0 + p.mu_a * a + p.mu_s.dot(s));
  }
  const double zc = z_resid.mean();
  const double wc = w_resid.mean();
  const double var_z = (z_resid.array() - zc).square().sum() / (n - 1);
  const double var_w = (w_resid.array() - wc).square().sum() / (n - 1);
  const double cov_zw =
      ((z_resid.array() - zc) * (w_resid.array() - wc)).sum() / (n - 1);
  const double corr = cov_zw / std::sqrt(var_z * var_w);
  CHECK(std::abs(corr - 0.25) <= 4.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("Monte Carlo policy value matches forced-reward baselines") {
  const ope::SimParams p = ope::SimParams::defaults();

  SUBCASE("zero rewards yield exactly zero") {
    const ope::McValue est = ope::mc_policy_value(
        p, 3, 200, 99,
        [](const Eigen::Vector2d&, double, double) { return 0.0; });
    CHECK(est.value == 0.0);
    CHECK(est.std_error == 0.0);
  }

  SUBCASE("unit rewards accumulate once per step") {
    const ope::McValue est = ope::mc_policy_value(
        p, 4, 150, 99,
        [](const Eigen::Vector2d&, double, double) { return 1.0; });
    CHECK(est.value == doctest::Approx(4.0).epsilon(1e-15));
    CHECK(est.std_error == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("independent seeds agree within sampling error") {
    const ope::McValue a = ope::mc_policy_value(p, 3, 20000, 1);
    const ope::McValue b = ope::mc_policy_value(p, 3, 20000, 2);
    const double se =
        std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error);
    CHECK(std::abs(a.value - b.value) <= 4.0 * se);
    CHECK(a.std_error > 0.0);
  }

  SUBCASE("rollout count is validated") {
    CHECK_THROWS_AS(ope::mc_policy_value(p, 3, 0, 1), ope::InvalidInput);
  }

  SUBCASE("latent confounder is independent of the executed action") {
    // Under the defaults the executed action and the latent confounder are
    // uncorrelated once the action is chosen from the state alone, so
    // E[A * U] = 0.  Conditioning U on the executed action instead would
    // shift it by kappa_a * A and give E[A * U] = kappa_a = -0.5.
    const ope::McValue est = ope::mc_policy_value(
        p, 1, 20000, 404,
        [](const Eigen::Vector2d&, double a, double u) { return a * u; });
    CHECK(std::abs(est.value) <= 4.0 * est.std_error);
  }
}

TEST_CASE("batch CSV round trip preserves every field bitwise") {
  const ope::SimParams p = ope::SimParams::defaults();
  const ope::TrajectoryBatch batch = ope::sample_batch(p, 9, 4, 31);
  TempFile file("roundtrip");

  ope::save_batch_csv(batch, file.path.string());
  const ope::TrajectoryBatch loaded = ope::load_batch_csv(file.path.string());
  require_batches_equal(batch, loaded);

  SUBCASE("header line is the documented column list") {
    std::ifstream in(file.path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "traj,t,s1,s2,w,z,a,r");
  }
}

TEST_CASE("batch CSV loading rejects malformed inputs") {
  const ope::SimParams p = ope::SimParams::defaults();
  const ope::TrajectoryBatch batch = ope::sample_batch(p, 4, 2, 8);

  SUBCASE("missing file") {
    CHECK_THROWS_AS(ope::load_batch_csv("/nonexistent/ope_batch.csv"),
                    ope::IoError);
  }

  SUBCASE("wrong header") {
    TempFile file("badheader");
    std::ofstream out(file.path);
    out << "traj,t,s1,s2,w,z,r,a\n0,1,0,0,0,0,1,0\n";
    out.close();
    CHECK_THROWS_AS(ope::load_batch_csv(file.path.string()), ope::IoError);
  }

  SUBCASE("malformed row") {
    TempFile file("badrow");
    std::ofstream out(file.path);
    out << "traj,t,s1,s2,w,z,a,r\n0,1,0.0,0.0,nope\n";
    out.close();
    CHECK_THROWS_AS(ope::load_batch_csv(file.path.string()), ope::IoError);
  }

  SUBCASE("empty data section") {
    TempFile file("empty");
    std::ofstream out(file.path);
    out << "traj,t,s1,s2,w,z,a,r\n";
    out.close();
    CHECK_THROWS_AS(ope::load_batch_csv(file.path.string()), ope::IoError);
  }

  SUBCASE("incomplete grid") {
    TempFile file("incomplete");
    ope::save_batch_csv(batch, file.path.string());
    std::ifstream in(file.path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    in.close();
    lines.pop_back();
    std::ofstream out(file.path);
    for (const std::string& kept : lines) out << kept << "\n";
    out.close();
    CHECK_THROWS_AS(ope::load_batch_csv(file.path.string()), ope::IoError);
  }

  SUBCASE("duplicate trajectory-step row") {
    TempFile file("duplicate");
    ope::save_batch_csv(batch, file.path.string());
    std::ifstream in(file.path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    in.close();
    lines.back() = lines[1];
    std::ofstream out(file.path);
    for (const std::string& kept : lines) out << kept << "\n";
    out.close();
    CHECK_THROWS_AS(ope::load_batch_csv(file.path.string()), ope::IoError);
  }
}

}  // TEST_SUITE
