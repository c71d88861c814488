#include "ope/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include <Eigen/SVD>

#include "json.hpp"

#include "ope/errors.hpp"
#include "ope/linalg.hpp"
#include "ope/rng.hpp"

namespace ope {

namespace {

constexpr double kRowSumTol = 1e-12;
constexpr double kRankRelTol = 1e-9;
constexpr double kResidualTol = 1e-8;
constexpr double kGeneratorMargin = 0.05;
constexpr int kMaxGeneratorAttempts = 1000;

void check_stochastic_rows(const Eigen::MatrixXd& m, const std::string& name) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if ((m.row(i).array() < 0.0).any())
      throw InvalidInput(name + " has a negative probability in row " +
                         std::to_string(i));
    if (std::abs(m.row(i).sum() - 1.0) > kRowSumTol)
      throw InvalidInput(name + " row " + std::to_string(i) +
                         " does not sum to 1");
  }
}

void check_policy(const TabularPomdp& pomdp, const TabularPolicy& target) {
  if (static_cast<int>(target.probs.size()) != pomdp.T)
    throw InvalidInput("target policy must have one matrix per step");
  for (int t = 0; t < pomdp.T; ++t) {
    const Eigen::MatrixXd& p = target.probs[static_cast<std::size_t>(t)];
    if (p.rows() != pomdp.nS || p.cols() != pomdp.nA)
      throw InvalidInput("target policy matrix has wrong shape at step " +
                         std::to_string(t + 1));
    check_stochastic_rows(p, "target policy step " + std::to_string(t + 1));
  }
}

int matrix_rank(const Eigen::MatrixXd& m, double* sigma_small) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const Eigen::VectorXd& sv = svd.singularValues();
  if (sv.size() == 0) {
    if (sigma_small) *sigma_small = 0.0;
    return 0;
  }
  if (sigma_small) *sigma_small = sv(sv.size() - 1);
  const double cutoff = kRankRelTol * sv(0);
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff) ++rank;
  return rank;
}

/// Bayes posterior over u given each positive-probability z at (t,s,a):
/// rows are the kept z values, columns u. Also reports which z were kept.
Eigen::MatrixXd posterior_u_given_z(const TabularPomdp& pomdp, int tc, int s,
                                    int a, const Eigen::VectorXd& p_u,
                                    std::vector<int>* kept_z) {
  const Eigen::MatrixXd& ze = pomdp.z_emission[static_cast<std::size_t>(tc)];
  Eigen::MatrixXd joint(pomdp.nZ, pomdp.nU);
  for (int u = 0; u < pomdp.nU; ++u)
    joint.col(u) = ze.row(pomdp.sua(s, u, a)).transpose() * p_u(u);

  std::vector<int> rows;
  for (int z = 0; z < pomdp.nZ; ++z)
    if (joint.row(z).sum() > 0.0) rows.push_back(z);

  Eigen::MatrixXd post(static_cast<Eigen::Index>(rows.size()), pomdp.nU);
  for (std::size_t i = 0; i < rows.size(); ++i)
    post.row(static_cast<Eigen::Index>(i)) =
        joint.row(rows[i]) / joint.row(rows[i]).sum();
  if (kept_z) *kept_z = std::move(rows);
  return post;
}

Eigen::VectorXd dirichlet_row(Rng& rng, int k) {
  Eigen::VectorXd g(k);
  for (int i = 0; i < k; ++i) g(i) = -std::log(1.0 - rng.uniform());
  const double total = g.sum();
  if (total <= 0.0) return Eigen::VectorXd::Constant(k, 1.0 / k);
  return g / total;
}

/// Dirichlet row blended toward uniform so no category starves.
Eigen::VectorXd floored_row(Rng& rng, int k, double floor_weight) {
  return (1.0 - floor_weight) * dirichlet_row(rng, k) +
         Eigen::VectorXd::Constant(k, floor_weight / k);
}

/// Dirichlet row with extra mass on one category; keeps emission matrices
/// comfortably full rank so rejection sampling terminates quickly.
Eigen::VectorXd anchored_row(Rng& rng, int k, int anchor, double anchor_weight) {
  Eigen::VectorXd row = (1.0 - anchor_weight) * dirichlet_row(rng, k);
  row(anchor) += anchor_weight;
  return row;
}

Eigen::MatrixXd random_stochastic(Rng& rng, Eigen::Index rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    m.row(i) = floored_row(rng, cols, 0.5).transpose();
  return m;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index rows,
                                 Eigen::Index cols, const std::string& name) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    throw IoError(name + ": expected " + std::to_string(rows) + " rows");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const nlohmann::json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw IoError(name + ": row " + std::to_string(i) + " must have " +
                    std::to_string(cols) + " entries");
    for (Eigen::Index c = 0; c < cols; ++c)
      m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

}  // namespace

void validate(const TabularPomdp& pomdp) {
  if (pomdp.nS < 1 || pomdp.nU < 1 || pomdp.nW < 1 || pomdp.nZ < 1 ||
      pomdp.nA < 1)
    throw InvalidInput("all category counts must be positive");
  if (pomdp.T < 1) throw InvalidInput("horizon must be at least 1");
  const auto steps = static_cast<std::size_t>(pomdp.T);
  if (pomdp.transition.size() != steps || pomdp.w_emission.size() != steps ||
      pomdp.z_emission.size() != steps || pomdp.behavior.size() != steps ||
      pomdp.reward.size() != steps)
    throw InvalidInput("per-step tensor lists must have T entries");

  const Eigen::Index n_su = static_cast<Eigen::Index>(pomdp.nS) * pomdp.nU;
  const Eigen::Index n_sua = n_su * pomdp.nA;
  for (int t = 0; t < pomdp.T; ++t) {
    const auto ts = std::to_string(t + 1);
    const auto& tr = pomdp.transition[static_cast<std::size_t>(t)];
    if (tr.rows() != n_sua || tr.cols() != n_su)
      throw InvalidInput("transition tensor shape wrong at step " + ts);
    check_stochastic_rows(tr, "transition step " + ts);

    const auto& we = pomdp.w_emission[static_cast<std::size_t>(t)];
    if (we.rows() != n_su || we.cols() != pomdp.nW)
      throw InvalidInput("w_emission shape wrong at step " + ts);
    check_stochastic_rows(we, "w_emission step " + ts);

    const auto& ze = pomdp.z_emission[static_cast<std::size_t>(t)];
    if (ze.rows() != n_sua || ze.cols() != pomdp.nZ)
      throw InvalidInput("z_emission shape wrong at step " + ts);
    check_stochastic_rows(ze, "z_emission step " + ts);

    const auto& be = pomdp.behavior[static_cast<std::size_t>(t)];
    if (be.rows() != n_su || be.cols() != pomdp.nA)
      throw InvalidInput("behavior shape wrong at step " + ts);
    check_stochastic_rows(be, "behavior step " + ts);

    const auto& rw = pomdp.reward[static_cast<std::size_t>(t)];
    if (rw.size() != n_sua)
      throw InvalidInput("reward vector length wrong at step " + ts);
    if ((rw.array().abs() > 1.0 + kRowSumTol).any())
      throw InvalidInput("rewards must lie in [-1,1] at step " + ts);
  }
  if (pomdp.initial.size() != n_su)
    throw InvalidInput("initial distribution has wrong length");
  if ((pomdp.initial.array() < 0.0).any() ||
      std::abs(pomdp.initial.sum() - 1.0) > kRowSumTol)
    throw InvalidInput("initial distribution is not a probability vector");
}

std::vector<Eigen::VectorXd> occupancy(const TabularPomdp& pomdp) {
  validate(pomdp);
  std::vector<Eigen::VectorXd> occ(static_cast<std::size_t>(pomdp.T));
  occ[0] = pomdp.initial;
  for (int t = 1; t < pomdp.T; ++t) {
    const auto& tr = pomdp.transition[static_cast<std::size_t>(t - 1)];
    const auto& be = pomdp.behavior[static_cast<std::size_t>(t - 1)];
    Eigen::VectorXd next = Eigen::VectorXd::Zero(pomdp.initial.size());
    for (int s = 0; s < pomdp.nS; ++s) {
      for (int u = 0; u < pomdp.nU; ++u) {
        const double mass = occ[static_cast<std::size_t>(t - 1)](pomdp.su(s, u));
        if (mass <= 0.0) continue;
        for (int a = 0; a < pomdp.nA; ++a) {
          const double pa = be(pomdp.su(s, u), a);
          if (pa <= 0.0) continue;
          next += mass * pa * tr.row(pomdp.sua(s, u, a)).transpose();
        }
      }
    }
    occ[static_cast<std::size_t>(t)] = std::move(next);
  }
  return occ;
}

RankReport check_rank_conditions(const TabularPomdp& pomdp) {
  const std::vector<Eigen::VectorXd> occ = occupancy(pomdp);
  RankReport report;
  double min_sigma = std::numeric_limits<double>::infinity();

  for (int t = 0; t < pomdp.T; ++t) {
    const auto& occ_t = occ[static_cast<std::size_t>(t)];
    const auto& we = pomdp.w_emission[static_cast<std::size_t>(t)];
    const auto& be = pomdp.behavior[static_cast<std::size_t>(t)];
    for (int s = 0; s < pomdp.nS; ++s) {
      double state_mass = 0.0;
      for (int u = 0; u < pomdp.nU; ++u) state_mass += occ_t(pomdp.su(s, u));
      if (state_mass <= 0.0) {
        report.skipped_unreachable.push_back({'W', t + 1, s, -1, 0, pomdp.nU});
        continue;
      }

      Eigen::MatrixXd w_mat(pomdp.nW, pomdp.nU);
      for (int u = 0; u < pomdp.nU; ++u)
        w_mat.col(u) = we.row(pomdp.su(s, u)).transpose();
      double sigma = 0.0;
      const int w_rank = matrix_rank(w_mat, &sigma);
      min_sigma = std::min(min_sigma, sigma);
      if (w_rank < pomdp.nU) {
        report.deficiencies.push_back({'W', t + 1, s, -1, w_rank, pomdp.nU});
        report.passed = false;
      }

      for (int a = 0; a < pomdp.nA; ++a) {
        Eigen::VectorXd p_u(pomdp.nU);
        for (int u = 0; u < pomdp.nU; ++u)
          p_u(u) = occ_t(pomdp.su(s, u)) * be(pomdp.su(s, u), a);
        const double action_mass = p_u.sum();
        if (action_mass <= 0.0) {
          report.skipped_unreachable.push_back({'U', t + 1, s, a, 0, pomdp.nU});
          continue;
        }
        p_u /= action_mass;
        const Eigen::MatrixXd post =
            posterior_u_given_z(pomdp, t, s, a, p_u, nullptr);
        const int u_rank = matrix_rank(post, &sigma);
        min_sigma = std::min(min_sigma, sigma);
        if (u_rank < pomdp.nU) {
          report.deficiencies.push_back({'U', t + 1, s, a, u_rank, pomdp.nU});
          report.passed = false;
        }
      }
    }
  }
  report.min_singular_value = std::isfinite(min_sigma) ? min_sigma : 0.0;
  return report;
}

double true_value_dp(const TabularPomdp& pomdp, const TabularPolicy& target) {
  validate(pomdp);
  check_policy(pomdp, target);
  Eigen::VectorXd value = Eigen::VectorXd::Zero(pomdp.initial.size());
  for (int t = pomdp.T - 1; t >= 0; --t) {
    const auto& tr = pomdp.transition[static_cast<std::size_t>(t)];
    const auto& rw = pomdp.reward[static_cast<std::size_t>(t)];
    const auto& pol = target.probs[static_cast<std::size_t>(t)];
    Eigen::VectorXd next = Eigen::VectorXd::Zero(value.size());
    for (int s = 0; s < pomdp.nS; ++s) {
      for (int u = 0; u < pomdp.nU; ++u) {
        double acc = 0.0;
        for (int a = 0; a < pomdp.nA; ++a) {
          const int idx = pomdp.sua(s, u, a);
          acc += pol(s, a) * (rw(idx) + tr.row(idx).dot(value));
        }
        next(pomdp.su(s, u)) = acc;
      }
    }
    value = std::move(next);
  }
  return pomdp.initial.dot(value);
}

BridgeSolution solve_q_bridges(const TabularPomdp& pomdp,
                               const TabularPolicy& target) {
  validate(pomdp);
  check_policy(pomdp, target);
  const std::vector<Eigen::VectorXd> occ = occupancy(pomdp);

  BridgeSolution out;
  out.q.assign(static_cast<std::size_t>(pomdp.T),
               Eigen::MatrixXd::Zero(pomdp.nW, pomdp.nS * pomdp.nA));
  out.v.assign(static_cast<std::size_t>(pomdp.T),
               Eigen::MatrixXd::Zero(pomdp.nW, pomdp.nS));

  Eigen::MatrixXd v_next = Eigen::MatrixXd::Zero(pomdp.nW, pomdp.nS);
  for (int t = pomdp.T - 1; t >= 0; --t) {
    const auto& tr = pomdp.transition[static_cast<std::size_t>(t)];
    const auto& rw = pomdp.reward[static_cast<std::size_t>(t)];
    const auto& we = pomdp.w_emission[static_cast<std::size_t>(t)];
    const auto& be = pomdp.behavior[static_cast<std::size_t>(t)];
    const auto& occ_t = occ[static_cast<std::size_t>(t)];

    // E[v_{t+1}(W_{t+1}, s') | s', u'] for every (s', u').
    Eigen::VectorXd exp_v = Eigen::VectorXd::Zero(pomdp.initial.size());
    if (t + 1 < pomdp.T) {
      const auto& we_next = pomdp.w_emission[static_cast<std::size_t>(t + 1)];
      for (int s = 0; s < pomdp.nS; ++s)
        for (int u = 0; u < pomdp.nU; ++u)
          exp_v(pomdp.su(s, u)) = we_next.row(pomdp.su(s, u)).dot(v_next.col(s));
    }

    for (int s = 0; s < pomdp.nS; ++s) {
      for (int a = 0; a < pomdp.nA; ++a) {
        Eigen::VectorXd p_u(pomdp.nU);
        for (int u = 0; u < pomdp.nU; ++u)
          p_u(u) = occ_t(pomdp.su(s, u)) * be(pomdp.su(s, u), a);
        const double action_mass = p_u.sum();
        if (action_mass <= 0.0) continue;
        p_u /= action_mass;

        Eigen::VectorXd cont(pomdp.nU);
        for (int u = 0; u < pomdp.nU; ++u) {
          const int idx = pomdp.sua(s, u, a);
          cont(u) = rw(idx) + tr.row(idx).dot(exp_v);
        }

        const Eigen::MatrixXd post = posterior_u_given_z(pomdp, t, s, a, p_u, nullptr);
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(post.rows(), pomdp.nW);
        for (int u = 0; u < pomdp.nU; ++u)
          m += post.col(u) * we.row(pomdp.su(s, u));
        const Eigen::VectorXd b = post * cont;

        const Eigen::VectorXd q_sa = pinv(m) * b;
        const double residual = (m * q_sa - b).norm();
        if (residual > kResidualTol)
          throw NoBridgeSolution("moment system residual " +
                                     std::to_string(residual) +
                                     " exceeds tolerance",
                                 t + 1, s, a);
        out.max_residual = std::max(out.max_residual, residual);
        out.q[static_cast<std::size_t>(t)].col(s * pomdp.nA + a) = q_sa;
      }
    }

    const auto& pol = target.probs[static_cast<std::size_t>(t)];
    for (int s = 0; s < pomdp.nS; ++s) {
      Eigen::VectorXd v_col = Eigen::VectorXd::Zero(pomdp.nW);
      for (int a = 0; a < pomdp.nA; ++a)
        v_col += pol(s, a) * out.q[static_cast<std::size_t>(t)].col(s * pomdp.nA + a);
      out.v[static_cast<std::size_t>(t)].col(s) = v_col;
    }
    v_next = out.v[static_cast<std::size_t>(t)];
  }
  return out;
}

double ope_via_bridges(const TabularPomdp& pomdp, const TabularPolicy& target) {
  const BridgeSolution bridges = solve_q_bridges(pomdp, target);
  const auto& we1 = pomdp.w_emission[0];
  double value = 0.0;
  for (int s = 0; s < pomdp.nS; ++s)
    for (int u = 0; u < pomdp.nU; ++u)
      value += pomdp.initial(pomdp.su(s, u)) *
               we1.row(pomdp.su(s, u)).dot(bridges.v[0].col(s));
  return value;
}

TabularPomdp random_pomdp(const TabularDims& dims, std::uint64_t seed) {
  if (dims.nS < 1 || dims.nU < 1 || dims.nW < 1 || dims.nZ < 1 || dims.nA < 1)
    throw InvalidInput("all category counts must be positive");
  if (dims.T < 1) throw InvalidInput("horizon must be at least 1");
  if (dims.nW < dims.nU || dims.nZ < dims.nU)
    throw InvalidInput("need nW >= nU and nZ >= nU for full-rank instances");

  const Eigen::Index n_su = static_cast<Eigen::Index>(dims.nS) * dims.nU;
  const Eigen::Index n_sua = n_su * dims.nA;

  for (int attempt = 0; attempt < kMaxGeneratorAttempts; ++attempt) {
    Rng rng = Rng::derive(seed, {stream::kInstance, 1,
                                 static_cast<std::uint64_t>(attempt)});
    TabularPomdp pomdp;
    pomdp.nS = dims.nS;
    pomdp.nU = dims.nU;
    pomdp.nW = dims.nW;
    pomdp.nZ = dims.nZ;
    pomdp.nA = dims.nA;
    pomdp.T = dims.T;
    pomdp.transition.reserve(static_cast<std::size_t>(dims.T));
    for (int t = 0; t < dims.T; ++t) {
      pomdp.transition.push_back(random_stochastic(rng, n_sua, static_cast<int>(n_su)));

      Eigen::MatrixXd we(n_su, dims.nW);
      Eigen::MatrixXd ze(n_sua, dims.nZ);
      for (int s = 0; s < dims.nS; ++s) {
        for (int u = 0; u < dims.nU; ++u) {
          we.row(s * dims.nU + u) = anchored_row(rng, dims.nW, u, 0.5).transpose();
          for (int a = 0; a < dims.nA; ++a)
            ze.row((s * dims.nU + u) * dims.nA + a) =
                anchored_row(rng, dims.nZ, u, 0.5).transpose();
        }
      }
      pomdp.w_emission.push_back(std::move(we));
      pomdp.z_emission.push_back(std::move(ze));

      pomdp.behavior.push_back(random_stochastic(rng, n_su, dims.nA));
      Eigen::VectorXd rw(n_sua);
      for (Eigen::Index i = 0; i < n_sua; ++i) rw(i) = rng.uniform(-1.0, 1.0);
      pomdp.reward.push_back(std::move(rw));
    }
    pomdp.initial = floored_row(rng, static_cast<int>(n_su), 0.5);

    const RankReport report = check_rank_conditions(pomdp);
    if (report.passed && report.skipped_unreachable.empty() &&
        report.min_singular_value >= kGeneratorMargin)
      return pomdp;
  }
  throw DegenerateData("no full-rank tabular instance found in " +
                       std::to_string(kMaxGeneratorAttempts) + " attempts");
}

TabularPolicy uniform_tabular_policy(const TabularPomdp& pomdp) {
  TabularPolicy policy;
  policy.probs.assign(static_cast<std::size_t>(pomdp.T),
                      Eigen::MatrixXd::Constant(pomdp.nS, pomdp.nA,
                                                1.0 / pomdp.nA));
  return policy;
}

TabularPolicy random_tabular_policy(const TabularPomdp& pomdp,
                                    std::uint64_t seed) {
  Rng rng = Rng::derive(seed, {stream::kInstance, 2});
  TabularPolicy policy;
  for (int t = 0; t < pomdp.T; ++t)
    policy.probs.push_back(random_stochastic(rng, pomdp.nS, pomdp.nA));
  return policy;
}

void save_tabular_json(const TabularInstance& instance, const std::string& path) {
  validate(instance.pomdp);
  if (instance.target) check_policy(instance.pomdp, *instance.target);
  const TabularPomdp& p = instance.pomdp;

  nlohmann::json j;
  j["nS"] = p.nS;
  j["nU"] = p.nU;
  j["nW"] = p.nW;
  j["nZ"] = p.nZ;
  j["nA"] = p.nA;
  j["T"] = p.T;
  for (int t = 0; t < p.T; ++t) {
    j["transition"].push_back(matrix_to_json(p.transition[static_cast<std::size_t>(t)]));
    j["w_emission"].push_back(matrix_to_json(p.w_emission[static_cast<std::size_t>(t)]));
    j["z_emission"].push_back(matrix_to_json(p.z_emission[static_cast<std::size_t>(t)]));
    j["behavior"].push_back(matrix_to_json(p.behavior[static_cast<std::size_t>(t)]));
    nlohmann::json rw = nlohmann::json::array();
    for (Eigen::Index i = 0; i < p.reward[static_cast<std::size_t>(t)].size(); ++i)
      rw.push_back(p.reward[static_cast<std::size_t>(t)](i));
    j["reward"].push_back(std::move(rw));
  }
  nlohmann::json init = nlohmann::json::array();
  for (Eigen::Index i = 0; i < p.initial.size(); ++i) init.push_back(p.initial(i));
  j["initial"] = std::move(init);
  if (instance.target)
    for (int t = 0; t < p.T; ++t)
      j["target"].push_back(matrix_to_json(instance.target->probs[static_cast<std::size_t>(t)]));

  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << j.dump(1) << "\n";
  if (!out.flush()) throw IoError("write failed: " + path);
}

TabularInstance load_tabular_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("cannot parse " + path + ": " + e.what());
  }

  TabularInstance instance;
  TabularPomdp& p = instance.pomdp;
  try {
    p.nS = j.at("nS").get<int>();
    p.nU = j.at("nU").get<int>();
    p.nW = j.at("nW").get<int>();
    p.nZ = j.at("nZ").get<int>();
    p.nA = j.at("nA").get<int>();
    p.T = j.at("T").get<int>();
    if (p.nS < 1 || p.nU < 1 || p.nW < 1 || p.nZ < 1 || p.nA < 1 || p.T < 1)
      throw IoError("dimensions must be positive in " + path);
    const Eigen::Index n_su = static_cast<Eigen::Index>(p.nS) * p.nU;
    const Eigen::Index n_sua = n_su * p.nA;
    for (int t = 0; t < p.T; ++t) {
      const auto ts = static_cast<std::size_t>(t);
      p.transition.push_back(matrix_from_json(j.at("transition").at(ts), n_sua,
                                              n_su, "transition"));
      p.w_emission.push_back(matrix_from_json(j.at("w_emission").at(ts), n_su,
                                              p.nW, "w_emission"));
      p.z_emission.push_back(matrix_from_json(j.at("z_emission").at(ts), n_sua,
                                              p.nZ, "z_emission"));
      p.behavior.push_back(matrix_from_json(j.at("behavior").at(ts), n_su,
                                            p.nA, "behavior"));
      const Eigen::MatrixXd rw =
          matrix_from_json(nlohmann::json::array({j.at("reward").at(ts)}), 1,
                           n_sua, "reward");
      p.reward.push_back(rw.row(0).transpose());
    }
    const Eigen::MatrixXd init = matrix_from_json(
        nlohmann::json::array({j.at("initial")}), 1, n_su, "initial");
    p.initial = init.row(0).transpose();
    if (j.contains("target")) {
      TabularPolicy target;
      for (int t = 0; t < p.T; ++t)
        target.probs.push_back(matrix_from_json(
            j.at("target").at(static_cast<std::size_t>(t)), p.nS, p.nA, "target"));
      instance.target = std::move(target);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed tabular instance in " + path + ": " + e.what());
  }

  validate(p);
  if (instance.target) check_policy(p, *instance.target);
  return instance;
}

}  // namespace ope
