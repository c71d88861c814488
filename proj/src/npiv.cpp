#include "ope/npiv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "ope/errors.hpp"
#include "ope/linalg.hpp"
#include "ope/rng.hpp"

namespace ope {

namespace {

constexpr double kEigRelTol = 1e-10;

void check_hyper(const HyperParams& hp) {
  if (!std::isfinite(hp.ratio_m_delta2) || hp.ratio_m_delta2 <= 0.0)
    throw InvalidInput("ratio_m_delta2 must be a positive real");
  if (!std::isfinite(hp.lambda2_mu) || hp.lambda2_mu < 0.0)
    throw InvalidInput("lambda2_mu must be a nonnegative real");
}

void check_shapes(const NpivProblem& p) {
  const Eigen::Index n = p.hypothesis_features.rows();
  if (p.instrument_features.rows() != n)
    throw InvalidInput("hypothesis and instrument feature row counts differ");
  if (p.response.size() != n)
    throw InvalidInput("response length does not match feature rows");
  if (!p.response.allFinite())
    throw InvalidInput("response contains non-finite entries");
}

/// Everything in the closed form that does not depend on lambda2_mu.
/// With K_H = P diag(s) P^T (eigenvalues above a relative cutoff) and
/// C = diag(s)^{1/2} P^T M P diag(s)^{1/2} = V diag(d) V^T,
///   alpha(r) = P diag(s)^{-1/2} V diag(d + 4r)^{-1} V^T z,  z = V^T s^{1/2} P^T M Y,
/// which matches the pseudo-inverse solve because the normal matrix is
/// P diag(s)^{1/2} (C + 4 r I) diag(s)^{1/2} P^T with orthonormal P.
struct FitCache {
  Eigen::Index n = 0;
  Eigen::MatrixXd basis;     // P, n x p
  Eigen::VectorXd root;      // s^{1/2}, p
  Eigen::MatrixXd modes;     // V, p x p
  Eigen::VectorXd spectrum;  // d, p (clamped at 0)
  Eigen::VectorXd z;         // p
};

FitCache build_cache(const Eigen::MatrixXd& gram_h, const Eigen::MatrixXd& m,
                     const Eigen::VectorXd& y) {
  FitCache cache;
  cache.n = gram_h.rows();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_h(gram_h);
  if (eig_h.info() != Eigen::Success)
    throw NumericalFailure("eigendecomposition of the hypothesis Gram failed");
  const Eigen::VectorXd& evals = eig_h.eigenvalues();  // ascending
  const double cutoff = kEigRelTol * std::max(evals(cache.n - 1), 0.0);

  Eigen::Index first = 0;
  while (first < cache.n && evals(first) <= cutoff) ++first;
  const Eigen::Index p = cache.n - first;
  if (p == 0) return cache;  // numerically zero Gram: alpha = 0

  cache.basis = eig_h.eigenvectors().rightCols(p);
  cache.root = evals.tail(p).cwiseSqrt();

  const Eigen::MatrixXd proj = cache.basis.transpose() * m;  // P^T M, p x n
  Eigen::MatrixXd core = cache.root.asDiagonal() * (proj * cache.basis) *
                         cache.root.asDiagonal();
  core = 0.5 * (core + core.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_c(core);
  if (eig_c.info() != Eigen::Success)
    throw NumericalFailure("eigendecomposition of the projected Gram failed");
  cache.modes = eig_c.eigenvectors();
  cache.spectrum = eig_c.eigenvalues().cwiseMax(0.0);
  cache.z = cache.modes.transpose() *
            (cache.root.cwiseProduct(proj * y).eval());
  return cache;
}

Eigen::VectorXd solve_alpha(const FitCache& cache, double lambda2_mu) {
  if (cache.basis.cols() == 0) return Eigen::VectorXd::Zero(cache.n);
  if (lambda2_mu > 0.0) {
    const Eigen::VectorXd w =
        (cache.z.array() / (cache.spectrum.array() + 4.0 * lambda2_mu)).matrix();
    return cache.basis * (cache.modes * w).cwiseQuotient(cache.root).eval();
  }
  // lambda2_mu = 0: pseudo-invert the reduced normal matrix
  // B = diag(s)^{1/2} C diag(s)^{1/2} and solve alpha = P B^+ diag(s) P^T M Y.
  Eigen::MatrixXd reduced =
      cache.root.asDiagonal() *
      (cache.modes * cache.spectrum.asDiagonal() * cache.modes.transpose()) *
      cache.root.asDiagonal();
  reduced = 0.5 * (reduced + reduced.transpose()).eval();
  const Eigen::VectorXd rhs = cache.root.cwiseProduct(cache.modes * cache.z);
  return cache.basis * (pinv(reduced) * rhs).eval();
}

NpivModel fit_with_grams(const NpivProblem& problem,
                         const Eigen::MatrixXd& gram_h,
                         const Eigen::MatrixXd& gram_f,
                         const HyperParams& hp) {
  const Eigen::Index n = gram_h.rows();
  if (!gram_h.allFinite() || !gram_f.allFinite())
    throw NumericalFailure("Gram matrix has non-finite entries");
  const Eigen::MatrixXd m = detail::projection_matrix(gram_f, hp.ratio_m_delta2);
  const FitCache cache = build_cache(gram_h, m, problem.response);

  NpivModel model;
  model.alpha = solve_alpha(cache, hp.lambda2_mu);
  model.anchors = problem.hypothesis_features;
  model.kernel_h = problem.kernel_h;
  if (!model.alpha.allFinite())
    throw NumericalFailure("closed-form solve produced non-finite coefficients");
  if (model.alpha.size() != n)
    throw NumericalFailure("coefficient count does not match sample count");
  return model;
}

Eigen::MatrixXd slice(const Eigen::MatrixXd& m,
                      const std::vector<Eigen::Index>& rows,
                      const std::vector<Eigen::Index>& cols) {
  return m(rows, cols);
}

Eigen::VectorXd gather(const Eigen::VectorXd& v,
                       const std::vector<Eigen::Index>& idx) {
  return v(idx);
}

}  // namespace

double scaling_varsigma(std::int64_t n) {
  if (n < 1) throw InvalidInput("sample count must be at least 1");
  return 5.0 / std::pow(static_cast<double>(n), 0.4);
}

double scaling_zeta(double scale, std::int64_t n) {
  if (!std::isfinite(scale) || scale <= 0.0)
    throw InvalidInput("scale must be a positive real");
  const double vs = scaling_varsigma(n);
  return scale * vs * vs * vs * vs / 2.0;
}

NpivModel fit_npiv(const NpivProblem& problem, const HyperParams& hp) {
  if (problem.hypothesis_features.rows() < 2)
    throw InvalidInput("NPIV fit needs at least 2 samples");
  return detail::fit_npiv_unchecked(problem, hp);
}

Eigen::VectorXd predict(const NpivModel& model, const Eigen::MatrixXd& query) {
  if (model.alpha.size() != model.anchors.rows())
    throw InvalidInput("model coefficient count does not match anchors");
  if (query.cols() != model.anchors.cols())
    throw InvalidInput("query feature dimension does not match anchors");
  if (query.rows() == 0) return Eigen::VectorXd(0);
  return kernel_matrix(model.kernel_h, query, model.anchors) * model.alpha;
}

double projected_loss(const Eigen::VectorXd& residuals,
                      const GramMatrix& instrument_gram,
                      double ratio_m_delta2) {
  const Eigen::Index k = instrument_gram.entries.rows();
  if (residuals.size() != k)
    throw InvalidInput("residual length does not match instrument Gram size");
  if (!std::isfinite(ratio_m_delta2) || ratio_m_delta2 <= 0.0)
    throw InvalidInput("ratio_m_delta2 must be a positive real");
  if (k == 0) return 0.0;

  const Eigen::MatrixXd& f = instrument_gram.entries;
  const double c = ratio_m_delta2 / static_cast<double>(k);
  Eigen::MatrixXd shifted = c * f;
  shifted.diagonal().array() += 1.0;
  Eigen::LLT<Eigen::MatrixXd> llt(shifted);
  if (llt.info() != Eigen::Success)
    throw NumericalFailure("projection solve failed on the instrument Gram");
  const double loss = residuals.dot(llt.solve(f * residuals));
  return std::max(loss, 0.0);
}

CvSelection cv_select_scale(const NpivProblem& problem,
                            const std::vector<double>& scale_pool, int folds,
                            std::uint64_t rng_seed) {
  check_shapes(problem);
  if (scale_pool.empty()) throw InvalidInput("scale pool is empty");
  for (double s : scale_pool)
    if (!std::isfinite(s) || s <= 0.0)
      throw InvalidInput("scale pool entries must be positive reals");
  if (folds < 2) throw InvalidInput("cross-validation needs at least 2 folds");
  const Eigen::Index n = problem.hypothesis_features.rows();
  if (n < folds) throw InvalidInput("fewer samples than folds");

  const Eigen::MatrixXd gram_h = gram(problem.hypothesis_features, problem.kernel_h).entries;
  const Eigen::MatrixXd gram_f = gram(problem.instrument_features, problem.kernel_f).entries;
  if (!gram_h.allFinite() || !gram_f.allFinite())
    throw NumericalFailure("Gram matrix has non-finite entries");

  const std::size_t pool_size = scale_pool.size();
  CvSelection out;
  out.mean_losses.assign(pool_size, 0.0);

  if (pool_size > 1) {
    const auto partition = detail::cv_fold_partition(n, folds, rng_seed);
    for (int k = 0; k < folds; ++k) {
      const std::vector<Eigen::Index>& val = partition[k];
      std::vector<Eigen::Index> train;
      train.reserve(n - val.size());
      for (int j = 0; j < folds; ++j)
        if (j != k) train.insert(train.end(), partition[j].begin(), partition[j].end());
      std::sort(train.begin(), train.end());

      const auto n_train = static_cast<std::int64_t>(train.size());
      const auto n_val = static_cast<std::int64_t>(val.size());
      const double vs_train = scaling_varsigma(n_train);
      const double ratio_train = 1.0 / (vs_train * vs_train);
      const double vs_val = scaling_varsigma(n_val);
      const double ratio_val = 1.0 / (vs_val * vs_val);

      const Eigen::MatrixXd h_train = slice(gram_h, train, train);
      const Eigen::MatrixXd f_train = slice(gram_f, train, train);
      const Eigen::MatrixXd cross = slice(gram_h, val, train);
      const Eigen::MatrixXd f_val = slice(gram_f, val, val);
      const Eigen::VectorXd y_train = gather(problem.response, train);
      const Eigen::VectorXd y_val = gather(problem.response, val);

      const Eigen::MatrixXd m_train = detail::projection_matrix(f_train, ratio_train);
      const FitCache cache = build_cache(h_train, m_train, y_train);

      Eigen::MatrixXd shifted = (ratio_val / static_cast<double>(n_val)) * f_val;
      shifted.diagonal().array() += 1.0;
      Eigen::LLT<Eigen::MatrixXd> llt_val(shifted);
      if (llt_val.info() != Eigen::Success)
        throw NumericalFailure("projection solve failed on a validation fold");

      for (std::size_t j = 0; j < pool_size; ++j) {
        const double r = scaling_zeta(scale_pool[j], n_train);
        const Eigen::VectorXd alpha = solve_alpha(cache, r);
        const Eigen::VectorXd eps = y_val - cross * alpha;
        const double loss = eps.dot(llt_val.solve(f_val * eps));
        out.mean_losses[j] += std::max(loss, 0.0);
      }
    }
    for (double& loss : out.mean_losses) loss /= static_cast<double>(folds);
  }

  std::size_t best = 0;
  for (std::size_t j = 1; j < pool_size; ++j) {
    const bool better = out.mean_losses[j] < out.mean_losses[best];
    const bool tie_smaller = out.mean_losses[j] == out.mean_losses[best] &&
                             scale_pool[j] < scale_pool[best];
    if (better || tie_smaller) best = j;
  }
  out.best_scale = scale_pool[best];

  const double vs_n = scaling_varsigma(n);
  HyperParams refit;
  refit.ratio_m_delta2 = 1.0 / (vs_n * vs_n);
  refit.lambda2_mu = scaling_zeta(out.best_scale, n);
  refit.scale = out.best_scale;
  check_hyper(refit);
  if (n < 2) throw InvalidInput("NPIV fit needs at least 2 samples");
  out.model = fit_with_grams(problem, gram_h, gram_f, refit);
  return out;
}

namespace detail {

NpivModel fit_npiv_unchecked(const NpivProblem& problem, const HyperParams& hp) {
  check_shapes(problem);
  check_hyper(hp);
  if (problem.hypothesis_features.rows() < 1)
    throw InvalidInput("NPIV fit needs at least 1 sample");
  const Eigen::MatrixXd gram_h = gram(problem.hypothesis_features, problem.kernel_h).entries;
  const Eigen::MatrixXd gram_f = gram(problem.instrument_features, problem.kernel_f).entries;
  return fit_with_grams(problem, gram_h, gram_f, hp);
}

std::vector<std::vector<Eigen::Index>> cv_fold_partition(Eigen::Index n,
                                                         int folds,
                                                         std::uint64_t rng_seed) {
  if (folds < 2) throw InvalidInput("cross-validation needs at least 2 folds");
  if (n < folds) throw InvalidInput("fewer samples than folds");

  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  Rng rng = Rng::derive(rng_seed, {stream::kCvPartition});
  for (Eigen::Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }

  std::vector<std::vector<Eigen::Index>> partition(static_cast<std::size_t>(folds));
  for (int k = 0; k < folds; ++k) {
    const auto lo = static_cast<std::size_t>((static_cast<std::int64_t>(k) * n) / folds);
    const auto hi = static_cast<std::size_t>((static_cast<std::int64_t>(k + 1) * n) / folds);
    partition[static_cast<std::size_t>(k)].assign(idx.begin() + lo, idx.begin() + hi);
    std::sort(partition[static_cast<std::size_t>(k)].begin(),
              partition[static_cast<std::size_t>(k)].end());
  }
  return partition;
}

Eigen::MatrixXd projection_matrix(const Eigen::MatrixXd& gram, double ratio) {
  if (gram.rows() != gram.cols()) throw InvalidInput("Gram matrix must be square");
  if (!std::isfinite(ratio) || ratio <= 0.0)
    throw InvalidInput("ratio_m_delta2 must be a positive real");
  const Eigen::Index n = gram.rows();
  if (n == 0) return Eigen::MatrixXd(0, 0);

  Eigen::MatrixXd shifted = (ratio / static_cast<double>(n)) * gram;
  shifted.diagonal().array() += 1.0;
  Eigen::LLT<Eigen::MatrixXd> llt(shifted);
  if (llt.info() != Eigen::Success)
    throw NumericalFailure("projection solve failed: shifted Gram not positive definite");
  Eigen::MatrixXd m = llt.solve(gram);
  m = 0.5 * (m + m.transpose()).eval();
  return m;
}

}  // namespace detail

}  // namespace ope
