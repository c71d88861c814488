#include "ope/linalg.hpp"

#include <cmath>

#include "ope/errors.hpp"

namespace ope {

Eigen::MatrixXd psd_sqrt(const GramMatrix& g) {
  const Eigen::MatrixXd& m = g.entries;
  if (m.rows() != m.cols()) {
    throw InvalidInput("psd_sqrt: matrix must be square");
  }
  const double max_abs = m.size() > 0 ? m.cwiseAbs().maxCoeff() : 0.0;
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(max_abs, 1.0)) {
    throw InvalidInput("psd_sqrt: matrix must be symmetric");
  }
  const double tol_psd = 1e-8 * std::max(m.diagonal().maxCoeff(), 0.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) {
    throw NumericalFailure("psd_sqrt: eigendecomposition failed");
  }
  Eigen::VectorXd evals = es.eigenvalues();
  if (evals.minCoeff() < -tol_psd) {
    throw NotPsd("psd_sqrt: matrix has eigenvalue below -tol_psd");
  }
  evals = evals.cwiseMax(0.0).cwiseSqrt();
  Eigen::MatrixXd s =
      es.eigenvectors() * evals.asDiagonal() * es.eigenvectors().transpose();
  return ((s + s.transpose()) / 2.0).eval();
}

Eigen::MatrixXd pinv(const Eigen::MatrixXd& m, double rel_tol) {
  if (!m.allFinite()) {
    throw InvalidInput("pinv: matrix has non-finite entries");
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m,
                                     Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double cutoff = sv.size() > 0 ? rel_tol * sv(0) : 0.0;
  Eigen::VectorXd inv_sv = Eigen::VectorXd::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff && sv(i) > 0.0) inv_sv(i) = 1.0 / sv(i);
  }
  return svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
}

}  // namespace ope
