#pragma once

#include <Eigen/Dense>

#include "ope/kernels.hpp"

namespace ope {

/// Symmetric square root of a PSD matrix via eigendecomposition.
/// Eigenvalues below -tol_psd (tol_psd = 1e-8 x max diagonal entry) raise
/// NotPsd; negatives within the tolerance are clamped to zero.
Eigen::MatrixXd psd_sqrt(const GramMatrix& g);

/// Moore-Penrose pseudo-inverse. Singular values below rel_tol times the
/// largest singular value are treated as zero.
Eigen::MatrixXd pinv(const Eigen::MatrixXd& m, double rel_tol = 1e-10);

}  // namespace ope
