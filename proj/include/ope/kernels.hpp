#pragma once

#include <Eigen/Dense>

#include "ope/errors.hpp"

namespace ope {

enum class KernelFamily { Gaussian };

/// Gaussian kernel spec: k(x, y) = exp(-||x - y||^2 / (2 sigma^2)),
/// so k(x, x) = 1.
struct KernelSpec {
  KernelFamily family = KernelFamily::Gaussian;
  double bandwidth = 1.0;  // length-scale sigma, in input-coordinate units
};

inline KernelSpec gaussian_kernel(double bandwidth) {
  if (!(bandwidth > 0.0)) {
    throw InvalidInput("KernelSpec: bandwidth must be positive");
  }
  return KernelSpec{KernelFamily::Gaussian, bandwidth};
}

/// Symmetric PSD kernel matrix over a set of anchor points.
struct GramMatrix {
  Eigen::MatrixXd entries;

  Eigen::Index anchor_count() const { return entries.rows(); }
};

double kernel_eval(const KernelSpec& spec, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& y);

/// Kernel matrix K[i][j] = k(rows_a[i], rows_b[j]); rows are points.
Eigen::MatrixXd kernel_matrix(const KernelSpec& spec, const Eigen::MatrixXd& a,
                              const Eigen::MatrixXd& b);

/// Gram matrix of one point set (rows of `points`); exactly symmetric with
/// unit diagonal.
GramMatrix gram(const Eigen::MatrixXd& points, const KernelSpec& spec);

/// Median of all pairwise Euclidean distances over distinct index pairs.
/// Even pair counts take the midpoint of the two central order statistics.
double median_heuristic(const Eigen::MatrixXd& points);

}  // namespace ope
