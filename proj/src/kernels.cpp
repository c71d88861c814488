#include "ope/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace ope {

namespace {

void require_gaussian(const KernelSpec& spec) {
  if (spec.family != KernelFamily::Gaussian) {
    throw InvalidInput("kernel: unsupported family");
  }
  if (!(spec.bandwidth > 0.0)) {
    throw InvalidInput("kernel: bandwidth must be positive");
  }
}

}  // namespace

double kernel_eval(const KernelSpec& spec, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& y) {
  require_gaussian(spec);
  if (x.size() != y.size()) {
    throw InvalidInput("kernel_eval: dimension mismatch");
  }
  const double sq = (x - y).squaredNorm();
  return std::exp(-sq / (2.0 * spec.bandwidth * spec.bandwidth));
}

Eigen::MatrixXd kernel_matrix(const KernelSpec& spec, const Eigen::MatrixXd& a,
                              const Eigen::MatrixXd& b) {
  require_gaussian(spec);
  if (a.cols() != b.cols()) {
    throw InvalidInput("kernel_matrix: dimension mismatch");
  }
  const Eigen::VectorXd na = a.rowwise().squaredNorm();
  const Eigen::VectorXd nb = b.rowwise().squaredNorm();
  Eigen::MatrixXd sq = na.replicate(1, b.rows()) +
                       nb.transpose().replicate(a.rows(), 1) -
                       2.0 * a * b.transpose();
  // Cancellation can leave tiny negatives; distances are nonnegative.
  sq = sq.cwiseMax(0.0);
  return (-sq / (2.0 * spec.bandwidth * spec.bandwidth)).array().exp();
}

GramMatrix gram(const Eigen::MatrixXd& points, const KernelSpec& spec) {
  if (points.rows() == 0) {
    throw InvalidInput("gram: empty point list");
  }
  Eigen::MatrixXd k = kernel_matrix(spec, points, points);
  k = ((k + k.transpose()) / 2.0).eval();
  k.diagonal().setOnes();
  return GramMatrix{std::move(k)};
}

double median_heuristic(const Eigen::MatrixXd& points) {
  const Eigen::Index n = points.rows();
  if (n < 2) {
    throw InvalidInput("median_heuristic: need at least 2 points");
  }
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      dists.push_back((points.row(i) - points.row(j)).norm());
    }
  }
  const std::size_t m = dists.size();
  const std::size_t mid = m / 2;
  std::nth_element(dists.begin(), dists.begin() + mid, dists.end());
  double med = dists[mid];
  if (m % 2 == 0) {
    const double lower =
        *std::max_element(dists.begin(), dists.begin() + mid);
    med = (lower + med) / 2.0;
  }
  // A zero median cannot serve as a bandwidth.
  if (!(med > 0.0)) {
    throw DegenerateData("median_heuristic: median pairwise distance is zero");
  }
  return med;
}

}  // namespace ope
