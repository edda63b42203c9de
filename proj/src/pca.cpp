#include "lfl/pca.hpp"

#include <Eigen/SVD>
#include <cmath>

namespace lfl {

namespace {

// Deterministic sign: largest-magnitude entry of each component positive.
void fix_signs(MatrixRM& components) {
  for (Index r = 0; r < components.rows(); ++r) {
    Index imax = 0;
    components.row(r).cwiseAbs().maxCoeff(&imax);
    if (components(r, imax) < 0.0) components.row(r) = -components.row(r);
  }
}

}  // namespace

Eigen::VectorXd PcaModel::project(const Eigen::VectorXd& x) const {
  if (x.size() != dim())
    throw Error("pca: expected dimension " + std::to_string(dim()) + ", got " +
                std::to_string(x.size()));
  return components * (x - mean);
}

Eigen::VectorXd PcaModel::reconstruct(const Eigen::VectorXd& code) const {
  if (code.size() != d_prime())
    throw Error("pca: code length " + std::to_string(code.size()) + " != " +
                std::to_string(d_prime()));
  Eigen::VectorXd x = mean + components.transpose() * code;
  return x.cwiseMin(1.0).cwiseMax(0.0);
}

PcaModel pca_fit_incremental(const std::vector<MatrixRM>& batches, Index d_prime) {
  if (batches.empty()) throw Error("pca: no batches");
  Index total = 0;
  Index dim = batches.front().cols();
  for (const auto& b : batches) {
    if (b.cols() != dim) throw Error("pca: inconsistent batch dimensions");
    total += b.rows();
  }
  if (total < d_prime)
    throw Error("pca: need at least d_prime=" + std::to_string(d_prime) + " samples, got " +
                std::to_string(total));

  Index n = 0;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd singular;  // retained singular values
  MatrixRM components;       // retained right singular vectors (rows)
  for (const auto& batch : batches) {
    Index m = batch.rows();
    if (m == 0) continue;
    Eigen::VectorXd bmean = batch.colwise().mean();
    Eigen::VectorXd new_mean =
        (static_cast<double>(n) * mean + static_cast<double>(m) * bmean) /
        static_cast<double>(n + m);
    MatrixRM stack;
    if (n == 0) {
      stack = batch.rowwise() - bmean.transpose();
    } else {
      // previous subspace scaled by its singular values, the new centered
      // batch, and the mean-shift correction row
      stack.resize(components.rows() + m + 1, dim);
      stack.topRows(components.rows()) = singular.asDiagonal() * components;
      stack.middleRows(components.rows(), m) = batch.rowwise() - bmean.transpose();
      double corr = std::sqrt(static_cast<double>(n) * static_cast<double>(m) /
                              static_cast<double>(n + m));
      stack.bottomRows(1) = corr * (mean - bmean).transpose();
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svd(stack, Eigen::ComputeThinV);
    Index keep = std::min<Index>(d_prime, svd.singularValues().size());
    singular = svd.singularValues().head(keep);
    components = svd.matrixV().leftCols(keep).transpose();
    mean = new_mean;
    n += m;
  }
  PcaModel model;
  model.mean = mean;
  model.components = components;
  fix_signs(model.components);
  model.explained_variance = singular.array().square() / static_cast<double>(std::max<Index>(1, n - 1));
  model.n_seen = n;
  return model;
}

PcaModel pca_fit_incremental(const MatrixRM& data, Index d_prime, Index batch_size) {
  if (batch_size <= 0) throw Error("pca: batch_size must be positive");
  std::vector<MatrixRM> batches;
  for (Index r = 0; r < data.rows(); r += batch_size)
    batches.push_back(data.middleRows(r, std::min(batch_size, data.rows() - r)));
  return pca_fit_incremental(batches, d_prime);
}

}  // namespace lfl
