#ifndef LFL_PCA_HPP
#define LFL_PCA_HPP

#include <vector>

#include "lfl/tensor.hpp"

namespace lfl {

// Linear projector fitted by incremental SVD merging. A single batch holding
// all the data reproduces batch PCA exactly.
struct PcaModel {
  Eigen::VectorXd mean;            // D
  MatrixRM components;             // d' x D, orthonormal rows
  Eigen::VectorXd explained_variance;  // d', non-increasing
  Index n_seen = 0;

  Index dim() const { return mean.size(); }
  Index d_prime() const { return components.rows(); }

  Eigen::VectorXd project(const Eigen::VectorXd& x) const;
  Eigen::VectorXd reconstruct(const Eigen::VectorXd& code) const;  // clipped to [0,1]
};

// batches: each row = one flattened sample. Total samples must be >= d_prime.
PcaModel pca_fit_incremental(const std::vector<MatrixRM>& batches, Index d_prime);

// Convenience: one container of samples split into fixed-size batches.
PcaModel pca_fit_incremental(const MatrixRM& data, Index d_prime, Index batch_size);

}  // namespace lfl

#endif
