#ifndef LFL_VQ_HPP
#define LFL_VQ_HPP

#include <cstdint>
#include <memory>
#include <vector>

#include "lfl/graph.hpp"

namespace lfl {

struct VqConfig {
  Index codebook_size = 64;  // K
  Index code_dim = 8;        // embedding dimension per grid cell
  double learning_rate = 0.05;
  double momentum = 0.9;
  double commitment_beta = 0.25;
  double ema_decay = 0.99;
};

// Single-level vector-quantized autoencoder over 3x32x32 images: a small conv
// encoder to an 8x8 grid of embeddings, nearest-codebook quantization with a
// straight-through gradient, an EMA-updated codebook, and a mirror decoder.
class VqModel {
 public:
  static constexpr Index kGrid = 8;

  VqModel(VqConfig cfg, std::uint64_t seed);

  const VqConfig& config() const { return cfg_; }
  const Tensor& codebook() const { return codebook_; }
  const TensorMap& params() const { return params_; }

  Tensor latents(const Tensor& image) const;        // code_dim x 8 x 8
  Index nearest(const double* vec) const;           // codebook index
  Tensor encode_indices(const Tensor& image) const; // 8 x 8 integer-valued
  Tensor decode_indices(const Tensor& indices) const;

  // One SGD pass over the images; returns the mean reconstruction MSE.
  double train_epoch(const std::vector<const Tensor*>& images, std::uint64_t epoch_seed);
  // Deterministic codebook seeding from the first images' latents.
  void init_codebook(const std::vector<const Tensor*>& images);

  void load_params(TensorMap params, Tensor codebook);
  void rebuild_graphs();

 private:
  Tensor quantized(const Tensor& ze, std::vector<Index>* idx_out) const;

  VqConfig cfg_;
  TensorMap params_;
  Tensor codebook_;             // K x code_dim
  Eigen::ArrayXd ema_counts_;   // K
  MatrixRM ema_sums_;           // K x code_dim
  TensorMap velocity_;
  std::shared_ptr<Graph> enc_train_;  // inputs x, u + params -> ze, surrogate
  std::shared_ptr<Graph> dec_train_;  // inputs zq, x + params -> recon, loss
  std::shared_ptr<Graph> enc_fast_;   // x -> ze (params baked)
  std::shared_ptr<Graph> dec_fast_;   // zq -> recon (params baked)
  bool fast_dirty_ = true;
};

struct VqTrainReport {
  std::vector<double> epoch_mse;
};

VqModel vq_train(const std::vector<const Tensor*>& images, Index epochs, std::uint64_t seed,
                 VqConfig cfg = {}, VqTrainReport* report = nullptr);

}  // namespace lfl

#endif
