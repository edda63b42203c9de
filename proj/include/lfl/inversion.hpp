#ifndef LFL_INVERSION_HPP
#define LFL_INVERSION_HPP

#include <cstdint>
#include <memory>
#include <vector>

#include "lfl/generator.hpp"
#include "lfl/perceptual.hpp"

namespace lfl {

struct InversionConfig {
  Index steps = 100;
  double step_size = 0.1;
  double alpha = 1.0;  // weight of the pixel term
  enum class Init { mean_w, encoder, random };
  Init init = Init::mean_w;
  double momentum = 0.9;
  Index max_halvings = 5;
  // Weight of the cross-channel consensus prior: mean squared distance of each
  // code row to the per-coordinate median row. Codes produced by the mapping
  // network replicate one row, so the prior is inactive at genuine optima; it
  // only bites on rows that disagree with the channel consensus.
  double consistency = 0.02;
  // Optional per-channel refinement pass after the joint fit: each row is
  // re-optimized alone for this many steps, starting from the broadcast
  // channel consensus with the other rows frozen there. 0 disables the pass.
  Index refine_steps = 0;
  std::uint64_t seed = 0;  // used by random init only

  void validate() const;
};

// Small conv network mapping an image to a C x d style code; used as the
// optional inversion initializer.
class EncoderModel {
 public:
  EncoderModel(const GeneratorModel& g, std::uint64_t seed);

  Tensor encode(const Tensor& image) const;
  const TensorMap& params() const { return params_; }
  void load_params(TensorMap params);

  double train_epoch(const std::vector<std::pair<const Tensor*, const Tensor*>>& pairs,
                     double lr, std::uint64_t epoch_seed);
  void rebuild_fast_graph();

 private:
  Index channels_, d_;
  TensorMap params_;
  TensorMap velocity_;
  std::shared_ptr<Graph> train_graph_;  // inputs x, target + params -> loss
  std::shared_ptr<Graph> fast_graph_;   // x -> code (params baked)
};

// Regression on (G(w), w) pairs sampled from the generator.
EncoderModel train_encoder(const GeneratorModel& g, Index n_pairs, Index epochs,
                           std::uint64_t seed, double lr = 0.02,
                           std::vector<double>* epoch_mse = nullptr);

struct InversionResult {
  Tensor code;
  double final_loss = 0.0;
  double final_perceptual = 0.0;
  double init_perceptual = 0.0;
  std::vector<double> loss_history;  // non-increasing under step-halving
};

// Momentum gradient descent on L(w) = L_p(G(w), x) + alpha * mean((G(w)-x)^2),
// all channels optimized independently. The loss graph is built once; each
// invert() call gets its own executor, so one engine is shareable.
class InversionEngine {
 public:
  InversionEngine(const GeneratorModel& g, const FeatureExtractor& fe, double alpha = 1.0);

  InversionResult invert(const Tensor& x, const InversionConfig& cfg,
                         const EncoderModel* encoder = nullptr) const;

  // Channel-masked refinement: re-fit each code row alone (others frozen at the
  // broadcast channel consensus of `code`) for cfg.refine_steps steps and
  // return the per-channel results stacked into a C x d code.
  Tensor refine_channels(const Tensor& x, const Tensor& code, const InversionConfig& cfg) const;

  const GeneratorModel& generator() const { return gen_; }

 private:
  const GeneratorModel& gen_;
  const FeatureExtractor& fe_;
  double alpha_;
  std::shared_ptr<Graph> loss_graph_;  // inputs w, x, f1x, f2x -> loss, percep
  Shape f1_shape_, f2_shape_;
};

}  // namespace lfl

#endif
