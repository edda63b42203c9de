#ifndef LFL_GENERATOR_HPP
#define LFL_GENERATOR_HPP

#include <cstdint>
#include <memory>
#include <string>

#include "lfl/graph.hpp"
#include "lfl/rng.hpp"

namespace lfl {

struct GeneratorConfig {
  Index d_z = 32;     // seed noise dimension
  Index d = 32;       // style code dimension per channel
  Index channels = 6; // modulation sites in the synthesis chain
  Index fmaps = 8;    // feature maps per synthesis block
  std::uint64_t seed = 1;
};

// Two-stage style generator: a fully-connected mapping network z -> w and a
// modulated synthesis network turning a per-channel code into a 3x32x32 image.
// Weights are sampled from the seed and spectrally scaled (largest singular
// value of each layer brought to ~1); no adversarial training happens here.
class GeneratorModel {
 public:
  explicit GeneratorModel(GeneratorConfig cfg);

  const GeneratorConfig& config() const { return cfg_; }
  const TensorMap& params() const { return params_; }

  Tensor sample_z(std::uint64_t rng_seed) const;

  // Mapping network output replicated across all channels (the un-mixed code).
  Tensor map(const Tensor& z) const;
  Tensor synthesize(const Tensor& w) const;
  // Channels [0, crossover) from w1, the rest from w2.
  Tensor style_mix(const Tensor& w1, const Tensor& w2, Index crossover) const;

  // Mean of 1024 mapped samples; the default inversion initialization.
  const Tensor& mean_w() const { return mean_w_; }

  // Appends the synthesis network to an existing graph, returning the image
  // node. With params_as_inputs the weights become named graph inputs
  // (prefix + name), which is what gradient checking needs; otherwise they are
  // baked in as constants for speed.
  int append_synthesis(Graph& g, int w_node, bool params_as_inputs = false,
                       const std::string& prefix = "gen/") const;
  int append_synthesis_logits(Graph& g, int w_node, bool params_as_inputs = false,
                              const std::string& prefix = "gen/") const;
  int append_mapping(Graph& g, int z_node, bool params_as_inputs = false,
                     const std::string& prefix = "gen/") const;

  const Graph& synthesis_graph() const { return *synth_graph_; }
  const Graph& mapping_graph() const { return *map_graph_; }

  static constexpr Index kImageSize = 32;
  Shape image_shape() const { return {3, kImageSize, kImageSize}; }
  Shape code_shape() const { return {cfg_.channels, cfg_.d}; }

 private:
  GeneratorConfig cfg_;
  TensorMap params_;
  Tensor mean_w_;
  std::shared_ptr<Graph> map_graph_;   // input "z" (1 x d_z) -> output "w" (1 x d)
  std::shared_ptr<Graph> synth_graph_; // input "w" (C x d) -> output "image"
};

}  // namespace lfl

#endif
