#ifndef LFL_PERCEPTUAL_HPP
#define LFL_PERCEPTUAL_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <utility>

#include "lfl/graph.hpp"

namespace lfl {

// Frozen random-feature pyramid standing in for a pretrained perceptual net:
// two convolution stages (3->16, 16->32) with relu, factor-2 average pooling
// between them, and per-pixel unit channel normalization per stage. The
// distance is the sum over stages of the mean squared difference of the
// normalized features.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(std::uint64_t seed = 7);

  double distance(const Tensor& x, const Tensor& y) const;

  // Normalized stage features of one image, for precomputing fixed targets.
  std::pair<Tensor, Tensor> features(const Tensor& x) const;

  // Appends both stages for an in-graph image node; returns the two
  // normalized feature nodes.
  std::pair<int, int> append_features(Graph& g, int image_node) const;
  // Appends the distance between an in-graph image and fixed target features.
  int append_distance_to(Graph& g, int image_node, const Tensor& f1_target,
                         const Tensor& f2_target) const;

 private:
  Tensor k1_, b1_, k2_, b2_;
  std::shared_ptr<Graph> dist_graph_;  // inputs "x", "y" -> output "dist"
  std::shared_ptr<Graph> feat_graph_;  // input "x" -> outputs "f1", "f2"
};

struct BenchmarkStats {
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  Index n = 0;
};

// Mean perceptual round-trip distance with a normal-approximation 95% CI
// (+-1.96 s/sqrt(n)) over the first n images.
BenchmarkStats reconstruction_benchmark(const FeatureExtractor& fe,
                                        const std::function<Tensor(const Tensor&)>& roundtrip,
                                        const std::vector<Tensor>& data, Index n);

}  // namespace lfl

#endif
