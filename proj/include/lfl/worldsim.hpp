#ifndef LFL_WORLDSIM_HPP
#define LFL_WORLDSIM_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "lfl/generator.hpp"

namespace lfl {

enum class Label { genuine, fake };

struct LabeledImage {
  Tensor image;
  Label label = Label::genuine;
  Index source_id = 0;
};

struct ForgeryParams {
  enum class Method { splice, style_swap };
  Method method = Method::splice;
  double mask_radius = 0.25;  // fraction of image width, (0, 0.5]
  double feather = 0.05;      // fraction of image width, [0, 0.25]
  std::vector<Index> swap_channels;  // style_swap only

  void validate(Index channels) const;
};

struct PerturbationParams {
  double noise_sigma = 0.0;
  int compression_quality = 100;  // [1, 100]; 100 is lossless

  void validate() const;
};

// n generator samples plus sensor noise, labels genuine,
// source_id = id_offset + i.
std::vector<LabeledImage> generate_genuine(const GeneratorModel& g, Index n, double noise_sigma,
                                           std::uint64_t seed, Index id_offset = 0);

// n forged composites, labels fake, source_id = id of the base identity.
std::vector<LabeledImage> generate_fake(const GeneratorModel& g, Index n,
                                        const ForgeryParams& params, double noise_sigma,
                                        std::uint64_t seed, Index id_offset = 0);

// Gaussian noise followed by 8x8 block-DCT quantization (step scaled by
// 101 - quality; quality 100 bypasses the transform entirely), clipped to [0,1].
Tensor perturb(const Tensor& image, const PerturbationParams& params, std::uint64_t seed);

// Source-disjoint split: every image of one source_id lands on one side.
std::pair<std::vector<LabeledImage>, std::vector<LabeledImage>> split_dataset(
    const std::vector<LabeledImage>& data, double train_fraction, std::uint64_t seed);

// Dataset persistence: manifest (one line per image: path, label, source_id,
// params hash) plus images in the tensor container, packed by default.
void save_dataset(const std::string& dir, const std::vector<LabeledImage>& data,
                  std::uint64_t config_hash, const std::string& params_hash, bool packed = true);
std::vector<LabeledImage> load_dataset(const std::string& dir,
                                       std::uint64_t* config_hash_out = nullptr);

}  // namespace lfl

#endif
