#ifndef LFL_CONFIG_HPP
#define LFL_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "lfl/classifiers.hpp"
#include "lfl/generator.hpp"
#include "lfl/inversion.hpp"
#include "lfl/projector.hpp"
#include "lfl/vq.hpp"
#include "lfl/worldsim.hpp"

namespace lfl {

// One experiment, one file: every knob of the pipeline lives here, unknown
// keys are rejected, and the canonical serialization is hashed to stamp every
// artifact the run produces.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "out";

  GeneratorConfig generator;

  struct Dataset {
    Index n_per_class = 700;
    double noise_sigma = 0.02;
    double train_fraction = 0.715;
    std::uint64_t seed = 2;
    // Benchmark default: style composites, the forgery the latent projectors
    // are built to expose; the splice simulator stays selectable per run.
    ForgeryParams forgery{ForgeryParams::Method::style_swap, 0.25, 0.05, {2, 3}};
    PerturbationParams perturb;
  } dataset;

  struct Projectors {
    std::vector<ProjectorKind> kinds = {ProjectorKind::pca, ProjectorKind::vq,
                                        ProjectorKind::gan_inversion};
    Index pca_d_prime = 64;
    Index pca_batch = 256;
    VqConfig vq;
    Index vq_epochs = 6;
    InversionConfig inversion{.steps = 150};
    bool encoder_enabled = false;
    Index encoder_pairs = 256;
    Index encoder_epochs = 30;
  } projectors;

  struct Classifiers {
    std::vector<ClassifierKind> kinds = {ClassifierKind::random_forest,
                                         ClassifierKind::logistic, ClassifierKind::mlp2,
                                         ClassifierKind::mlp5};
    Index forest_trees = 200;
    TrainConfig train;
  } classifiers;

  struct Decision {
    double pi_m = 0.5;
  } decision;

  struct Analysis {
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
    std::vector<Index> ablation_sizes = {50, 200, 800};
    ProjectorKind ablation_projector = ProjectorKind::pca;
    ClassifierKind ablation_classifier = ClassifierKind::random_forest;
    ClassifierKind channel_classifier = ClassifierKind::random_forest;
    Index reconstruction_n = 250;
  } analysis;

  void validate() const;  // throws Error naming the offending key path
  std::string canonical_json() const;
  std::uint64_t hash() const;
};

// Parses a JSON config file; any key not in the schema is an error. Overrides
// are dotted paths ("projectors.inversion.steps=50") applied before
// validation; values parse as JSON scalars, falling back to strings.
ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides = {});
ExperimentConfig parse_config(const std::string& json_text,
                              const std::vector<std::string>& overrides = {});

}  // namespace lfl

#endif
