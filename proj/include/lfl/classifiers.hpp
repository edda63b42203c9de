#ifndef LFL_CLASSIFIERS_HPP
#define LFL_CLASSIFIERS_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "lfl/graph.hpp"
#include "lfl/serialize.hpp"

namespace lfl {

enum class ClassifierKind { random_forest, logistic, mlp2, mlp5 };

std::string classifier_kind_name(ClassifierKind k);
ClassifierKind classifier_kind_from_name(const std::string& name);

// Per-feature zero-mean unit-variance transform fitted on training data;
// constant features pass through unscaled.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd inv_std;

  static Standardizer fit(const MatrixRM& x);
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
  MatrixRM apply_rows(const MatrixRM& x) const;
};

// Uniform scoring interface: score(x) estimates P(fake | x) in [0, 1].
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual ClassifierKind kind() const = 0;
  virtual Index input_dim() const = 0;
  virtual double score(const Eigen::VectorXd& x) const = 0;
  virtual TensorMap to_tensors() const = 0;
};

struct ForestConfig {
  Index n_estimators = 200;  // paper-scale runs use 1500 via config
  std::uint64_t seed = 0;
};

// Bootstrap-aggregated Gini trees: no depth limit, minimum 2 samples to
// split, midpoint thresholds, sqrt(d) random features per node. Scoring
// averages leaf fake-probabilities over trees.
class RandomForestModel : public Classifier {
 public:
  struct Node {
    Index feature = -1;      // -1 marks a leaf
    double threshold = 0.0;  // go left when value <= threshold
    Index left = -1;
    Index right = -1;
    double p_fake = 0.0;
  };

  ClassifierKind kind() const override { return ClassifierKind::random_forest; }
  Index input_dim() const override { return input_dim_; }
  double score(const Eigen::VectorXd& x) const override;
  TensorMap to_tensors() const override;
  static RandomForestModel from_tensors(const TensorMap& t);

  Index n_trees() const { return static_cast<Index>(trees_.size()); }

  friend RandomForestModel train_random_forest(const MatrixRM&, const std::vector<int>&,
                                               const ForestConfig&);

 private:
  Index input_dim_ = 0;
  std::vector<std::vector<Node>> trees_;
};

RandomForestModel train_random_forest(const MatrixRM& x, const std::vector<int>& y,
                                      const ForestConfig& cfg);

struct TrainConfig {
  double learning_rate = 5e-4;
  Index epochs = 200;
  Index batch_size = 32;
  Index patience = 20;         // early stop: epochs without validation improvement
  double val_fraction = 0.1;   // training tail reserved for early stopping
  std::uint64_t seed = 0;
};

// Zero-initialized logistic regression trained by SGD on binary cross
// entropy, over standardized features.
class LogisticModel : public Classifier {
 public:
  ClassifierKind kind() const override { return ClassifierKind::logistic; }
  Index input_dim() const override { return weights.size(); }
  double score(const Eigen::VectorXd& x) const override;
  TensorMap to_tensors() const override;
  static LogisticModel from_tensors(const TensorMap& t);

  Standardizer std_;
  Eigen::VectorXd weights;
  double bias = 0.0;
};

LogisticModel train_logistic(const MatrixRM& x, const std::vector<int>& y,
                             const TrainConfig& cfg);

enum class MlpArch { mlp2, mlp5 };  // hidden 512 / hidden 2048,512,512,512

// Fully-connected relu network with a single sigmoid output, trained by SGD
// on binary cross entropy through the autodiff graph.
class MlpModel : public Classifier {
 public:
  ClassifierKind kind() const override {
    return arch_ == MlpArch::mlp2 ? ClassifierKind::mlp2 : ClassifierKind::mlp5;
  }
  Index input_dim() const override { return std_.mean.size(); }
  double score(const Eigen::VectorXd& x) const override;
  TensorMap to_tensors() const override;
  static MlpModel from_tensors(const TensorMap& t);

  static std::vector<Index> hidden_sizes(MlpArch arch);

  friend MlpModel train_mlp(const MatrixRM&, const std::vector<int>&, MlpArch,
                            const TrainConfig&);

 private:
  void build_graph();

  MlpArch arch_ = MlpArch::mlp2;
  Standardizer std_;
  TensorMap params_;                  // fc{i}/w, fc{i}/b
  std::shared_ptr<Graph> score_graph_;  // input "x" (1 x d) -> output "p"
};

MlpModel train_mlp(const MatrixRM& x, const std::vector<int>& y, MlpArch arch,
                   const TrainConfig& cfg);

// Factory used by the benchmark grid.
std::unique_ptr<Classifier> train_classifier(ClassifierKind kind, const MatrixRM& x,
                                             const std::vector<int>& y, std::uint64_t seed,
                                             const TrainConfig& base, Index forest_trees = 200);

}  // namespace lfl

#endif
