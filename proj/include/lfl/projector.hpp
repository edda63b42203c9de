#ifndef LFL_PROJECTOR_HPP
#define LFL_PROJECTOR_HPP

#include <memory>
#include <string>

#include "lfl/inversion.hpp"
#include "lfl/pca.hpp"
#include "lfl/vq.hpp"

namespace lfl {

enum class ProjectorKind { pca, vq, gan_inversion };

std::string projector_kind_name(ProjectorKind k);

// One face of the three dimensionality reducers: project an image to a
// low-dimensional code, reconstruct an image from a code, and expose the code
// as a flat classifier feature vector.
class Projector {
 public:
  virtual ~Projector() = default;
  virtual ProjectorKind kind() const = 0;
  virtual Shape code_shape() const = 0;
  virtual Tensor project(const Tensor& image) const = 0;
  virtual Tensor reconstruct(const Tensor& code) const = 0;
  // Flat feature vector for the classifiers (VQ indices are scaled to [0,1]).
  virtual Eigen::VectorXd code_features(const Tensor& code) const;
  virtual void save(const std::string& path, std::uint64_t config_hash) const = 0;
};

class PcaProjector : public Projector {
 public:
  explicit PcaProjector(PcaModel model) : model_(std::move(model)) {}
  ProjectorKind kind() const override { return ProjectorKind::pca; }
  Shape code_shape() const override { return {model_.d_prime()}; }
  Tensor project(const Tensor& image) const override;
  Tensor reconstruct(const Tensor& code) const override;
  void save(const std::string& path, std::uint64_t config_hash) const override;
  static PcaProjector load(const std::string& path, std::uint64_t* hash_out = nullptr);
  const PcaModel& model() const { return model_; }

 private:
  PcaModel model_;
};

class VqProjector : public Projector {
 public:
  explicit VqProjector(VqModel model) : model_(std::move(model)) {}
  ProjectorKind kind() const override { return ProjectorKind::vq; }
  Shape code_shape() const override { return {VqModel::kGrid, VqModel::kGrid}; }
  Tensor project(const Tensor& image) const override;
  Tensor reconstruct(const Tensor& code) const override;
  Eigen::VectorXd code_features(const Tensor& code) const override;
  void save(const std::string& path, std::uint64_t config_hash) const override;
  static VqProjector load(const std::string& path, std::uint64_t* hash_out = nullptr);
  const VqModel& model() const { return model_; }

 private:
  VqModel model_;
};

class GanProjector : public Projector {
 public:
  GanProjector(std::shared_ptr<const GeneratorModel> gen,
               std::shared_ptr<const FeatureExtractor> fe, InversionConfig cfg,
               std::shared_ptr<const EncoderModel> encoder = nullptr);
  ProjectorKind kind() const override { return ProjectorKind::gan_inversion; }
  Shape code_shape() const override { return gen_->code_shape(); }
  Tensor project(const Tensor& image) const override;
  Tensor reconstruct(const Tensor& code) const override;
  void save(const std::string& path, std::uint64_t config_hash) const override;
  const InversionEngine& engine() const { return engine_; }
  const InversionConfig& inversion_config() const { return cfg_; }

 private:
  std::shared_ptr<const GeneratorModel> gen_;
  std::shared_ptr<const FeatureExtractor> fe_;
  InversionConfig cfg_;
  std::shared_ptr<const EncoderModel> encoder_;
  InversionEngine engine_;
};

}  // namespace lfl

#endif
