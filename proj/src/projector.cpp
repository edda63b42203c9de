#include "lfl/projector.hpp"

#include "lfl/serialize.hpp"

namespace lfl {

std::string projector_kind_name(ProjectorKind k) {
  switch (k) {
    case ProjectorKind::pca: return "pca";
    case ProjectorKind::vq: return "vq";
    case ProjectorKind::gan_inversion: return "gan";
  }
  return "?";
}

Eigen::VectorXd Projector::code_features(const Tensor& code) const {
  return Eigen::Map<const Eigen::VectorXd>(code.data.data(), code.size());
}

// --------------------------------------------------------------------------
// PCA

Tensor PcaProjector::project(const Tensor& image) const {
  if (image.size() != model_.dim())
    throw Error("pca projector: image has " + std::to_string(image.size()) +
                " values, model expects " + std::to_string(model_.dim()));
  Eigen::VectorXd code = model_.project(Eigen::Map<const Eigen::VectorXd>(image.data.data(), image.size()));
  Tensor out({model_.d_prime()});
  Eigen::Map<Eigen::VectorXd>(out.data.data(), out.size()) = code;
  return out;
}

Tensor PcaProjector::reconstruct(const Tensor& code) const {
  if (code.shape != code_shape())
    throw Error("pca projector: code must be " + shape_str(code_shape()) + ", got " +
                shape_str(code.shape));
  Eigen::VectorXd x = model_.reconstruct(Eigen::Map<const Eigen::VectorXd>(code.data.data(), code.size()));
  Tensor out({3, 32, 32});
  Eigen::Map<Eigen::VectorXd>(out.data.data(), out.size()) = x;
  return out;
}

void PcaProjector::save(const std::string& path, std::uint64_t config_hash) const {
  TensorMap t;
  t["kind"] = Tensor::scalar(0.0);
  Tensor mean({model_.dim()});
  Eigen::Map<Eigen::VectorXd>(mean.data.data(), mean.size()) = model_.mean;
  t["mean"] = std::move(mean);
  Tensor comp({model_.d_prime(), model_.dim()});
  MapMat(comp.data.data(), comp.shape[0], comp.shape[1]) = model_.components;
  t["components"] = std::move(comp);
  Tensor ev({model_.d_prime()});
  Eigen::Map<Eigen::VectorXd>(ev.data.data(), ev.size()) = model_.explained_variance;
  t["explained_variance"] = std::move(ev);
  t["n_seen"] = Tensor::scalar(static_cast<double>(model_.n_seen));
  stamp_hash(t, config_hash);
  save_tensors(path, t);
}

PcaProjector PcaProjector::load(const std::string& path, std::uint64_t* hash_out) {
  TensorMap t = load_tensors(path);
  if (t.at("kind").value() != 0.0) throw Error("pca projector: wrong kind tag in " + path);
  if (hash_out) *hash_out = read_stamp(t);
  PcaModel m;
  const Tensor& mean = t.at("mean");
  m.mean = Eigen::Map<const Eigen::VectorXd>(mean.data.data(), mean.size());
  const Tensor& comp = t.at("components");
  m.components = ConstMapMat(comp.data.data(), comp.shape[0], comp.shape[1]);
  const Tensor& ev = t.at("explained_variance");
  m.explained_variance = Eigen::Map<const Eigen::VectorXd>(ev.data.data(), ev.size());
  m.n_seen = static_cast<Index>(t.at("n_seen").value());
  return PcaProjector(std::move(m));
}

// --------------------------------------------------------------------------
// VQ

Tensor VqProjector::project(const Tensor& image) const {
  if (image.shape != Shape{3, 32, 32})
    throw Error("vq projector: image must be [3x32x32], got " + shape_str(image.shape));
  return model_.encode_indices(image);
}

Tensor VqProjector::reconstruct(const Tensor& code) const { return model_.decode_indices(code); }

Eigen::VectorXd VqProjector::code_features(const Tensor& code) const {
  // raw indices scaled to [0,1]; deliberately not one-hot encoded
  Eigen::VectorXd f = Eigen::Map<const Eigen::VectorXd>(code.data.data(), code.size());
  return f / static_cast<double>(model_.config().codebook_size);
}

void VqProjector::save(const std::string& path, std::uint64_t config_hash) const {
  TensorMap t = model_.params();
  t["kind"] = Tensor::scalar(1.0);
  t["codebook"] = model_.codebook();
  t["cfg/codebook_size"] = Tensor::scalar(static_cast<double>(model_.config().codebook_size));
  t["cfg/code_dim"] = Tensor::scalar(static_cast<double>(model_.config().code_dim));
  stamp_hash(t, config_hash);
  save_tensors(path, t);
}

VqProjector VqProjector::load(const std::string& path, std::uint64_t* hash_out) {
  TensorMap t = load_tensors(path);
  if (t.at("kind").value() != 1.0) throw Error("vq projector: wrong kind tag in " + path);
  if (hash_out) *hash_out = read_stamp(t);
  VqConfig cfg;
  cfg.codebook_size = static_cast<Index>(t.at("cfg/codebook_size").value());
  cfg.code_dim = static_cast<Index>(t.at("cfg/code_dim").value());
  Tensor codebook = t.at("codebook");
  TensorMap params;
  for (auto& [name, tensor] : t)
    if (name.rfind("enc/", 0) == 0 || name.rfind("dec/", 0) == 0) params[name] = std::move(tensor);
  VqModel m(cfg, 0);
  m.load_params(std::move(params), std::move(codebook));
  return VqProjector(std::move(m));
}

// --------------------------------------------------------------------------
// GAN inversion

GanProjector::GanProjector(std::shared_ptr<const GeneratorModel> gen,
                           std::shared_ptr<const FeatureExtractor> fe, InversionConfig cfg,
                           std::shared_ptr<const EncoderModel> encoder)
    : gen_(std::move(gen)),
      fe_(std::move(fe)),
      cfg_(cfg),
      encoder_(std::move(encoder)),
      engine_(*gen_, *fe_, cfg.alpha) {
  cfg_.validate();
  if (cfg_.init == InversionConfig::Init::encoder && !encoder_)
    throw Error("gan projector: init=encoder requires an encoder model");
}

Tensor GanProjector::project(const Tensor& image) const {
  Tensor code = engine_.invert(image, cfg_, encoder_.get()).code;
  if (cfg_.refine_steps > 0) code = engine_.refine_channels(image, code, cfg_);
  return code;
}

Tensor GanProjector::reconstruct(const Tensor& code) const { return gen_->synthesize(code); }

void GanProjector::save(const std::string& path, std::uint64_t config_hash) const {
  TensorMap t = gen_->params();
  t["kind"] = Tensor::scalar(2.0);
  t["cfg/steps"] = Tensor::scalar(static_cast<double>(cfg_.steps));
  t["cfg/step_size"] = Tensor::scalar(cfg_.step_size);
  t["cfg/alpha"] = Tensor::scalar(cfg_.alpha);
  t["cfg/momentum"] = Tensor::scalar(cfg_.momentum);
  stamp_hash(t, config_hash);
  save_tensors(path, t);
}

}  // namespace lfl
