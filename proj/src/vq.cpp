#include "lfl/vq.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <numeric>

#include "lfl/rng.hpp"

namespace lfl {

namespace {

void spectral_scale(Tensor& t, Index rows, Index cols) {
  ConstMapMat m(t.data.data(), rows, cols);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  double smax = svd.singularValues()(0);
  if (smax > 0.0) t.data /= smax;
}

int append_encoder(Graph& g, int x, const TensorMap& params, bool as_inputs, Index dc) {
  auto p = [&](const std::string& name) {
    const Tensor& t = params.at(name);
    return as_inputs ? g.input(name, t.shape) : g.constant(t, name);
  };
  int h = g.avgpool2(g.relu(g.conv2d(x, p("enc/e1_w"), p("enc/e1_b"))));
  h = g.avgpool2(g.relu(g.conv2d(h, p("enc/e2_w"), p("enc/e2_b"))));
  (void)dc;
  return g.conv2d(h, p("enc/e3_w"), p("enc/e3_b"));  // linear latent head
}

int append_decoder(Graph& g, int zq, const TensorMap& params, bool as_inputs) {
  auto p = [&](const std::string& name) {
    const Tensor& t = params.at(name);
    return as_inputs ? g.input(name, t.shape) : g.constant(t, name);
  };
  int h = g.upsample2(g.relu(g.conv2d(zq, p("dec/d1_w"), p("dec/d1_b"))));
  h = g.upsample2(g.relu(g.conv2d(h, p("dec/d2_w"), p("dec/d2_b"))));
  return g.sigmoid(g.conv2d(h, p("dec/d3_w"), p("dec/d3_b")));
}

}  // namespace

VqModel::VqModel(VqConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  Rng rng(derive_seed(seed, 0x70b0));
  const Index dc = cfg_.code_dim;
  auto conv = [&](const std::string& name, Index co, Index ci) {
    Tensor t = rng.normal_tensor({co, ci, 3, 3});
    spectral_scale(t, co, ci * 9);
    params_[name + "_w"] = std::move(t);
    params_[name + "_b"] = rng.normal_tensor({co}, 0.05);
  };
  conv("enc/e1", 8, 3);
  conv("enc/e2", 8, 8);
  conv("enc/e3", dc, 8);
  conv("dec/d1", 8, dc);
  conv("dec/d2", 8, 8);
  conv("dec/d3", 3, 8);
  codebook_ = rng.normal_tensor({cfg_.codebook_size, dc}, 0.5);
  ema_counts_ = Eigen::ArrayXd::Ones(cfg_.codebook_size);
  ema_sums_ = codebook_.mat();
  for (const auto& [name, t] : params_) velocity_[name] = Tensor(t.shape);

  enc_train_ = std::make_shared<Graph>();
  {
    Graph& g = *enc_train_;
    int x = g.input("x", {3, 32, 32});
    int ze = append_encoder(g, x, params_, true, dc);
    g.mark_output("ze", ze);
    int u = g.input("u", {dc, kGrid, kGrid});
    // scalar surrogate sum(ze * u): backward seeds the encoder with u
    int s = g.scalar_mul(g.mean_all(g.mul(ze, u)), static_cast<double>(dc * kGrid * kGrid));
    g.mark_output("surrogate", s);
  }
  dec_train_ = std::make_shared<Graph>();
  {
    Graph& g = *dec_train_;
    int zq = g.input("zq", {dc, kGrid, kGrid});
    int x = g.input("x", {3, 32, 32});
    int recon = append_decoder(g, zq, params_, true);
    g.mark_output("recon", recon);
    int loss = g.scalar_mul(g.sum_squares(g.sub(recon, x)), 1.0 / (3.0 * 32.0 * 32.0));
    g.mark_output("loss", loss);
  }
  rebuild_graphs();
}

void VqModel::rebuild_graphs() {
  enc_fast_ = std::make_shared<Graph>();
  {
    int x = enc_fast_->input("x", {3, 32, 32});
    enc_fast_->mark_output("ze", append_encoder(*enc_fast_, x, params_, false, cfg_.code_dim));
  }
  dec_fast_ = std::make_shared<Graph>();
  {
    int zq = dec_fast_->input("zq", {cfg_.code_dim, kGrid, kGrid});
    dec_fast_->mark_output("recon", append_decoder(*dec_fast_, zq, params_, false));
  }
  fast_dirty_ = false;
}

Tensor VqModel::latents(const Tensor& image) const {
  return enc_fast_->evaluate({{"x", image}}).at("ze");
}

Index VqModel::nearest(const double* vec) const {
  const Index K = cfg_.codebook_size, dc = cfg_.code_dim;
  Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Index k = 0; k < K; ++k) {
    double d = 0.0;
    const double* row = codebook_.data.data() + k * dc;
    for (Index c = 0; c < dc; ++c) {
      double diff = vec[c] - row[c];
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

Tensor VqModel::quantized(const Tensor& ze, std::vector<Index>* idx_out) const {
  const Index dc = cfg_.code_dim, cells = kGrid * kGrid;
  Tensor zq(ze.shape);
  std::vector<double> vec(static_cast<size_t>(dc));
  for (Index p = 0; p < cells; ++p) {
    for (Index c = 0; c < dc; ++c) vec[static_cast<size_t>(c)] = ze.data[c * cells + p];
    Index k = nearest(vec.data());
    if (idx_out) idx_out->push_back(k);
    for (Index c = 0; c < dc; ++c) zq.data[c * cells + p] = codebook_.data[k * dc + c];
  }
  return zq;
}

Tensor VqModel::encode_indices(const Tensor& image) const {
  Tensor ze = latents(image);
  std::vector<Index> idx;
  (void)quantized(ze, &idx);
  Tensor out({kGrid, kGrid});
  for (Index p = 0; p < kGrid * kGrid; ++p) out.data[p] = static_cast<double>(idx[static_cast<size_t>(p)]);
  return out;
}

Tensor VqModel::decode_indices(const Tensor& indices) const {
  if (indices.shape != Shape{kGrid, kGrid})
    throw Error("vq: index grid must be " + shape_str({kGrid, kGrid}) + ", got " +
                shape_str(indices.shape));
  const Index dc = cfg_.code_dim, cells = kGrid * kGrid;
  Tensor zq({dc, kGrid, kGrid});
  for (Index p = 0; p < cells; ++p) {
    double v = indices.data[p];
    Index k = static_cast<Index>(v);
    if (v != std::floor(v) || k < 0 || k >= cfg_.codebook_size)
      throw Error("vq: invalid codebook index " + std::to_string(v));
    for (Index c = 0; c < dc; ++c) zq.data[c * cells + p] = codebook_.data[k * dc + c];
  }
  return dec_fast_->evaluate({{"zq", zq}}).at("recon");
}

void VqModel::init_codebook(const std::vector<const Tensor*>& images) {
  const Index dc = cfg_.code_dim, cells = kGrid * kGrid;
  Index filled = 0;
  for (const Tensor* img : images) {
    Tensor ze = latents(*img);
    for (Index p = 0; p < cells && filled < cfg_.codebook_size; ++p, ++filled)
      for (Index c = 0; c < dc; ++c) codebook_.data[filled * dc + c] = ze.data[c * cells + p];
    if (filled >= cfg_.codebook_size) break;
  }
  ema_counts_.setOnes();
  ema_sums_ = codebook_.mat();
}

double VqModel::train_epoch(const std::vector<const Tensor*>& images, std::uint64_t epoch_seed) {
  const Index dc = cfg_.code_dim, cells = kGrid * kGrid;
  std::vector<size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(epoch_seed, 0xe60c));
  rng.shuffle(order);

  Executor enc(*enc_train_);
  Executor dec(*dec_train_);
  for (const auto& [name, t] : params_) {
    if (name.rfind("enc/", 0) == 0) enc.bind(name, t);
    else dec.bind(name, t);
  }
  Tensor u({dc, kGrid, kGrid});
  double mse_sum = 0.0;
  for (size_t oi = 0; oi < order.size(); ++oi) {
    const Tensor& x = *images[order[oi]];
    enc.bind("x", x);
    enc.bind("u", u);
    enc.forward();
    Tensor ze = enc.value(enc_train_->output_node("ze"));
    std::vector<Index> idx;
    Tensor zq = quantized(ze, &idx);

    dec.bind("zq", zq);
    dec.bind("x", x);
    dec.forward();
    dec.backward("loss");
    mse_sum += dec.scalar_output("loss");

    // straight-through: decoder's gradient at zq plus the commitment pull
    const Tensor& dzq = dec.input_grad("zq");
    u.data = dzq.data + cfg_.commitment_beta * 2.0 * (ze.data - zq.data) /
                            static_cast<double>(ze.size());
    enc.forward();
    enc.backward("surrogate");

    for (auto& [name, t] : params_) {
      const Tensor& grad = name.rfind("enc/", 0) == 0 ? enc.input_grad(name) : dec.input_grad(name);
      Tensor& vel = velocity_[name];
      vel.data = cfg_.momentum * vel.data - cfg_.learning_rate * grad.data;
      t.data += vel.data;
    }

    // EMA codebook update from this sample's assignments
    Eigen::ArrayXd counts = Eigen::ArrayXd::Zero(cfg_.codebook_size);
    MatrixRM sums = MatrixRM::Zero(cfg_.codebook_size, dc);
    for (Index p = 0; p < cells; ++p) {
      Index k = idx[static_cast<size_t>(p)];
      counts[k] += 1.0;
      for (Index c = 0; c < dc; ++c) sums(k, c) += ze.data[c * cells + p];
    }
    double g = cfg_.ema_decay;
    ema_counts_ = g * ema_counts_ + (1.0 - g) * counts;
    ema_sums_ = g * ema_sums_ + (1.0 - g) * sums;
    for (Index k = 0; k < cfg_.codebook_size; ++k) {
      double nk = ema_counts_[k] + 1e-5;
      for (Index c = 0; c < dc; ++c) codebook_.data[k * dc + c] = ema_sums_(k, c) / nk;
    }
  }
  fast_dirty_ = true;
  return mse_sum / static_cast<double>(images.size());
}

void VqModel::load_params(TensorMap params, Tensor codebook) {
  params_ = std::move(params);
  codebook_ = std::move(codebook);
  ema_counts_ = Eigen::ArrayXd::Ones(cfg_.codebook_size);
  ema_sums_ = codebook_.mat();
  velocity_.clear();
  for (const auto& [name, t] : params_) velocity_[name] = Tensor(t.shape);
  rebuild_graphs();
}

VqModel vq_train(const std::vector<const Tensor*>& images, Index epochs, std::uint64_t seed,
                 VqConfig cfg, VqTrainReport* report) {
  if (images.empty()) throw Error("vq: no training data");
  VqModel model(cfg, seed);
  model.init_codebook(images);
  for (Index e = 0; e < epochs; ++e) {
    double mse = model.train_epoch(images, derive_seed(seed, 0xE000 + static_cast<std::uint64_t>(e)));
    if (report) report->epoch_mse.push_back(mse);
  }
  model.rebuild_graphs();
  return model;
}

}  // namespace lfl
