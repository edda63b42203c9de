#include "lfl/generator.hpp"

#include <Eigen/SVD>
#include <cmath>

namespace lfl {

namespace {

constexpr Index kMapHidden = 64;
constexpr double kTargetLogitStd = 1.5;

// Largest-singular-value scaling of a tensor viewed as rows x cols.
void spectral_scale(Tensor& t, Index rows, Index cols) {
  ConstMapMat m(t.data.data(), rows, cols);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  double smax = svd.singularValues()(0);
  if (smax > 0.0) t.data /= smax;
}

// Upsample placement: exactly three factor-2 steps (4 -> 32), arranged so
// consecutive same-resolution blocks form aligned pairs (0,1), (2,3) rather
// than straddling pairs. Two blocks sharing a resolution are nearly
// interchangeable, so aligned pairs keep a style edit in one pair from being
// absorbed by a block of a neighboring pair.
bool upsample_before(Index block, Index channels) {
  // 6 blocks -> resolutions 8,8,16,16,32,32: the constant is upsampled right
  // away and every resolution hosts a full aligned pair.
  (void)channels;
  return block % 2 == 0 && block / 2 < 3;
}

}  // namespace

GeneratorModel::GeneratorModel(GeneratorConfig cfg) : cfg_(cfg) {
  if (cfg_.channels < 3) throw Error("generator: needs at least 3 channels for 4->32 synthesis");
  Rng rng(derive_seed(cfg_.seed, 0xA11CE));
  const Index dz = cfg_.d_z, d = cfg_.d, C = cfg_.channels, F = cfg_.fmaps;

  auto init_mat = [&](const std::string& name, Index r, Index c) {
    Tensor t = rng.normal_tensor({r, c});
    spectral_scale(t, r, c);
    params_[name] = std::move(t);
  };
  init_mat("map/w1", dz, kMapHidden);
  params_["map/b1"] = rng.normal_tensor({kMapHidden}, 0.1);
  init_mat("map/w2", kMapHidden, kMapHidden);
  params_["map/b2"] = rng.normal_tensor({kMapHidden}, 0.1);
  init_mat("map/w3", kMapHidden, d);
  params_["map/b3"] = rng.normal_tensor({d}, 0.1);

  params_["syn/k"] = rng.normal_tensor({F, 4, 4});
  for (Index c = 0; c < C; ++c) {
    std::string b = "syn/blk" + std::to_string(c);
    init_mat(b + "/scale_w", d, F);
    params_[b + "/scale_b"] = Tensor::full({F}, 1.0);
    init_mat(b + "/shift_w", d, F);
    params_[b + "/shift_b"] = Tensor({F});
    Tensor k = rng.normal_tensor({F, F, 3, 3});
    spectral_scale(k, F, F * 9);
    params_[b + "/conv_w"] = std::move(k);
    params_[b + "/conv_b"] = rng.normal_tensor({F}, 0.1);
  }
  Tensor krgb = rng.normal_tensor({3, F, 3, 3});
  spectral_scale(krgb, 3, F * 9);
  params_["syn/rgb_w"] = std::move(krgb);
  params_["syn/rgb_b"] = rng.normal_tensor({3}, 0.1);

  map_graph_ = std::make_shared<Graph>();
  int zn = map_graph_->input("z", {1, dz});
  map_graph_->mark_output("w", append_mapping(*map_graph_, zn));

  // Calibrate the RGB head so pre-sigmoid logits have spread ~kTargetLogitStd:
  // spectrally scaled relu chains decay, and a saturated sigmoid would leave
  // the inversion without usable gradients.
  auto rgb_calibrate = [&]() {
    Graph probe;
    int wn = probe.input("w", code_shape());
    probe.mark_output("logits", append_synthesis_logits(probe, wn, false, "gen/"));
    double sum = 0.0, sumsq = 0.0;
    Index count = 0;
    for (int i = 0; i < 8; ++i) {
      Tensor z = sample_z(derive_seed(cfg_.seed, 0xCA1 + static_cast<std::uint64_t>(i)));
      Tensor w = map(z);
      auto out = probe.evaluate({{"w", w}});
      const Tensor& lg = out.at("logits");
      sum += lg.data.sum();
      sumsq += lg.data.square().sum();
      count += lg.size();
    }
    double mean = sum / static_cast<double>(count);
    double var = sumsq / static_cast<double>(count) - mean * mean;
    double scale = kTargetLogitStd / std::sqrt(std::max(var, 1e-12));
    params_["syn/rgb_w"].data *= scale;
    params_["syn/rgb_b"].data = (params_["syn/rgb_b"].data - mean) * scale;
  };

  // Equalize per-channel style influence: behind the long spectrally scaled
  // relu chain, early styles move the image orders of magnitude less than
  // late ones, which would let one channel dominate inversion while others
  // degenerate into near-dead inputs. Measure the image MSE caused by
  // swapping each channel and rescale the modulation affines until every
  // channel moves the image by a comparable amount.
  for (int round = 0; round < 3; ++round) {
    rgb_calibrate();
    Graph probe;
    int wn = probe.input("w", code_shape());
    probe.mark_output("image", append_synthesis(probe, wn));
    std::vector<double> mse(static_cast<size_t>(C), 0.0);
    for (int i = 0; i < 8; ++i) {
      std::uint64_t s = derive_seed(cfg_.seed, 0xE0A0 + static_cast<std::uint64_t>(i));
      Tensor w1 = map(sample_z(derive_seed(s, 1)));
      Tensor w2 = map(sample_z(derive_seed(s, 2)));
      Tensor base = probe.evaluate({{"w", w1}}).at("image");
      for (Index c = 0; c < C; ++c) {
        Tensor wm = w1;
        wm.data.segment(c * d, d) = w2.data.segment(c * d, d);
        Tensor img = probe.evaluate({{"w", wm}}).at("image");
        mse[static_cast<size_t>(c)] += (img.data - base.data).square().mean() / 8.0;
      }
    }
    double log_mean = 0.0;
    for (double m : mse) log_mean += std::log(std::max(m, 1e-18)) / static_cast<double>(C);
    double target = std::exp(log_mean);
    for (Index c = 0; c < C; ++c) {
      double factor =
          std::clamp(std::sqrt(target / std::max(mse[static_cast<size_t>(c)], 1e-18)), 0.2, 8.0);
      std::string b = "syn/blk" + std::to_string(c);
      params_[b + "/scale_w"].data *= factor;
      params_[b + "/shift_w"].data *= factor;
    }
  }
  rgb_calibrate();

  synth_graph_ = std::make_shared<Graph>();
  int wn = synth_graph_->input("w", code_shape());
  synth_graph_->mark_output("image", append_synthesis(*synth_graph_, wn));

  // Mean code over 1024 mapped samples (default inversion init).
  mean_w_ = Tensor(code_shape());
  for (int i = 0; i < 1024; ++i) {
    Tensor z = sample_z(derive_seed(cfg_.seed, 0x3EA0 + static_cast<std::uint64_t>(i)));
    mean_w_.data += map(z).data;
  }
  mean_w_.data /= 1024.0;
}

int GeneratorModel::append_mapping(Graph& g, int z_node, bool params_as_inputs,
                                   const std::string& prefix) const {
  auto p = [&](const std::string& name) {
    const Tensor& t = params_.at(name);
    return params_as_inputs ? g.input(prefix + name, t.shape) : g.constant(t, prefix + name);
  };
  int h1 = g.relu(g.add_bias(g.matmul(z_node, p("map/w1")), p("map/b1")));
  int h2 = g.relu(g.add_bias(g.matmul(h1, p("map/w2")), p("map/b2")));
  return g.add_bias(g.matmul(h2, p("map/w3")), p("map/b3"));
}

int GeneratorModel::append_synthesis_logits(Graph& g, int w_node, bool params_as_inputs,
                                            const std::string& prefix) const {
  const Index C = cfg_.channels, F = cfg_.fmaps, d = cfg_.d;
  auto p = [&](const std::string& name) {
    const Tensor& t = params_.at(name);
    return params_as_inputs ? g.input(prefix + name, t.shape) : g.constant(t, prefix + name);
  };
  int x = p("syn/k");
  for (Index c = 0; c < C; ++c) {
    std::string b = "syn/blk" + std::to_string(c);
    if (upsample_before(c, C)) x = g.upsample2(x);
    int row = g.reshape(g.row_select(w_node, c), {1, d});
    int scale = g.add_bias(g.reshape(g.matmul(row, p(b + "/scale_w")), {F}), p(b + "/scale_b"));
    int shift = g.add_bias(g.reshape(g.matmul(row, p(b + "/shift_w")), {F}), p(b + "/shift_b"));
    // Full AdaIN: normalize each feature map before styling so a block's
    // scale/shift fully owns its statistics and no block can smuggle a
    // global brightness/contrast correction on another block's behalf.
    x = g.chan_scale_shift(g.instance_norm(x), scale, shift);
    x = g.relu(g.conv2d(x, p(b + "/conv_w"), p(b + "/conv_b")));
  }
  return g.conv2d(x, p("syn/rgb_w"), p("syn/rgb_b"));
}

int GeneratorModel::append_synthesis(Graph& g, int w_node, bool params_as_inputs,
                                     const std::string& prefix) const {
  return g.sigmoid(append_synthesis_logits(g, w_node, params_as_inputs, prefix));
}

Tensor GeneratorModel::sample_z(std::uint64_t rng_seed) const {
  Rng rng(rng_seed);
  return rng.normal_tensor({cfg_.d_z});
}

Tensor GeneratorModel::map(const Tensor& z) const {
  if (z.shape != Shape{cfg_.d_z})
    throw Error("generator: z must have length " + std::to_string(cfg_.d_z) + ", got " +
                shape_str(z.shape));
  auto out = map_graph_->evaluate({{"z", z.reshaped({1, cfg_.d_z})}});
  const Tensor& row = out.at("w");
  Tensor w(code_shape());
  for (Index c = 0; c < cfg_.channels; ++c) w.data.segment(c * cfg_.d, cfg_.d) = row.data;
  return w;
}

Tensor GeneratorModel::synthesize(const Tensor& w) const {
  if (w.shape != code_shape())
    throw Error("generator: code must be " + shape_str(code_shape()) + ", got " +
                shape_str(w.shape));
  auto out = synth_graph_->evaluate({{"w", w}});
  return out.at("image");
}

Tensor GeneratorModel::style_mix(const Tensor& w1, const Tensor& w2, Index crossover) const {
  if (w1.shape != code_shape() || w2.shape != code_shape())
    throw Error("generator: style_mix codes must be " + shape_str(code_shape()));
  if (crossover < 0 || crossover > cfg_.channels)
    throw Error("generator: crossover must be in [0, " + std::to_string(cfg_.channels) + "]");
  Tensor w(code_shape());
  for (Index c = 0; c < cfg_.channels; ++c)
    w.data.segment(c * cfg_.d, cfg_.d) =
        (c < crossover ? w1 : w2).data.segment(c * cfg_.d, cfg_.d);
  return synthesize(w);
}

}  // namespace lfl
