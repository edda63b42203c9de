#include "lfl/inversion.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace lfl {

namespace {

void spectral_scale(Tensor& t, Index rows, Index cols) {
  ConstMapMat m(t.data.data(), rows, cols);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  double smax = svd.singularValues()(0);
  if (smax > 0.0) t.data /= smax;
}

// Channel consensus with a majority breakdown point: take the per-coordinate
// median, drop the (C-1)/2 rows farthest from it, and average the rest. A
// minority of deviating rows cannot displace the anchor, so rows that agree
// with the majority feel no pull away from it.
void majority_row(const Tensor& code, Index C, Index d, Tensor& out) {
  ConstMapMat m(code.data.data(), C, d);
  std::vector<double> col(static_cast<size_t>(C));
  for (Index j = 0; j < d; ++j) {
    for (Index c = 0; c < C; ++c) col[static_cast<size_t>(c)] = m(c, j);
    auto mid = col.begin() + C / 2;
    std::nth_element(col.begin(), mid, col.end());
    double hi = *mid;
    if (C % 2 == 0) {
      std::nth_element(col.begin(), mid - 1, mid);
      out.data[j] = 0.5 * (hi + *(mid - 1));
    } else {
      out.data[j] = hi;
    }
  }
  const Index keep = C - (C - 1) / 2;
  if (keep >= C) return;
  std::vector<std::pair<double, Index>> dist(static_cast<size_t>(C));
  for (Index c = 0; c < C; ++c) {
    double s = 0.0;
    for (Index j = 0; j < d; ++j) {
      double e = m(c, j) - out.data[j];
      s += e * e;
    }
    dist[static_cast<size_t>(c)] = {s, c};
  }
  std::partial_sort(dist.begin(), dist.begin() + keep, dist.end());
  out.data.setZero();
  for (Index k = 0; k < keep; ++k) {
    Index c = dist[static_cast<size_t>(k)].second;
    for (Index j = 0; j < d; ++j) out.data[j] += m(c, j);
  }
  out.data /= static_cast<double>(keep);
}

}  // namespace

void InversionConfig::validate() const {
  if (steps < 0) throw Error("inversion: steps must be >= 0");
  if (step_size <= 0.0) throw Error("inversion: step_size must be positive");
  if (alpha < 0.0) throw Error("inversion: alpha must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) throw Error("inversion: momentum must be in [0, 1)");
  if (consistency < 0.0) throw Error("inversion: consistency must be >= 0");
  if (refine_steps < 0) throw Error("inversion: refine_steps must be >= 0");
}

// ---------------------------------------------------------------------------
// EncoderModel

EncoderModel::EncoderModel(const GeneratorModel& g, std::uint64_t seed)
    : channels_(g.config().channels), d_(g.config().d) {
  Rng rng(derive_seed(seed, 0xE4C0));
  auto conv = [&](const std::string& name, Index co, Index ci) {
    Tensor t = rng.normal_tensor({co, ci, 3, 3});
    spectral_scale(t, co, ci * 9);
    params_[name + "_w"] = std::move(t);
    params_[name + "_b"] = Tensor({co});
  };
  conv("enc/c1", 8, 3);
  conv("enc/c2", 16, 8);
  Tensor fc = rng.normal_tensor({16 * 8 * 8, channels_ * d_});
  spectral_scale(fc, 16 * 8 * 8, channels_ * d_);
  params_["enc/fc_w"] = std::move(fc);
  params_["enc/fc_b"] = Tensor({channels_ * d_});
  for (const auto& [name, t] : params_) velocity_[name] = Tensor(t.shape);

  train_graph_ = std::make_shared<Graph>();
  {
    Graph& gr = *train_graph_;
    int x = gr.input("x", {3, 32, 32});
    auto p = [&](const std::string& name) { return gr.input(name, params_.at(name).shape); };
    int h = gr.avgpool2(gr.relu(gr.conv2d(x, p("enc/c1_w"), p("enc/c1_b"))));
    h = gr.avgpool2(gr.relu(gr.conv2d(h, p("enc/c2_w"), p("enc/c2_b"))));
    int flat = gr.reshape(h, {1, 16 * 8 * 8});
    int code = gr.add_bias(gr.matmul(flat, p("enc/fc_w")), p("enc/fc_b"));
    gr.mark_output("code", gr.reshape(code, {channels_, d_}));
    int target = gr.input("target", {channels_, d_});
    int loss = gr.scalar_mul(gr.sum_squares(gr.sub(gr.reshape(code, {channels_, d_}), target)),
                             1.0 / static_cast<double>(channels_ * d_));
    gr.mark_output("loss", loss);
  }
  rebuild_fast_graph();
}

void EncoderModel::rebuild_fast_graph() {
  fast_graph_ = std::make_shared<Graph>();
  Graph& gr = *fast_graph_;
  int x = gr.input("x", {3, 32, 32});
  auto p = [&](const std::string& name) { return gr.constant(params_.at(name), name); };
  int h = gr.avgpool2(gr.relu(gr.conv2d(x, p("enc/c1_w"), p("enc/c1_b"))));
  h = gr.avgpool2(gr.relu(gr.conv2d(h, p("enc/c2_w"), p("enc/c2_b"))));
  int flat = gr.reshape(h, {1, 16 * 8 * 8});
  int code = gr.add_bias(gr.matmul(flat, p("enc/fc_w")), p("enc/fc_b"));
  gr.mark_output("code", gr.reshape(code, {channels_, d_}));
}

Tensor EncoderModel::encode(const Tensor& image) const {
  return fast_graph_->evaluate({{"x", image}}).at("code");
}

void EncoderModel::load_params(TensorMap params) {
  params_ = std::move(params);
  velocity_.clear();
  for (const auto& [name, t] : params_) velocity_[name] = Tensor(t.shape);
  rebuild_fast_graph();
}

double EncoderModel::train_epoch(
    const std::vector<std::pair<const Tensor*, const Tensor*>>& pairs, double lr,
    std::uint64_t epoch_seed) {
  std::vector<size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(epoch_seed, 0x0d3a));
  rng.shuffle(order);
  Executor ex(*train_graph_);
  for (const auto& [name, t] : params_) ex.bind(name, t);
  double loss_sum = 0.0;
  for (size_t oi : order) {
    ex.bind("x", *pairs[oi].first);
    ex.bind("target", *pairs[oi].second);
    ex.forward();
    ex.backward("loss");
    loss_sum += ex.scalar_output("loss");
    for (auto& [name, t] : params_) {
      Tensor& vel = velocity_[name];
      vel.data = 0.9 * vel.data - lr * ex.input_grad(name).data;
      t.data += vel.data;
    }
  }
  return loss_sum / static_cast<double>(pairs.size());
}

EncoderModel train_encoder(const GeneratorModel& g, Index n_pairs, Index epochs,
                           std::uint64_t seed, double lr, std::vector<double>* epoch_mse) {
  EncoderModel enc(g, seed);
  std::vector<Tensor> images(static_cast<size_t>(n_pairs));
  std::vector<Tensor> codes(static_cast<size_t>(n_pairs));
  std::vector<std::pair<const Tensor*, const Tensor*>> pairs(static_cast<size_t>(n_pairs));
  for (Index i = 0; i < n_pairs; ++i) {
    Tensor z = g.sample_z(derive_seed(seed, 0xAB000 + static_cast<std::uint64_t>(i)));
    codes[static_cast<size_t>(i)] = g.map(z);
    images[static_cast<size_t>(i)] = g.synthesize(codes[static_cast<size_t>(i)]);
    pairs[static_cast<size_t>(i)] = {&images[static_cast<size_t>(i)],
                                     &codes[static_cast<size_t>(i)]};
  }
  for (Index e = 0; e < epochs; ++e) {
    double mse = enc.train_epoch(pairs, lr, derive_seed(seed, 0xEE00 + static_cast<std::uint64_t>(e)));
    if (epoch_mse) epoch_mse->push_back(mse);
  }
  enc.rebuild_fast_graph();
  return enc;
}

// ---------------------------------------------------------------------------
// InversionEngine

InversionEngine::InversionEngine(const GeneratorModel& g, const FeatureExtractor& fe, double alpha)
    : gen_(g), fe_(fe), alpha_(alpha) {
  loss_graph_ = std::make_shared<Graph>();
  Graph& gr = *loss_graph_;
  int w = gr.input("w", g.code_shape());
  int image = g.append_synthesis(gr, w);
  gr.mark_output("image", image);
  int x = gr.input("x", g.image_shape());

  // perceptual term against per-image feature targets bound at invert() time
  auto [f1, f2] = fe.append_features(gr, image);
  f1_shape_ = gr.shape_of(f1);
  f2_shape_ = gr.shape_of(f2);
  int f1x = gr.input("f1x", f1_shape_);
  int f2x = gr.input("f2x", f2_shape_);
  int d1 = gr.mean_all(gr.mul(gr.sub(f1, f1x), gr.sub(f1, f1x)));
  int d2 = gr.mean_all(gr.mul(gr.sub(f2, f2x), gr.sub(f2, f2x)));
  int percep = gr.add(d1, d2);
  gr.mark_output("percep", percep);

  int pix = gr.scalar_mul(gr.sum_squares(gr.sub(image, x)),
                          alpha_ / static_cast<double>(shape_size(g.image_shape())));
  gr.mark_output("loss", gr.add(percep, pix));
}

InversionResult InversionEngine::invert(const Tensor& x, const InversionConfig& cfg,
                                        const EncoderModel* encoder) const {
  cfg.validate();
  if (x.shape != gen_.image_shape())
    throw Error("inversion: image must be " + shape_str(gen_.image_shape()) + ", got " +
                shape_str(x.shape));

  Tensor w;
  switch (cfg.init) {
    case InversionConfig::Init::mean_w:
      w = gen_.mean_w();
      break;
    case InversionConfig::Init::encoder:
      if (!encoder) throw Error("inversion: init=encoder requires an encoder model");
      w = encoder->encode(x);
      break;
    case InversionConfig::Init::random:
      w = gen_.map(gen_.sample_z(derive_seed(cfg.seed, 0x1427)));
      break;
  }

  auto [f1x, f2x] = fe_.features(x);
  Executor ex(*loss_graph_);
  ex.bind("w", w);
  ex.bind("x", x);
  ex.bind("f1x", f1x);
  ex.bind("f2x", f2x);

  const Index C = gen_.code_shape()[0];
  const Index d = gen_.code_shape()[1];
  const double lam = cfg.consistency / static_cast<double>(C * d);
  Tensor anchor(Shape{d});
  auto median_rows = [&](const Tensor& code, Tensor& out) { majority_row(code, C, d, out); };
  auto penalty = [&](const Tensor& code, const Tensor& m) {
    ConstMapMat mm(code.data.data(), C, d);
    double s = 0.0;
    for (Index c = 0; c < C; ++c)
      for (Index j = 0; j < d; ++j) {
        double e = mm(c, j) - m.data[j];
        s += e * e;
      }
    return lam * s;
  };

  InversionResult res;
  int loss_node = loss_graph_->output_node("loss");
  ex.forward();
  median_rows(w, anchor);
  double loss = ex.scalar_output("loss") + penalty(w, anchor);
  res.init_perceptual = ex.scalar_output("percep");
  res.final_perceptual = res.init_perceptual;
  res.loss_history.push_back(loss);

  Tensor vel(gen_.code_shape());
  Tensor grad(gen_.code_shape());
  Tensor w_prev(gen_.code_shape());
  Tensor anchor_try(Shape{d});
  for (Index step = 0; step < cfg.steps; ++step) {
    ex.backward(loss_node);
    grad.data = ex.input_grad("w").data;
    {
      MapMat gm(grad.data.data(), C, d);
      ConstMapMat wm(w.data.data(), C, d);
      for (Index c = 0; c < C; ++c)
        for (Index j = 0; j < d; ++j) gm(c, j) += 2.0 * lam * (wm(c, j) - anchor.data[j]);
    }
    if (!grad.all_finite())
      throw Error("inversion: non-finite gradient at step " + std::to_string(step));
    double eta = cfg.step_size;
    double mom_scale = 1.0;
    Tensor vel_try = vel;
    w_prev.data = w.data;
    bool accepted = false;
    for (Index h = 0; h <= cfg.max_halvings; ++h) {
      vel_try.data = mom_scale * cfg.momentum * vel.data - eta * grad.data;
      w.data = w_prev.data + vel_try.data;
      ex.forward();
      double trial = ex.scalar_output("loss") + penalty(w, anchor);
      if (!std::isfinite(trial))
        throw Error("inversion: non-finite loss at step " + std::to_string(step));
      if (trial <= loss) {
        loss = trial;
        vel.data = vel_try.data;
        accepted = true;
        break;
      }
      eta *= 0.5;
      mom_scale *= 0.5;
    }
    if (!accepted) {
      // no decrease within the halving budget: keep the current point
      w.data = w_prev.data;
      vel.data.setZero();
      ex.forward();
    }
    if (lam > 0.0) {
      // track the consensus, but only when the refreshed anchor does not raise
      // the penalty, so the recorded loss stays non-increasing
      median_rows(w, anchor_try);
      double pen_new = penalty(w, anchor_try);
      double pen_old = penalty(w, anchor);
      if (pen_new <= pen_old) {
        anchor.data = anchor_try.data;
        loss += pen_new - pen_old;
      }
    }
    res.loss_history.push_back(loss);
    res.final_perceptual = ex.scalar_output("percep");
  }
  res.code = w;
  res.final_loss = loss;
  return res;
}

Tensor InversionEngine::refine_channels(const Tensor& x, const Tensor& code,
                                        const InversionConfig& cfg) const {
  cfg.validate();
  const Index C = gen_.code_shape()[0];
  const Index d = gen_.code_shape()[1];
  if (code.shape != gen_.code_shape())
    throw Error("inversion: refine expects a " + shape_str(gen_.code_shape()) + " code, got " +
                shape_str(code.shape));

  // Re-fit each channel alone, starting from the broadcast channel consensus
  // with every other row frozen there. A row that agrees with the consensus has
  // nothing to explain and stays put; a row the image disagrees with must
  // travel, and the distance it covers within the step budget is recorded in
  // the emitted code. Freezing the other rows keeps one channel's disagreement
  // from being smeared across the rest.
  Tensor anchor(Shape{d});
  majority_row(code, C, d, anchor);
  Tensor base(gen_.code_shape());
  {
    MapMat bm(base.data.data(), C, d);
    for (Index c = 0; c < C; ++c)
      for (Index j = 0; j < d; ++j) bm(c, j) = anchor.data[j];
  }

  auto [f1x, f2x] = fe_.features(x);
  Executor ex(*loss_graph_);
  ex.bind("x", x);
  ex.bind("f1x", f1x);
  ex.bind("f2x", f2x);

  Tensor out = base;
  Tensor w(gen_.code_shape());
  Tensor grad(gen_.code_shape());
  Tensor vel(gen_.code_shape());
  Tensor w_prev(gen_.code_shape());
  int loss_node = loss_graph_->output_node("loss");
  for (Index c = 0; c < C; ++c) {
    w.data = base.data;
    vel.data.setZero();
    ex.bind("w", w);
    ex.forward();
    double loss = ex.scalar_output("loss");
    for (Index step = 0; step < cfg.refine_steps; ++step) {
      ex.backward(loss_node);
      grad.data = ex.input_grad("w").data;
      if (!grad.all_finite())
        throw Error("inversion: non-finite gradient at refine step " + std::to_string(step));
      {
        MapMat gm(grad.data.data(), C, d);
        for (Index r = 0; r < C; ++r)
          if (r != c) gm.row(r).setZero();
      }
      double eta = cfg.step_size;
      double mom_scale = 1.0;
      Tensor vel_try = vel;
      w_prev.data = w.data;
      bool accepted = false;
      for (Index h = 0; h <= cfg.max_halvings; ++h) {
        vel_try.data = mom_scale * cfg.momentum * vel.data - eta * grad.data;
        w.data = w_prev.data + vel_try.data;
        ex.forward();
        double trial = ex.scalar_output("loss");
        if (!std::isfinite(trial))
          throw Error("inversion: non-finite loss at refine step " + std::to_string(step));
        if (trial <= loss) {
          loss = trial;
          vel.data = vel_try.data;
          accepted = true;
          break;
        }
        eta *= 0.5;
        mom_scale *= 0.5;
      }
      if (!accepted) {
        w.data = w_prev.data;
        vel.data.setZero();
      }
    }
    MapMat om(out.data.data(), C, d);
    ConstMapMat wm(w.data.data(), C, d);
    om.row(c) = wm.row(c);
  }
  // Keep only what the image can determine: the synthesis network reads a row
  // solely through its block's style affine, so components in that affine's
  // null space never receive gradient and would just echo the consensus
  // anchor. Project each row onto the affine's row space and drop the rest.
  {
    MapMat om(out.data.data(), C, d);
    for (Index c = 0; c < C; ++c) {
      std::string b = "syn/blk" + std::to_string(c);
      const Tensor& sw = gen_.params().at(b + "/scale_w");
      const Tensor& tw = gen_.params().at(b + "/shift_w");
      const Index F = sw.shape[1];
      Eigen::MatrixXd B(d, 2 * F);
      B.leftCols(F) = ConstMapMat(sw.data.data(), d, F);
      B.rightCols(F) = ConstMapMat(tw.data.data(), d, F);
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(B);
      Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, std::min(d, 2 * F));
      om.row(c) = (q * (q.transpose() * om.row(c).transpose())).transpose();
    }
  }
  return out;
}

}  // namespace lfl
