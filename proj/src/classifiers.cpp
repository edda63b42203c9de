#include "lfl/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lfl/rng.hpp"

namespace lfl {

namespace {

void require_both_classes(const std::vector<int>& y, const char* ctx) {
  bool has0 = false, has1 = false;
  for (int v : y) (v ? has1 : has0) = true;
  if (!has0 || !has1) throw Error(std::string(ctx) + ": training data must contain both classes");
}

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

}  // namespace

std::string classifier_kind_name(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::random_forest: return "rf";
    case ClassifierKind::logistic: return "lr";
    case ClassifierKind::mlp2: return "mlp2";
    case ClassifierKind::mlp5: return "mlp5";
  }
  return "?";
}

ClassifierKind classifier_kind_from_name(const std::string& name) {
  if (name == "rf") return ClassifierKind::random_forest;
  if (name == "lr") return ClassifierKind::logistic;
  if (name == "mlp2") return ClassifierKind::mlp2;
  if (name == "mlp5") return ClassifierKind::mlp5;
  throw Error("classifiers: unknown classifier kind '" + name + "'");
}

Standardizer Standardizer::fit(const MatrixRM& x) {
  Standardizer s;
  s.mean = x.colwise().mean();
  Eigen::VectorXd var =
      ((x.rowwise() - s.mean.transpose()).array().square().colwise().mean()).matrix();
  s.inv_std = var.unaryExpr([](double v) { return v > 1e-24 ? 1.0 / std::sqrt(v) : 1.0; });
  return s;
}

Eigen::VectorXd Standardizer::apply(const Eigen::VectorXd& v) const {
  return (v - mean).cwiseProduct(inv_std);
}

MatrixRM Standardizer::apply_rows(const MatrixRM& x) const {
  return (x.rowwise() - mean.transpose()) * inv_std.asDiagonal();
}

// ---------------------------------------------------------------------------
// Random forest

namespace {

struct TreeBuilder {
  const MatrixRM& x;
  const std::vector<int>& y;
  Index max_features;
  Rng& rng;
  std::vector<RandomForestModel::Node>& nodes;
  std::vector<Index> feat_pool;  // shuffled prefix gives the per-node subset

  // Builds the subtree over sample indices [begin, end) of idx; returns node id.
  Index build(std::vector<Index>& idx, Index begin, Index end) {
    Index n = end - begin;
    Index fake = 0;
    for (Index i = begin; i < end; ++i) fake += y[static_cast<size_t>(idx[static_cast<size_t>(i)])];
    Index id = static_cast<Index>(nodes.size());
    nodes.push_back({});
    nodes[static_cast<size_t>(id)].p_fake = static_cast<double>(fake) / static_cast<double>(n);
    if (n < 2 || fake == 0 || fake == n) return id;  // leaf: too small or pure

    // Gini impurity decrease over max_features randomly chosen features.
    double parent = 1.0 - [&] {
      double pf = static_cast<double>(fake) / static_cast<double>(n);
      return pf * pf + (1.0 - pf) * (1.0 - pf);
    }();
    for (Index k = 0; k < max_features; ++k) {
      Index swap = k + static_cast<Index>(rng.uniform_index(feat_pool.size() - static_cast<size_t>(k)));
      std::swap(feat_pool[static_cast<size_t>(k)], feat_pool[static_cast<size_t>(swap)]);
    }

    double best_gain = 0.0;
    Index best_feat = -1;
    double best_thr = 0.0;
    std::vector<std::pair<double, int>> vals(static_cast<size_t>(n));
    for (Index k = 0; k < max_features; ++k) {
      Index f = feat_pool[static_cast<size_t>(k)];
      for (Index i = 0; i < n; ++i) {
        Index s = idx[static_cast<size_t>(begin + i)];
        vals[static_cast<size_t>(i)] = {x(s, f), y[static_cast<size_t>(s)]};
      }
      std::sort(vals.begin(), vals.end());
      Index left_fake = 0;
      for (Index i = 0; i + 1 < n; ++i) {
        left_fake += vals[static_cast<size_t>(i)].second;
        if (vals[static_cast<size_t>(i)].first == vals[static_cast<size_t>(i + 1)].first) continue;
        Index nl = i + 1, nr = n - nl;
        double pl = static_cast<double>(left_fake) / static_cast<double>(nl);
        double pr = static_cast<double>(fake - left_fake) / static_cast<double>(nr);
        double gini_l = 2.0 * pl * (1.0 - pl);
        double gini_r = 2.0 * pr * (1.0 - pr);
        double gain = parent - (static_cast<double>(nl) * gini_l + static_cast<double>(nr) * gini_r) /
                                   static_cast<double>(n);
        if (gain > best_gain + 1e-15) {
          best_gain = gain;
          best_feat = f;
          best_thr = 0.5 * (vals[static_cast<size_t>(i)].first + vals[static_cast<size_t>(i + 1)].first);
        }
      }
    }
    if (best_feat < 0) return id;  // all sampled features constant

    Index mid = begin;
    for (Index i = begin; i < end; ++i) {
      Index s = idx[static_cast<size_t>(i)];
      if (x(s, best_feat) <= best_thr) std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(mid++)]);
    }
    if (mid == begin || mid == end) return id;  // numeric degeneracy: keep the leaf

    nodes[static_cast<size_t>(id)].feature = best_feat;
    nodes[static_cast<size_t>(id)].threshold = best_thr;
    Index left = build(idx, begin, mid);
    nodes[static_cast<size_t>(id)].left = left;
    Index right = build(idx, mid, end);
    nodes[static_cast<size_t>(id)].right = right;
    return id;
  }
};

}  // namespace

RandomForestModel train_random_forest(const MatrixRM& x, const std::vector<int>& y,
                                      const ForestConfig& cfg) {
  if (x.rows() < 2) throw Error("classifiers: random forest needs at least 2 samples");
  if (static_cast<size_t>(x.rows()) != y.size())
    throw Error("classifiers: feature/label count mismatch");
  require_both_classes(y, "classifiers");

  RandomForestModel model;
  model.input_dim_ = x.cols();
  Index d = x.cols();
  Index max_features = std::max<Index>(1, static_cast<Index>(std::lround(std::sqrt(static_cast<double>(d)))));
  Index n = x.rows();

  model.trees_.resize(static_cast<size_t>(cfg.n_estimators));
  for (Index t = 0; t < cfg.n_estimators; ++t) {
    Rng rng(derive_seed(cfg.seed, 0xF0E57u + static_cast<std::uint64_t>(t)));
    std::vector<Index> idx(static_cast<size_t>(n));
    for (Index i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = static_cast<Index>(rng.uniform_index(static_cast<size_t>(n)));
    // A bootstrap resample can be single-class; that tree is a lone leaf.
    auto& nodes = model.trees_[static_cast<size_t>(t)];
    std::vector<Index> pool(static_cast<size_t>(d));
    std::iota(pool.begin(), pool.end(), Index{0});
    TreeBuilder tb{x, y, max_features, rng, nodes, std::move(pool)};
    tb.build(idx, 0, n);
  }
  return model;
}

double RandomForestModel::score(const Eigen::VectorXd& x) const {
  if (x.size() != input_dim_) throw Error("classifiers: forest input dimension mismatch");
  double acc = 0.0;
  for (const auto& tree : trees_) {
    Index i = 0;
    while (tree[static_cast<size_t>(i)].feature >= 0) {
      const Node& nd = tree[static_cast<size_t>(i)];
      i = x(nd.feature) <= nd.threshold ? nd.left : nd.right;
    }
    acc += tree[static_cast<size_t>(i)].p_fake;
  }
  return acc / static_cast<double>(trees_.size());
}

TensorMap RandomForestModel::to_tensors() const {
  Index total = 0;
  for (const auto& t : trees_) total += static_cast<Index>(t.size());
  Tensor meta = Tensor::zeros({2});
  meta.data(0) = static_cast<double>(input_dim_);
  meta.data(1) = static_cast<double>(trees_.size());
  Tensor offsets = Tensor::zeros({static_cast<Index>(trees_.size()) + 1});
  Tensor feature = Tensor::zeros({total}), threshold = Tensor::zeros({total});
  Tensor left = Tensor::zeros({total}), right = Tensor::zeros({total});
  Tensor p_fake = Tensor::zeros({total});
  Index at = 0;
  for (size_t t = 0; t < trees_.size(); ++t) {
    offsets.data(static_cast<Index>(t)) = static_cast<double>(at);
    for (const Node& nd : trees_[t]) {
      feature.data(at) = static_cast<double>(nd.feature);
      threshold.data(at) = nd.threshold;
      left.data(at) = static_cast<double>(nd.left);
      right.data(at) = static_cast<double>(nd.right);
      p_fake.data(at) = nd.p_fake;
      ++at;
    }
  }
  offsets.data(static_cast<Index>(trees_.size())) = static_cast<double>(at);
  return {{"meta", meta},       {"offsets", offsets}, {"feature", feature},
          {"threshold", threshold}, {"left", left},   {"right", right},
          {"p_fake", p_fake}};
}

RandomForestModel RandomForestModel::from_tensors(const TensorMap& t) {
  RandomForestModel m;
  const Tensor& meta = t.at("meta");
  m.input_dim_ = static_cast<Index>(meta.data(0));
  Index n_trees = static_cast<Index>(meta.data(1));
  const Tensor& off = t.at("offsets");
  m.trees_.resize(static_cast<size_t>(n_trees));
  for (Index k = 0; k < n_trees; ++k) {
    Index b = static_cast<Index>(off.data(k)), e = static_cast<Index>(off.data(k + 1));
    auto& tree = m.trees_[static_cast<size_t>(k)];
    tree.resize(static_cast<size_t>(e - b));
    for (Index i = b; i < e; ++i) {
      Node& nd = tree[static_cast<size_t>(i - b)];
      nd.feature = static_cast<Index>(t.at("feature").data(i));
      nd.threshold = t.at("threshold").data(i);
      nd.left = static_cast<Index>(t.at("left").data(i));
      nd.right = static_cast<Index>(t.at("right").data(i));
      nd.p_fake = t.at("p_fake").data(i);
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// SGD helpers shared by the logistic and MLP trainers

namespace {

// Deterministic train/validation row split for early stopping. Falls back to
// validating on the training rows themselves when the data is too small to
// spare a holdout.
struct EarlyStopSplit {
  std::vector<Index> train, val;
};

EarlyStopSplit early_stop_split(Index n, double val_fraction, std::uint64_t seed) {
  std::vector<Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(derive_seed(seed, 0x5711Du));
  rng.shuffle(order);
  Index n_val = static_cast<Index>(std::floor(static_cast<double>(n) * val_fraction));
  EarlyStopSplit s;
  if (n_val < 1 || n - n_val < 2) {
    s.train = order;
    s.val = order;
    return s;
  }
  s.val.assign(order.begin(), order.begin() + n_val);
  s.train.assign(order.begin() + n_val, order.end());
  return s;
}

double bce(double p, int label) {
  const double eps = 1e-12;
  p = std::min(1.0 - eps, std::max(eps, p));
  return label ? -std::log(p) : -std::log(1.0 - p);
}

}  // namespace

// ---------------------------------------------------------------------------
// Logistic regression

LogisticModel train_logistic(const MatrixRM& x, const std::vector<int>& y,
                             const TrainConfig& cfg) {
  if (static_cast<size_t>(x.rows()) != y.size())
    throw Error("classifiers: feature/label count mismatch");
  require_both_classes(y, "classifiers");

  LogisticModel m;
  m.std_ = Standardizer::fit(x);
  MatrixRM xs = m.std_.apply_rows(x);
  Index d = x.cols(), n = x.rows();
  m.weights = Eigen::VectorXd::Zero(d);
  m.bias = 0.0;

  EarlyStopSplit split = early_stop_split(n, cfg.val_fraction, cfg.seed);
  Eigen::VectorXd best_w = m.weights;
  double best_b = 0.0, best_val = 1e300;
  Index stale = 0;
  Rng rng(derive_seed(cfg.seed, 0x106157u));

  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<Index> order = split.train;
    rng.shuffle(order);
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch_size)) {
      size_t e = std::min(order.size(), at + static_cast<size_t>(cfg.batch_size));
      Eigen::VectorXd gw = Eigen::VectorXd::Zero(d);
      double gb = 0.0;
      for (size_t i = at; i < e; ++i) {
        Index s = order[i];
        double err = sigmoid(m.weights.dot(xs.row(s)) + m.bias) - y[static_cast<size_t>(s)];
        gw += err * xs.row(s).transpose();
        gb += err;
      }
      double inv = 1.0 / static_cast<double>(e - at);
      m.weights -= cfg.learning_rate * inv * gw;
      m.bias -= cfg.learning_rate * inv * gb;
    }
    double val = 0.0;
    for (Index s : split.val)
      val += bce(sigmoid(m.weights.dot(xs.row(s)) + m.bias), y[static_cast<size_t>(s)]);
    val /= static_cast<double>(split.val.size());
    if (val < best_val - 1e-12) {
      best_val = val;
      best_w = m.weights;
      best_b = m.bias;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  m.weights = best_w;
  m.bias = best_b;
  return m;
}

double LogisticModel::score(const Eigen::VectorXd& x) const {
  if (x.size() != weights.size()) throw Error("classifiers: logistic input dimension mismatch");
  return sigmoid(weights.dot(std_.apply(x)) + bias);
}

TensorMap LogisticModel::to_tensors() const {
  Index d = weights.size();
  Tensor w = Tensor::zeros({d}), mu = Tensor::zeros({d}), is = Tensor::zeros({d});
  w.data = weights.array();
  mu.data = std_.mean.array();
  is.data = std_.inv_std.array();
  return {{"w", w}, {"b", Tensor::scalar(bias)}, {"std_mean", mu}, {"std_inv", is}};
}

LogisticModel LogisticModel::from_tensors(const TensorMap& t) {
  LogisticModel m;
  m.weights = t.at("w").data.matrix();
  m.bias = t.at("b").data(0);
  m.std_.mean = t.at("std_mean").data.matrix();
  m.std_.inv_std = t.at("std_inv").data.matrix();
  return m;
}

// ---------------------------------------------------------------------------
// MLPs

std::vector<Index> MlpModel::hidden_sizes(MlpArch arch) {
  if (arch == MlpArch::mlp2) return {512};
  return {2048, 512, 512, 512};
}

namespace {

// Appends the fully-connected chain; returns the logits node (m x 1).
int append_mlp(Graph& g, int x_node, const TensorMap& params, Index n_layers,
               bool params_as_inputs) {
  int h = x_node;
  for (Index l = 0; l < n_layers; ++l) {
    std::string base = "fc" + std::to_string(l) + "/";
    const Tensor& w = params.at(base + "w");
    const Tensor& b = params.at(base + "b");
    int wn = params_as_inputs ? g.input(base + "w", w.shape) : g.constant(w, base + "w");
    int bn = params_as_inputs ? g.input(base + "b", b.shape) : g.constant(b, base + "b");
    h = g.add_bias(g.matmul(h, wn), bn);
    if (l + 1 < n_layers) h = g.relu(h);
  }
  return h;
}

TensorMap init_mlp_params(Index d, const std::vector<Index>& hidden, std::uint64_t seed) {
  TensorMap params;
  Rng rng(derive_seed(seed, 0x317A9u));
  std::vector<Index> sizes;
  sizes.push_back(d);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  for (size_t l = 0; l + 1 < sizes.size(); ++l) {
    Index fan_in = sizes[l], fan_out = sizes[l + 1];
    double scale = std::sqrt((l + 2 < sizes.size() ? 2.0 : 1.0) / static_cast<double>(fan_in));
    Tensor w = rng.normal_tensor({fan_in, fan_out});
    w.data *= scale;
    std::string base = "fc" + std::to_string(l) + "/";
    params[base + "w"] = std::move(w);
    params[base + "b"] = Tensor::zeros({fan_out});
  }
  return params;
}

}  // namespace

void MlpModel::build_graph() {
  score_graph_ = std::make_shared<Graph>();
  Index d = std_.mean.size();
  int x = score_graph_->input("x", {1, d});
  Index n_layers = static_cast<Index>(hidden_sizes(arch_).size()) + 1;
  int logits = append_mlp(*score_graph_, x, params_, n_layers, false);
  score_graph_->mark_output("p", score_graph_->sigmoid(logits));
}

MlpModel train_mlp(const MatrixRM& x, const std::vector<int>& y, MlpArch arch,
                   const TrainConfig& cfg) {
  if (static_cast<size_t>(x.rows()) != y.size())
    throw Error("classifiers: feature/label count mismatch");
  require_both_classes(y, "classifiers");

  MlpModel m;
  m.arch_ = arch;
  m.std_ = Standardizer::fit(x);
  MatrixRM xs = m.std_.apply_rows(x);
  Index d = x.cols(), n = x.rows();
  std::vector<Index> hidden = MlpModel::hidden_sizes(arch);
  Index n_layers = static_cast<Index>(hidden.size()) + 1;
  m.params_ = init_mlp_params(d, hidden, cfg.seed);

  EarlyStopSplit split = early_stop_split(n, cfg.val_fraction, cfg.seed);

  // One loss graph + executor per batch size in play (full and remainder),
  // plus one for validation.
  auto make_loss = [&](Index rows) {
    auto g = std::make_shared<Graph>();
    int xn = g->input("x", {rows, d});
    int yn = g->input("y", {rows, 1});
    int logits = append_mlp(*g, xn, m.params_, n_layers, true);
    g->mark_output("loss", g->bce_logits(logits, yn));
    return g;
  };
  auto fill_batch = [&](Tensor& xb, Tensor& yb, const std::vector<Index>& rows, size_t b,
                        size_t e) {
    for (size_t i = b; i < e; ++i) {
      Index s = rows[i];
      xb.data.segment(static_cast<Index>(i - b) * d, d) = xs.row(s).transpose();
      yb.data(static_cast<Index>(i - b)) = y[static_cast<size_t>(s)];
    }
  };

  Index n_train = static_cast<Index>(split.train.size());
  Index full = std::min(cfg.batch_size, n_train);
  Index rem = n_train % full;
  auto g_full = make_loss(full);
  Executor ex_full(*g_full);
  std::shared_ptr<Graph> g_rem;
  std::unique_ptr<Executor> ex_rem;
  if (rem > 0) {
    g_rem = make_loss(rem);
    ex_rem = std::make_unique<Executor>(*g_rem);
  }
  auto g_val = make_loss(static_cast<Index>(split.val.size()));
  Executor ex_val(*g_val);

  Tensor xb_full = Tensor::zeros({full, d}), yb_full = Tensor::zeros({full, 1});
  Tensor xb_rem = Tensor::zeros({std::max<Index>(rem, 1), d});
  Tensor yb_rem = Tensor::zeros({std::max<Index>(rem, 1), 1});
  Tensor xv = Tensor::zeros({static_cast<Index>(split.val.size()), d});
  Tensor yv = Tensor::zeros({static_cast<Index>(split.val.size()), 1});
  fill_batch(xv, yv, split.val, 0, split.val.size());

  TensorMap best = m.params_;
  double best_val = 1e300;
  Index stale = 0;
  Rng rng(derive_seed(cfg.seed, 0x106157u));

  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<Index> order = split.train;
    rng.shuffle(order);
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(full)) {
      size_t e = std::min(order.size(), at + static_cast<size_t>(full));
      bool is_full = (e - at) == static_cast<size_t>(full);
      Executor& ex = is_full ? ex_full : *ex_rem;
      Tensor& xb = is_full ? xb_full : xb_rem;
      Tensor& yb = is_full ? yb_full : yb_rem;
      fill_batch(xb, yb, order, at, e);
      ex.bind("x", xb);
      ex.bind("y", yb);
      for (const auto& [name, t] : m.params_) ex.bind(name, t);
      ex.forward();
      ex.backward("loss");
      for (auto& [name, t] : m.params_)
        t.data -= cfg.learning_rate * ex.input_grad(name).data;
    }
    ex_val.bind("x", xv);
    ex_val.bind("y", yv);
    for (const auto& [name, t] : m.params_) ex_val.bind(name, t);
    ex_val.forward();
    double val = ex_val.scalar_output("loss");
    if (val < best_val - 1e-12) {
      best_val = val;
      best = m.params_;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  m.params_ = std::move(best);
  m.build_graph();
  return m;
}

double MlpModel::score(const Eigen::VectorXd& x) const {
  if (x.size() != std_.mean.size()) throw Error("classifiers: mlp input dimension mismatch");
  Tensor xt = Tensor::zeros({1, x.size()});
  xt.data = std_.apply(x).array();
  Executor ex(*score_graph_);
  ex.bind("x", xt);
  ex.forward();
  return ex.scalar_output("p");
}

TensorMap MlpModel::to_tensors() const {
  TensorMap t = params_;
  Index d = std_.mean.size();
  Tensor mu = Tensor::zeros({d}), is = Tensor::zeros({d});
  mu.data = std_.mean.array();
  is.data = std_.inv_std.array();
  t["std_mean"] = mu;
  t["std_inv"] = is;
  t["arch"] = Tensor::scalar(arch_ == MlpArch::mlp2 ? 2.0 : 5.0);
  return t;
}

MlpModel MlpModel::from_tensors(const TensorMap& t) {
  MlpModel m;
  m.arch_ = t.at("arch").data(0) == 2.0 ? MlpArch::mlp2 : MlpArch::mlp5;
  m.std_.mean = t.at("std_mean").data.matrix();
  m.std_.inv_std = t.at("std_inv").data.matrix();
  for (const auto& [name, tensor] : t)
    if (name.rfind("fc", 0) == 0) m.params_[name] = tensor;
  m.build_graph();
  return m;
}

// ---------------------------------------------------------------------------

std::unique_ptr<Classifier> train_classifier(ClassifierKind kind, const MatrixRM& x,
                                             const std::vector<int>& y, std::uint64_t seed,
                                             const TrainConfig& base, Index forest_trees) {
  if (kind == ClassifierKind::random_forest) {
    ForestConfig fc;
    fc.n_estimators = forest_trees;
    fc.seed = seed;
    return std::make_unique<RandomForestModel>(train_random_forest(x, y, fc));
  }
  TrainConfig cfg = base;
  cfg.seed = seed;
  if (kind == ClassifierKind::logistic)
    return std::make_unique<LogisticModel>(train_logistic(x, y, cfg));
  MlpArch arch = kind == ClassifierKind::mlp2 ? MlpArch::mlp2 : MlpArch::mlp5;
  return std::make_unique<MlpModel>(train_mlp(x, y, arch, cfg));
}

}  // namespace lfl
