#include "lfl/perceptual.hpp"

#include <Eigen/SVD>
#include <cmath>

#include "lfl/rng.hpp"

namespace lfl {

namespace {

void spectral_scale(Tensor& t, Index rows, Index cols) {
  ConstMapMat m(t.data.data(), rows, cols);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  double smax = svd.singularValues()(0);
  if (smax > 0.0) t.data /= smax;
}

}  // namespace

FeatureExtractor::FeatureExtractor(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xFEA7));
  k1_ = rng.normal_tensor({16, 3, 3, 3});
  spectral_scale(k1_, 16, 27);
  b1_ = rng.normal_tensor({16}, 0.05);
  k2_ = rng.normal_tensor({32, 16, 3, 3});
  spectral_scale(k2_, 32, 144);
  b2_ = rng.normal_tensor({32}, 0.05);

  feat_graph_ = std::make_shared<Graph>();
  int x = feat_graph_->input("x", {3, 32, 32});
  auto [f1, f2] = append_features(*feat_graph_, x);
  feat_graph_->mark_output("f1", f1);
  feat_graph_->mark_output("f2", f2);

  dist_graph_ = std::make_shared<Graph>();
  int dx = dist_graph_->input("x", {3, 32, 32});
  int dy = dist_graph_->input("y", {3, 32, 32});
  auto [x1, x2] = append_features(*dist_graph_, dx);
  auto [y1, y2] = append_features(*dist_graph_, dy);
  int d1 = dist_graph_->mean_all(dist_graph_->mul(dist_graph_->sub(x1, y1), dist_graph_->sub(x1, y1)));
  int d2 = dist_graph_->mean_all(dist_graph_->mul(dist_graph_->sub(x2, y2), dist_graph_->sub(x2, y2)));
  dist_graph_->mark_output("dist", dist_graph_->add(d1, d2));
}

std::pair<int, int> FeatureExtractor::append_features(Graph& g, int image_node) const {
  int k1 = g.constant(k1_, "lp/k1");
  int c1 = g.relu(g.conv2d(image_node, k1, g.constant(b1_, "lp/b1")));
  int f1 = g.channel_norm(c1);
  int pooled = g.avgpool2(c1);
  int k2 = g.constant(k2_, "lp/k2");
  int c2 = g.relu(g.conv2d(pooled, k2, g.constant(b2_, "lp/b2")));
  int f2 = g.channel_norm(c2);
  return {f1, f2};
}

int FeatureExtractor::append_distance_to(Graph& g, int image_node, const Tensor& f1_target,
                                         const Tensor& f2_target) const {
  auto [f1, f2] = append_features(g, image_node);
  int t1 = g.constant(f1_target, "lp/f1_target");
  int t2 = g.constant(f2_target, "lp/f2_target");
  int d1 = g.mean_all(g.mul(g.sub(f1, t1), g.sub(f1, t1)));
  int d2 = g.mean_all(g.mul(g.sub(f2, t2), g.sub(f2, t2)));
  return g.add(d1, d2);
}

double FeatureExtractor::distance(const Tensor& x, const Tensor& y) const {
  if (x.shape != y.shape)
    throw Error("perceptual: shape mismatch " + shape_str(x.shape) + " vs " + shape_str(y.shape));
  auto out = dist_graph_->evaluate({{"x", x}, {"y", y}});
  return out.at("dist").value();
}

std::pair<Tensor, Tensor> FeatureExtractor::features(const Tensor& x) const {
  auto out = feat_graph_->evaluate({{"x", x}});
  return {out.at("f1"), out.at("f2")};
}

BenchmarkStats reconstruction_benchmark(const FeatureExtractor& fe,
                                        const std::function<Tensor(const Tensor&)>& roundtrip,
                                        const std::vector<Tensor>& data, Index n) {
  if (n <= 0) throw Error("benchmark: n must be positive");
  if (n > static_cast<Index>(data.size()))
    throw Error("benchmark: n exceeds available data (" + std::to_string(data.size()) + ")");
  Eigen::ArrayXd d(n);
  for (Index i = 0; i < n; ++i) d[i] = fe.distance(data[static_cast<size_t>(i)],
                                                   roundtrip(data[static_cast<size_t>(i)]));
  BenchmarkStats s;
  s.n = n;
  s.mean = d.mean();
  double sd = n > 1 ? std::sqrt((d - s.mean).square().sum() / static_cast<double>(n - 1)) : 0.0;
  double half = 1.96 * sd / std::sqrt(static_cast<double>(n));
  s.ci_low = s.mean - half;
  s.ci_high = s.mean + half;
  return s;
}

}  // namespace lfl
