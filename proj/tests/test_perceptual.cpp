#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lfl/generator.hpp"
#include "lfl/pca.hpp"
#include "lfl/perceptual.hpp"
#include "lfl/rng.hpp"

using namespace lfl;

namespace {
const GeneratorModel& shared_gen() {
  static GeneratorModel g{GeneratorConfig{}};
  return g;
}
const FeatureExtractor& shared_fe() {
  static FeatureExtractor fe(7);
  return fe;
}
std::vector<Tensor> sample_images(int n, std::uint64_t seed) {
  const auto& g = shared_gen();
  std::vector<Tensor> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i)
    out.push_back(g.synthesize(g.map(g.sample_z(derive_seed(seed, static_cast<std::uint64_t>(i))))));
  return out;
}
}  // namespace

TEST_CASE("distance is zero on identical images and symmetric") {
  const auto& fe = shared_fe();
  auto imgs = sample_images(6, 100);
  for (const auto& x : imgs) CHECK(fe.distance(x, x) == 0.0);
  for (size_t i = 0; i + 1 < imgs.size(); i += 2) {
    double ab = fe.distance(imgs[i], imgs[i + 1]);
    double ba = fe.distance(imgs[i + 1], imgs[i]);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
    CHECK(ab >= 0.0);
  }
  CHECK_THROWS_AS(fe.distance(imgs[0], Tensor::zeros({3, 16, 16})), Error);
}

TEST_CASE("distance grows with noise amplitude") {
  const auto& fe = shared_fe();
  auto imgs = sample_images(50, 200);
  Rng rng(9);
  int monotone = 0;
  for (const auto& x : imgs) {
    Tensor noise = rng.uniform_tensor(x.shape, -1.0, 1.0);
    double prev = -1.0;
    bool ok = true;
    for (double eps : {0.01, 0.05, 0.1}) {
      Tensor y = x;
      y.data += eps * noise.data;
      y.data = y.data.cwiseMax(0.0).cwiseMin(1.0);
      double d = fe.distance(x, y);
      ok = ok && d > prev;
      prev = d;
    }
    if (ok) ++monotone;
  }
  CHECK(monotone == 50);
}

TEST_CASE("distance agrees with the unrolled feature pipeline") {
  const auto& fe = shared_fe();
  auto imgs = sample_images(2, 300);
  auto [f1x, f2x] = fe.features(imgs[0]);
  auto [f1y, f2y] = fe.features(imgs[1]);
  double manual = (f1x.data - f1y.data).square().mean() + (f2x.data - f2y.data).square().mean();
  CHECK(fe.distance(imgs[0], imgs[1]) == doctest::Approx(manual).epsilon(1e-12));
}

TEST_CASE("benchmark: identity round-trip gives exactly (0, 0)") {
  const auto& fe = shared_fe();
  auto imgs = sample_images(10, 400);
  auto stats = reconstruction_benchmark(fe, [](const Tensor& x) { return x; }, imgs, 10);
  CHECK(stats.mean == 0.0);
  CHECK(stats.ci_low == 0.0);
  CHECK(stats.ci_high == 0.0);
  CHECK(stats.n == 10);
  CHECK_THROWS_AS(reconstruction_benchmark(fe, [](const Tensor& x) { return x; }, imgs, 0), Error);
  CHECK_THROWS_AS(reconstruction_benchmark(fe, [](const Tensor& x) { return x; }, imgs, 11), Error);
}

TEST_CASE("benchmark: full-rank PCA on its own training data is lossless") {
  const auto& fe = shared_fe();
  const int n = 24;  // full rank needs d' >= n - 1 for centered data
  auto imgs = sample_images(n, 500);
  MatrixRM data(n, 3 * 32 * 32);
  for (int i = 0; i < n; ++i) data.row(i) = imgs[i].data.matrix().transpose();
  PcaModel pca = pca_fit_incremental({data}, n - 1);

  auto roundtrip = [&](const Tensor& x) {
    Eigen::VectorXd rec = pca.reconstruct(pca.project(x.data.matrix()));
    Tensor out = Tensor::zeros(x.shape);
    out.data = rec.array();
    return out;
  };
  auto stats = reconstruction_benchmark(fe, roundtrip, imgs, n);
  CHECK(stats.mean < 1e-8);
}

TEST_CASE("extractor is a pure function of its seed") {
  FeatureExtractor a(7), b(7), c(8);
  auto imgs = sample_images(2, 600);
  CHECK(a.distance(imgs[0], imgs[1]) == b.distance(imgs[0], imgs[1]));
  CHECK(a.distance(imgs[0], imgs[1]) != c.distance(imgs[0], imgs[1]));
}
