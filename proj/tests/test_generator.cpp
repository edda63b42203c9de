#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lfl/generator.hpp"

using namespace lfl;

namespace {
const GeneratorModel& shared_gen() {
  static GeneratorModel g{GeneratorConfig{}};
  return g;
}
double mse(const Tensor& a, const Tensor& b) {
  return (a.data - b.data).square().mean();
}
}  // namespace

TEST_CASE("sample_z is deterministic and standard normal") {
  const auto& g = shared_gen();
  Tensor a = g.sample_z(5), b = g.sample_z(5), c = g.sample_z(6);
  CHECK((a.data == b.data).all());
  CHECK_FALSE((a.data == c.data).all());
  CHECK(a.shape == Shape{32});

  // Monte Carlo: per-coordinate mean within 0.05 of 0, variance within 0.1 of 1.
  const int n = 10000;
  Eigen::ArrayXd sum = Eigen::ArrayXd::Zero(32), sumsq = Eigen::ArrayXd::Zero(32);
  for (int i = 0; i < n; ++i) {
    Tensor z = g.sample_z(static_cast<std::uint64_t>(1000 + i));
    sum += z.data;
    sumsq += z.data.square();
  }
  Eigen::ArrayXd mean = sum / n;
  Eigen::ArrayXd var = sumsq / n - mean.square();
  CHECK(mean.abs().maxCoeff() < 0.05);
  CHECK((var - 1.0).abs().maxCoeff() < 0.1);
}

TEST_CASE("map replicates one mapping output across all channels") {
  const auto& g = shared_gen();
  Tensor z = g.sample_z(11);
  Tensor w = g.map(z);
  REQUIRE(w.shape == Shape({6, 32}));
  for (Index c = 1; c < 6; ++c)
    for (Index j = 0; j < 32; ++j) CHECK(w.at(c, j) == w.at(0, j));

  Tensor w2 = g.map(z);
  CHECK((w.data == w2.data).all());

  Tensor bad = Tensor::zeros({16});
  CHECK_THROWS_AS(g.map(bad), Error);
}

TEST_CASE("map of z = 0 equals the bias path recomputed by hand") {
  const auto& g = shared_gen();
  const auto& p = g.params();
  Tensor w = g.map(Tensor::zeros({32}));

  // Golden forward: relu(b1), relu(h1 w2 + b2), h2 w3 + b3.
  Eigen::RowVectorXd h1 = p.at("map/b1").data.matrix().transpose().cwiseMax(0.0);
  Eigen::RowVectorXd h2 =
      (h1 * p.at("map/w2").mat() + p.at("map/b2").data.matrix().transpose()).cwiseMax(0.0);
  Eigen::RowVectorXd out = h2 * p.at("map/w3").mat() + p.at("map/b3").data.matrix().transpose();

  for (Index j = 0; j < 32; ++j) CHECK(w.at(0, j) == doctest::Approx(out(j)).epsilon(1e-12));
}

TEST_CASE("synthesize produces valid, deterministic, non-constant images") {
  const auto& g = shared_gen();
  Tensor w = g.map(g.sample_z(21));
  Tensor img = g.synthesize(w);
  REQUIRE(img.shape == Shape({3, 32, 32}));
  CHECK(img.data.minCoeff() >= 0.0);
  CHECK(img.data.maxCoeff() <= 1.0);

  Tensor img2 = g.synthesize(w);
  CHECK((img.data == img2.data).all());

  CHECK_THROWS_AS(g.synthesize(Tensor::zeros({6, 16})), Error);

  // Any two codes from well-separated z give distinct images.
  int distinct = 0;
  for (int i = 0; i < 100; ++i) {
    Tensor za = g.sample_z(static_cast<std::uint64_t>(300 + 2 * i));
    Tensor zb = g.sample_z(static_cast<std::uint64_t>(301 + 2 * i));
    if ((za.data - zb.data).matrix().norm() <= 1.0) continue;
    Tensor ia = g.synthesize(g.map(za)), ib = g.synthesize(g.map(zb));
    if (mse(ia, ib) > 0.0) ++distinct;
    else FAIL_CHECK("two distant codes collapsed to one image");
  }
  CHECK(distinct > 90);
}

TEST_CASE("style_mix boundary and identity cases") {
  const auto& g = shared_gen();
  Tensor w1 = g.map(g.sample_z(31)), w2 = g.map(g.sample_z(32));

  CHECK((g.style_mix(w1, w2, 6).data == g.synthesize(w1).data).all());
  CHECK((g.style_mix(w1, w2, 0).data == g.synthesize(w2).data).all());
  for (Index c = 0; c <= 6; ++c)
    CHECK((g.style_mix(w1, w1, c).data == g.synthesize(w1).data).all());

  CHECK_THROWS_AS(g.style_mix(w1, w2, 7), Error);
  CHECK_THROWS_AS(g.style_mix(w1, w2, -1), Error);

  // An interior crossover actually mixes: differs from both parents.
  Tensor m = g.style_mix(w1, w2, 3);
  CHECK(mse(m, g.synthesize(w1)) > 0.0);
  CHECK(mse(m, g.synthesize(w2)) > 0.0);
}

TEST_CASE("every style channel reaches the image") {
  const auto& g = shared_gen();
  for (int trial = 0; trial < 3; ++trial) {
    Tensor w = g.map(g.sample_z(static_cast<std::uint64_t>(40 + trial)));
    Tensor base = g.synthesize(w);
    for (Index c = 0; c < 6; ++c) {
      Tensor wc = w;
      for (Index j = 0; j < 32; ++j) wc.at(c, j) += 0.5;
      CHECK(mse(base, g.synthesize(wc)) > 0.0);
    }
  }
}

TEST_CASE("spectral scaling keeps the code-to-pixel map gentle") {
  const auto& g = shared_gen();
  Tensor w = g.map(g.sample_z(51));
  Tensor base = g.synthesize(w);
  for (int k = 0; k < 10; ++k) {
    Tensor wp = w;
    wp.at(k % 6, (k * 7) % 32) += 1e-3;
    CHECK(mse(base, g.synthesize(wp)) < 1e-2);
  }
}

TEST_CASE("mean_w has the code shape and finite entries") {
  const auto& g = shared_gen();
  CHECK(g.mean_w().shape == g.code_shape());
  CHECK(g.mean_w().all_finite());
}

TEST_CASE("same seed rebuilds an identical generator") {
  GeneratorModel a{GeneratorConfig{}}, b{GeneratorConfig{}};
  Tensor z = a.sample_z(77);
  CHECK((a.synthesize(a.map(z)).data == b.synthesize(b.map(z)).data).all());
}
