#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <numeric>

#include "lfl/analysis.hpp"

using namespace lfl;

namespace {

// Two separable Gaussian blobs encoded directly; no images involved.
EncodedDataset make_blob_codes(Index dim, Index n_train, Index n_test, double gap,
                               std::uint64_t seed, ProjectorKind kind = ProjectorKind::pca) {
  Rng rng(seed);
  EncodedDataset out;
  out.kind = kind;
  auto fill = [&](EncodedSplit& s, Index n) {
    s.x.resize(n, dim);
    for (Index i = 0; i < n; ++i) {
      int label = static_cast<int>(i % 2);
      double mu = label == 1 ? gap : -gap;
      for (Index j = 0; j < dim; ++j) s.x(i, j) = mu + rng.normal();
      s.y.push_back(label);
      s.source.push_back(i);
    }
  };
  fill(out.train, n_train);
  fill(out.test, n_test);
  return out;
}

}  // namespace

TEST_CASE("parallel_for covers every index exactly once for any worker count") {
  const Index n = 101;
  std::vector<int> base(n, 0);
  parallel_for(n, 1, [&](Index i) { base[static_cast<size_t>(i)] += 1; });
  for (Index w : {2, 3, 7}) {
    std::vector<int> hits(n, 0);
    parallel_for(n, w, [&](Index i) { hits[static_cast<size_t>(i)] += 1; });
    CHECK(hits == base);
  }
  parallel_for(0, 4, [&](Index) { FAIL("no work expected"); });
}

TEST_CASE("parallel_for propagates worker exceptions") {
  CHECK_THROWS_AS(parallel_for(10, 3,
                               [&](Index i) {
                                 if (i == 7) throw Error("boom");
                               }),
                  Error);
}

TEST_CASE("cell_seed separates cells and tracks the run seed") {
  std::uint64_t a = cell_seed(0, "pca", "rf");
  CHECK(a == cell_seed(0, "pca", "rf"));
  CHECK(a != cell_seed(1, "pca", "rf"));
  CHECK(a != cell_seed(0, "vq", "rf"));
  CHECK(a != cell_seed(0, "pca", "lr"));
}

TEST_CASE("benchmark_grid emits one complete row per cell in nesting order") {
  TrainConfig tc;
  tc.epochs = 20;
  std::vector<EncodedDataset> data = {make_blob_codes(4, 60, 40, 1.5, 3, ProjectorKind::pca),
                                      make_blob_codes(4, 60, 40, 1.5, 4, ProjectorKind::vq)};
  std::vector<ClassifierKind> clfs = {ClassifierKind::random_forest, ClassifierKind::logistic};
  std::vector<std::uint64_t> seeds = {0, 1};
  auto rows = benchmark_grid(data, clfs, seeds, tc, 20, Priors(0.5), 1);

  REQUIRE(rows.size() == 8);
  CHECK(rows[0].projector == "pca");
  CHECK(rows[0].classifier == "rf");
  CHECK(rows[0].seed == 0);
  CHECK(rows[1].seed == 1);
  CHECK(rows[2].classifier == "lr");
  CHECK(rows[4].projector == "vq");
  for (const auto& r : rows) {
    CHECK(r.train_size == 60);
    CHECK(r.tp + r.fp + r.tn + r.fn == 40);  // every test point lands in one cell
    CHECK(r.accuracy ==
          doctest::Approx(static_cast<double>(r.tp + r.tn) / 40.0).epsilon(1e-12));
    CHECK(r.accuracy > 0.8);  // blobs are well separated
  }
}

TEST_CASE("benchmark_grid is invariant to the worker count") {
  TrainConfig tc;
  tc.epochs = 15;
  std::vector<EncodedDataset> data = {make_blob_codes(4, 40, 30, 1.0, 5)};
  std::vector<ClassifierKind> clfs = {ClassifierKind::random_forest, ClassifierKind::logistic};
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  auto a = benchmark_grid(data, clfs, seeds, tc, 20, Priors(0.5), 1);
  auto b = benchmark_grid(data, clfs, seeds, tc, 20, Priors(0.5), 4);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].accuracy == b[i].accuracy);
    CHECK(a[i].tp == b[i].tp);
    CHECK(a[i].fn == b[i].fn);
  }
}

TEST_CASE("single-cell grid collapses to one row") {
  TrainConfig tc;
  tc.epochs = 10;
  std::vector<EncodedDataset> data = {make_blob_codes(3, 30, 20, 1.5, 6)};
  auto rows = benchmark_grid(data, {ClassifierKind::logistic}, {0}, tc, 20, Priors(0.5), 1);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].projector == "pca");
  CHECK(rows[0].classifier == "lr");
}

TEST_CASE("ablation at the full training size reproduces the grid row") {
  TrainConfig tc;
  tc.epochs = 20;
  EncodedDataset data = make_blob_codes(4, 60, 40, 1.0, 7);
  std::vector<std::uint64_t> seeds = {0, 1};
  auto grid = benchmark_grid({data}, {ClassifierKind::random_forest}, seeds, tc, 20, Priors(0.5), 1);
  auto abl = training_size_ablation(data, {20, 60}, ClassifierKind::random_forest, seeds, tc, 20,
                                    Priors(0.5), 1);
  REQUIRE(abl.size() == 4);
  CHECK(abl[0].train_size == 20);
  CHECK(abl[2].train_size == 60);
  // size == full training set: bit-for-bit the benchmark cell.
  CHECK(abl[2].accuracy == grid[0].accuracy);
  CHECK(abl[2].tp == grid[0].tp);
  CHECK(abl[3].accuracy == grid[1].accuracy);
  CHECK(abl[3].fn == grid[1].fn);
}

TEST_CASE("ablation subsamples are stratified") {
  TrainConfig tc;
  tc.epochs = 5;
  EncodedDataset data = make_blob_codes(3, 50, 20, 1.0, 8);
  auto rows = training_size_ablation(data, {10}, ClassifierKind::logistic, {0}, tc, 20,
                                     Priors(0.5), 1);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].train_size == 10);
}

TEST_CASE("channel study on label-free noise hovers at chance") {
  const Index channels = 6, d = 4;
  EncodedDataset codes = make_blob_codes(channels * d, 160, 160, 0.0, 9,
                                         ProjectorKind::gan_inversion);
  TrainConfig tc;
  tc.epochs = 10;
  ChannelReport r = channel_importance(codes, channels, ClassifierKind::random_forest, {0, 1, 2},
                                       tc, 20, Priors(0.5), 2);
  CHECK(r.channels == channels);
  CHECK(r.accuracy.rows() == 3);
  CHECK(r.accuracy.cols() == channels);
  REQUIRE(r.median.size() == static_cast<size_t>(channels));
  for (double m : r.median) CHECK(m == doctest::Approx(0.5).epsilon(0.2));
}

TEST_CASE("channel study rejects wrong inputs") {
  TrainConfig tc;
  EncodedDataset not_gan = make_blob_codes(24, 20, 20, 1.0, 10, ProjectorKind::pca);
  CHECK_THROWS_AS(channel_importance(not_gan, 6, ClassifierKind::random_forest, {0}, tc, 20,
                                     Priors(0.5), 1),
                  Error);
  EncodedDataset ragged = make_blob_codes(25, 20, 20, 1.0, 11, ProjectorKind::gan_inversion);
  CHECK_THROWS_AS(channel_importance(ragged, 6, ClassifierKind::random_forest, {0}, tc, 20,
                                     Priors(0.5), 1),
                  Error);
}

TEST_CASE("csv emission follows the fixed schema") {
  BenchmarkRow r;
  r.projector = "pca";
  r.classifier = "rf";
  r.train_size = 100;
  r.seed = 3;
  r.accuracy = 0.8125;
  r.tp = 40;
  r.fp = 5;
  r.tn = 25;
  r.fn = 10;
  std::string csv = rows_to_csv({r});
  CHECK(csv == "projector,classifier,train_size,seed,accuracy,tp,fp,tn,fn\n"
               "pca,rf,100,3,0.812500,40,5,25,10\n");
}

TEST_CASE("markdown emission has header, rule, and one line per row") {
  BenchmarkRow r;
  r.projector = "vq";
  r.classifier = "lr";
  std::string md = rows_to_markdown({r, r, r});
  CHECK(std::count(md.begin(), md.end(), '\n') == 5);
  CHECK(md.find("| projector |") == 0);
}

TEST_CASE("plotdata groups consecutive rows into series") {
  BenchmarkRow a, b;
  a.projector = "pca";
  a.classifier = "rf";
  b.projector = "gan";
  b.classifier = "rf";
  std::string plot = rows_to_plotdata({a, a, b});
  CHECK(plot.find("# series pca_rf\n") != std::string::npos);
  CHECK(plot.find("# series gan_rf\n") != std::string::npos);
  CHECK(std::count(plot.begin(), plot.end(), '\n') == 5);
}

TEST_CASE("emit_report dispatches on format and rejects the rest") {
  BenchmarkRow r;
  r.projector = "pca";
  r.classifier = "rf";
  CHECK(emit_report({r}, "csv") == rows_to_csv({r}));
  CHECK(emit_report({r}, "markdown") == rows_to_markdown({r}));
  CHECK(emit_report({r}, "plotdata") == rows_to_plotdata({r}));
  CHECK_THROWS_AS(emit_report({r}, "yaml"), Error);
  CHECK_THROWS_AS(emit_report({}, "csv"), Error);
}

TEST_CASE("median_of handles odd and even counts") {
  CHECK(median_of({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median_of({4.0, 1.0, 3.0, 2.0}) == doctest::Approx(2.5));
}
