#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lfl/classifiers.hpp"
#include "lfl/rng.hpp"

using namespace lfl;

namespace {

// Four Gaussian clusters in XOR arrangement: opposite corners share a label.
void make_xor(Index n, std::uint64_t seed, MatrixRM& x, std::vector<int>& y) {
  Rng rng(seed);
  x.resize(n, 2);
  y.resize(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) {
    int cx = static_cast<int>(rng.uniform_index(2)), cy = static_cast<int>(rng.uniform_index(2));
    x(i, 0) = (cx ? 2.0 : -2.0) + 0.4 * rng.normal();
    x(i, 1) = (cy ? 2.0 : -2.0) + 0.4 * rng.normal();
    y[static_cast<size_t>(i)] = cx ^ cy;
  }
}

// Linearly separable blobs along the first axis.
void make_blobs(Index n, std::uint64_t seed, MatrixRM& x, std::vector<int>& y) {
  Rng rng(seed);
  x.resize(n, 2);
  y.resize(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) {
    int c = static_cast<int>(rng.uniform_index(2));
    x(i, 0) = (c ? 1.5 : -1.5) + 0.5 * rng.normal();
    x(i, 1) = rng.normal();
    y[static_cast<size_t>(i)] = c;
  }
}

double accuracy(const Classifier& m, const MatrixRM& x, const std::vector<int>& y) {
  Index hits = 0;
  for (Index i = 0; i < x.rows(); ++i) {
    int pred = m.score(x.row(i).transpose()) > 0.5 ? 1 : 0;
    hits += pred == y[static_cast<size_t>(i)];
  }
  return static_cast<double>(hits) / static_cast<double>(x.rows());
}

}  // namespace

TEST_CASE("forest memorizes one sample per class and rejects one class") {
  MatrixRM x(2, 3);
  x << 0, 0, 0, 1, 1, 1;
  std::vector<int> y = {0, 1};
  ForestConfig fc;
  fc.n_estimators = 25;
  RandomForestModel m = train_random_forest(x, y, fc);
  CHECK(accuracy(m, x, y) == 1.0);

  std::vector<int> ones = {1, 1};
  CHECK_THROWS_AS(train_random_forest(x, ones, fc), Error);
}

TEST_CASE("forest solves the XOR layout") {
  MatrixRM xtr, xte;
  std::vector<int> ytr, yte;
  make_xor(400, 1, xtr, ytr);
  make_xor(200, 2, xte, yte);
  ForestConfig fc;
  fc.n_estimators = 100;
  fc.seed = 3;
  RandomForestModel m = train_random_forest(xtr, ytr, fc);
  CHECK(accuracy(m, xte, yte) > 0.95);
  CHECK(accuracy(m, xtr, ytr) >= accuracy(m, xte, yte));
}

TEST_CASE("forest scoring is deterministic and unanimous trees saturate") {
  MatrixRM x(10, 1);
  std::vector<int> y(10);
  for (Index i = 0; i < 10; ++i) {
    x(i, 0) = static_cast<double>(i);
    y[static_cast<size_t>(i)] = i < 5 ? 0 : 1;
  }
  ForestConfig fc;
  fc.n_estimators = 50;
  fc.seed = 9;
  RandomForestModel m = train_random_forest(x, y, fc);
  Eigen::VectorXd deep_fake(1), deep_real(1);
  deep_fake << 9.0;
  deep_real << 0.0;
  CHECK(m.score(deep_fake) == 1.0);  // every tree votes fake far inside the class
  // A bootstrap can draw a single-class resample, so allow a stray tree here.
  CHECK(m.score(deep_real) < 0.1);
  CHECK(m.score(deep_fake) == m.score(deep_fake));
}

TEST_CASE("forest variance shrinks (or holds) as trees are added") {
  MatrixRM xtr, xte;
  std::vector<int> ytr, yte;
  make_xor(300, 11, xtr, ytr);
  make_xor(200, 12, xte, yte);
  auto acc_std = [&](Index trees) {
    std::vector<double> accs;
    for (std::uint64_t s = 0; s < 5; ++s) {
      ForestConfig fc;
      fc.n_estimators = trees;
      fc.seed = s;
      accs.push_back(accuracy(train_random_forest(xtr, ytr, fc), xte, yte));
    }
    double mean = 0.0, var = 0.0;
    for (double a : accs) mean += a;
    mean /= 5.0;
    for (double a : accs) var += (a - mean) * (a - mean);
    return std::sqrt(var / 5.0);
  };
  CHECK(acc_std(200) <= acc_std(20) + 1e-12);
}

TEST_CASE("logistic regression learns separable data from zero init") {
  MatrixRM xtr, xte;
  std::vector<int> ytr, yte;
  make_blobs(300, 21, xtr, ytr);
  make_blobs(200, 22, xte, yte);

  TrainConfig cfg;
  CHECK(cfg.learning_rate == 5e-4);
  CHECK(cfg.epochs == 200);
  CHECK(cfg.batch_size == 32);
  cfg.learning_rate = 0.05;  // separable toy data converges fast at a larger step
  LogisticModel m = train_logistic(xtr, ytr, cfg);
  CHECK(accuracy(m, xte, yte) > 0.97);

  // Zero weights score 0.5 everywhere.
  LogisticModel zero;
  zero.weights = Eigen::VectorXd::Zero(2);
  zero.std_ = Standardizer::fit(xtr);
  CHECK(zero.score(xte.row(0).transpose()) == 0.5);

  std::vector<int> ones(ytr.size(), 1);
  CHECK_THROWS_AS(train_logistic(xtr, ones, cfg), Error);
}

TEST_CASE("class swap flips every logistic decision") {
  MatrixRM xtr;
  std::vector<int> ytr;
  make_blobs(200, 31, xtr, ytr);
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  LogisticModel a = train_logistic(xtr, ytr, cfg);
  std::vector<int> flipped(ytr.size());
  for (size_t i = 0; i < ytr.size(); ++i) flipped[i] = 1 - ytr[i];
  LogisticModel b = train_logistic(xtr, flipped, cfg);
  for (Index i = 0; i < 50; ++i) {
    double sa = a.score(xtr.row(i).transpose()), sb = b.score(xtr.row(i).transpose());
    CHECK((sa > 0.5) == (sb < 0.5));
  }
}

TEST_CASE("mlp architectures have the pinned hidden sizes") {
  CHECK(MlpModel::hidden_sizes(MlpArch::mlp2) == std::vector<Index>{512});
  CHECK(MlpModel::hidden_sizes(MlpArch::mlp5) == std::vector<Index>({2048, 512, 512, 512}));
}

TEST_CASE("mlp2 solves XOR where the linear model cannot") {
  MatrixRM xtr, xte;
  std::vector<int> ytr, yte;
  make_xor(400, 41, xtr, ytr);
  make_xor(200, 42, xte, yte);
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.epochs = 60;
  cfg.seed = 5;
  MlpModel m = train_mlp(xtr, ytr, MlpArch::mlp2, cfg);
  CHECK(accuracy(m, xte, yte) > 0.95);
  LogisticModel lin = train_logistic(xtr, ytr, cfg);
  CHECK(accuracy(lin, xte, yte) < 0.75);  // XOR defeats a linear boundary
  for (Index i = 0; i < 5; ++i) {
    double s = m.score(xte.row(i).transpose());
    CHECK(s > 0.0);
    CHECK(s < 1.0);
  }
}

TEST_CASE("mlp gradients agree with finite differences") {
  // A scaled-down copy of the training graph shape: the same op sequence
  // (matmul, add_bias, relu chain, bce) at probe-able size.
  Graph g;
  int x = g.input("x", {4, 3});
  int y = g.input("y", {4, 1});
  int w0 = g.input("w0", {3, 8});
  int b0 = g.input("b0", {8});
  int w1 = g.input("w1", {8, 1});
  int b1 = g.input("b1", {1});
  int h = g.relu(g.add_bias(g.matmul(x, w0), b0));
  int logits = g.add_bias(g.matmul(h, w1), b1);
  g.mark_output("loss", g.bce_logits(logits, y));

  Rng rng(7);
  TensorMap in;
  in["x"] = rng.normal_tensor({4, 3});
  Tensor labels = Tensor::zeros({4, 1});
  labels.data(1) = 1.0;
  labels.data(3) = 1.0;
  in["y"] = labels;
  in["w0"] = rng.normal_tensor({3, 8});
  in["b0"] = rng.normal_tensor({8});
  in["w1"] = rng.normal_tensor({8, 1});
  in["b1"] = rng.normal_tensor({1});
  auto report = check_gradients(g, in, "loss", {"w0", "b0", "w1", "b1"}, 1e-4);
  CHECK(report.passed());
}

TEST_CASE("models round-trip through the tensor container") {
  MatrixRM xtr;
  std::vector<int> ytr;
  make_xor(200, 51, xtr, ytr);

  ForestConfig fc;
  fc.n_estimators = 30;
  fc.seed = 1;
  RandomForestModel rf = train_random_forest(xtr, ytr, fc);
  RandomForestModel rf2 = RandomForestModel::from_tensors(rf.to_tensors());
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.epochs = 30;
  LogisticModel lr = train_logistic(xtr, ytr, cfg);
  LogisticModel lr2 = LogisticModel::from_tensors(lr.to_tensors());
  MlpModel mlp = train_mlp(xtr, ytr, MlpArch::mlp2, cfg);
  MlpModel mlp2 = MlpModel::from_tensors(mlp.to_tensors());
  CHECK(mlp2.kind() == ClassifierKind::mlp2);

  for (Index i = 0; i < 20; ++i) {
    Eigen::VectorXd v = xtr.row(i).transpose();
    CHECK(rf.score(v) == rf2.score(v));
    CHECK(lr.score(v) == lr2.score(v));
    CHECK(mlp.score(v) == mlp2.score(v));
  }
}

TEST_CASE("training is deterministic in the seed") {
  MatrixRM xtr;
  std::vector<int> ytr;
  make_xor(150, 61, xtr, ytr);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.seed = 4;
  auto a = train_classifier(ClassifierKind::mlp2, xtr, ytr, 4, cfg);
  auto b = train_classifier(ClassifierKind::mlp2, xtr, ytr, 4, cfg);
  auto c = train_classifier(ClassifierKind::random_forest, xtr, ytr, 4, cfg, 20);
  auto d = train_classifier(ClassifierKind::random_forest, xtr, ytr, 4, cfg, 20);
  for (Index i = 0; i < 10; ++i) {
    Eigen::VectorXd v = xtr.row(i).transpose();
    CHECK(a->score(v) == b->score(v));
    CHECK(c->score(v) == d->score(v));
  }
}

TEST_CASE("kind names round-trip") {
  for (auto k : {ClassifierKind::random_forest, ClassifierKind::logistic, ClassifierKind::mlp2,
                 ClassifierKind::mlp5})
    CHECK(classifier_kind_from_name(classifier_kind_name(k)) == k);
  CHECK_THROWS_AS(classifier_kind_from_name("svm"), Error);
}
