#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lfl/decision.hpp"
#include "lfl/rng.hpp"

using namespace lfl;

namespace {
MatrixRM gaussian_samples(Index n, double mu, std::uint64_t seed) {
  Rng rng(seed);
  MatrixRM x(n, 1);
  for (Index i = 0; i < n; ++i) x(i, 0) = mu + rng.normal();
  return x;
}
Eigen::VectorXd pt(double v) {
  Eigen::VectorXd p(1);
  p(0) = v;
  return p;
}
}  // namespace

TEST_CASE("priors validate and derive the genuine side") {
  CHECK(Priors(0.3).pi_g() == doctest::Approx(0.7));
  CHECK_THROWS_AS(Priors(0.0), Error);
  CHECK_THROWS_AS(Priors(1.0), Error);
  CHECK_THROWS_AS(Priors(1.5), Error);
}

TEST_CASE("histogram density normalizes and covers the padded range") {
  MatrixRM x = gaussian_samples(2000, 0.0, 1);
  DensityModel m = DensityModel::fit(x, 40);
  CHECK(std::abs(m.total_integral() - 1.0) < 1e-9);

  // Single bin: uniform over the padded range.
  DensityModel u = DensityModel::fit(x, 1);
  double width = u.hi(0) - u.lo(0);
  CHECK(u.density(pt(0.0)) == doctest::Approx(1.0 / width));
  CHECK(u.density(pt(u.lo(0) - 1.0)) == 0.0);

  // 100k samples, 50 bins: close to the true normal in total variation.
  MatrixRM big = gaussian_samples(100000, 0.0, 2);
  DensityModel h = DensityModel::fit(big, 50);
  double tv = 0.0;
  double bin_w = (h.hi(0) - h.lo(0)) / 50.0;
  for (Index b = 0; b < 50; ++b) {
    double lo = h.lo(0) + bin_w * static_cast<double>(b);
    double mid = lo + 0.5 * bin_w;
    double true_mass = 0.5 * (std::erf((lo + bin_w) / std::sqrt(2.0)) - std::erf(lo / std::sqrt(2.0)));
    tv += 0.5 * std::abs(h.density(pt(mid)) * bin_w - true_mass);
  }
  CHECK(tv < 0.02);
}

TEST_CASE("2-D histograms work and higher dimensions are rejected") {
  Rng rng(3);
  MatrixRM x(500, 2);
  for (Index i = 0; i < 500; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = rng.normal();
  }
  DensityModel m = DensityModel::fit(x, 12);
  CHECK(std::abs(m.total_integral() - 1.0) < 1e-9);
  Eigen::VectorXd p(2);
  p << 0.0, 0.0;
  CHECK(m.density(p) > 0.0);

  MatrixRM bad(10, 3);
  bad.setZero();
  CHECK_THROWS_AS(DensityModel::fit(bad, 4), Error);
}

TEST_CASE("criterion arithmetic, sentinel, and undefined point") {
  // Uniform densities on [0,1] built from the endpoints of the range.
  MatrixRM a(2, 1), b(2, 1);
  a << 0.0, 1.0;
  b << 0.0, 1.0;
  DensityModel pm = DensityModel::fit(a, 1), pg = DensityModel::fit(b, 1);
  Priors half(0.5);
  CHECK(criterion_value(pt(0.5), pm, pg, half) == doctest::Approx(0.0));  // unit ratio, unit odds

  // p_m/p_g = 2 via a support twice as concentrated.
  MatrixRM narrow(2, 1);
  narrow << 0.25, 0.75;  // padded width half of pg's
  DensityModel pm2 = DensityModel::fit(narrow, 1);
  double ratio = pm2.density(pt(0.5)) / pg.density(pt(0.5));
  CHECK(criterion_value(pt(0.5), pm2, pg, half) == doctest::Approx(ratio - 1.0));

  // Outside pg's support but inside pm's: +infinity. Outside both: error.
  MatrixRM wide(2, 1);
  wide << -10.0, 10.0;
  DensityModel pm3 = DensityModel::fit(wide, 1);
  CHECK(std::isinf(criterion_value(pt(5.0), pm3, pg, half)));
  CHECK_THROWS_AS(criterion_value(pt(50.0), pm3, pg, half), Error);
}

TEST_CASE("mean error rate matches its closed forms") {
  std::vector<ScoredSample> s;
  for (int i = 0; i < 50; ++i) s.push_back({0.1, 0});
  for (int i = 0; i < 50; ++i) s.push_back({0.9, 1});
  Priors p(0.3);
  CHECK(empirical_mean_error({0.5}, s, p) == 0.0);  // perfect separation

  // Always-genuine rule: J = pi_m.
  CHECK(empirical_mean_error({2.0}, s, p) == doctest::Approx(0.3));
  // Always-fake rule: J = pi_g.
  CHECK(empirical_mean_error({-1.0}, s, p) == doctest::Approx(0.7));

  // Random scores, balanced priors: J near 0.5.
  Rng rng(9);
  std::vector<ScoredSample> noise;
  const int n = 4000;
  for (int i = 0; i < n; ++i) noise.push_back({rng.uniform(), i % 2});
  double j = empirical_mean_error({0.5}, noise, Priors(0.5));
  CHECK(std::abs(j - 0.5) < 3.0 / std::sqrt(static_cast<double>(n)));

  std::vector<ScoredSample> one_class = {{0.2, 0}};
  CHECK_THROWS_AS(empirical_mean_error({0.5}, one_class, p), Error);
}

TEST_CASE("calibrated thresholds equal the genuine prior and decrease in pi_m") {
  CHECK(calibrate_threshold(Priors(0.5)).threshold == doctest::Approx(0.5));
  CHECK(calibrate_threshold(Priors(0.1)).threshold == doctest::Approx(0.9));
  double prev = 2.0;
  for (double pm = 0.1; pm < 0.95; pm += 0.1) {
    double t = calibrate_threshold(Priors(pm)).threshold;
    CHECK(t < prev);
    prev = t;
  }
  // Ties go to genuine.
  DecisionRule r{0.5};
  CHECK_FALSE(r.decide_fake(0.5));
  CHECK(r.decide_fake(0.5 + 1e-12));
}

TEST_CASE("F = 0 is Bayes-optimal on the two-Gaussian task") {
  const Index n = 20000;
  MatrixRM genuine = gaussian_samples(n, -1.0, 11);
  MatrixRM fake = gaussian_samples(n, 1.0, 12);
  DensityModel pg = DensityModel::fit(genuine, 50);
  DensityModel pm = DensityModel::fit(fake, 50);

  // Scores are the raw 1-D points; rules threshold them directly.
  std::vector<ScoredSample> samples;
  for (Index i = 0; i < n; ++i) {
    samples.push_back({genuine(i, 0), 0});
    samples.push_back({fake(i, 0), 1});
  }

  double lo = -4.0, hi = 4.0;
  const int grid = 200;
  double step = (hi - lo) / static_cast<double>(grid - 1);
  double prev_boundary = 1e9;
  for (double pi_m : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    Priors priors(pi_m);
    // F crosses zero where the histogram ratio reaches the prior odds.
    double f_boundary = hi;
    for (int i = 0; i < grid; ++i) {
      double v = lo + step * static_cast<double>(i);
      double f;
      try {
        f = criterion_value(pt(v), pm, pg, priors);
      } catch (const Error&) {
        continue;
      }
      if (std::isfinite(f) && f > 0.0) {
        f_boundary = v;
        break;
      }
    }
    // Best threshold over the same grid by exhaustive search.
    double best_j = 1e9, best_t = 0.0;
    for (int i = 0; i < grid; ++i) {
      double t = lo + step * static_cast<double>(i);
      double j = empirical_mean_error({t}, samples, priors);
      if (j < best_j) {
        best_j = j;
        best_t = t;
      }
    }
    // The F = 0 threshold lands within one grid step of the empirical optimum.
    CHECK(std::abs(f_boundary - best_t) <= step + 1e-12);
    (void)best_j;
    // The analytic optimum is t* = ln(pi_g/pi_m)/2; stay within one bin of it.
    double analytic = 0.5 * std::log(priors.pi_g() / priors.pi_m);
    CHECK(std::abs(f_boundary - analytic) < 0.25);
    CHECK(f_boundary < prev_boundary);  // likelier fakes demand less evidence
    prev_boundary = f_boundary;
  }
}

TEST_CASE("scaling both densities leaves the decision sign unchanged") {
  MatrixRM genuine = gaussian_samples(5000, -1.0, 21);
  MatrixRM fake = gaussian_samples(5000, 1.0, 22);
  DensityModel pg = DensityModel::fit(genuine, 30);
  DensityModel pm = DensityModel::fit(fake, 30);
  Priors p(0.4);
  // Density ratios are scale-free: compare the sign of F against the ratio
  // test done directly (the histogram densities already integrate to one, so
  // this checks the ratio form rather than any absolute normalization).
  for (double v = -2.0; v <= 2.0; v += 0.25) {
    double dm = pm.density(pt(v)), dg = pg.density(pt(v));
    if (dg == 0.0) continue;
    double f = criterion_value(pt(v), pm, pg, p);
    CHECK((f > 0.0) == (dm / dg > p.pi_g() / p.pi_m));
  }
}
