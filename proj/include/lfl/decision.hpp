#ifndef LFL_DECISION_HPP
#define LFL_DECISION_HPP

#include <vector>

#include "lfl/tensor.hpp"

namespace lfl {

struct Priors {
  explicit Priors(double fake_prior) : pi_m(fake_prior) {
    if (!(pi_m > 0.0 && pi_m < 1.0)) throw Error("decision: pi_m must lie in (0, 1)");
  }
  double pi_m;
  double pi_g() const { return 1.0 - pi_m; }
};

// Equal-width histogram density over 1 or 2 dimensions, spanning the sample
// range padded by 5% per side; integrates to 1.
class DensityModel {
 public:
  static DensityModel fit(const MatrixRM& samples, Index bins);

  Index dims() const { return static_cast<Index>(lo_.size()); }
  double density(const Eigen::VectorXd& point) const;
  double lo(Index d) const { return lo_[static_cast<size_t>(d)]; }
  double hi(Index d) const { return hi_[static_cast<size_t>(d)]; }
  Index bins() const { return bins_; }
  double total_integral() const;  // 1 within 1e-9 by construction

 private:
  std::vector<double> lo_, hi_;
  Index bins_ = 0;
  Eigen::ArrayXd cells_;  // densities, row-major over (b0, b1)
};

// Decide fake when the scalar statistic strictly exceeds the threshold;
// ties go to genuine.
struct DecisionRule {
  double threshold = 0.5;
  bool decide_fake(double statistic) const { return statistic > threshold; }
};

struct ScoredSample {
  double score = 0.0;
  int label = 0;  // 1 = fake
};

// Likelihood-ratio criterion: p_m(x)/p_g(x) - pi_g/pi_m, fake iff positive.
// p_g = 0 with p_m > 0 yields +infinity (decide fake); both zero is an error.
double criterion_value(const Eigen::VectorXd& x, const DensityModel& p_m,
                       const DensityModel& p_g, const Priors& priors);

// Prior-weighted mean of the false-alarm rate on genuines and the miss rate
// on fakes.
double empirical_mean_error(const DecisionRule& rule, const std::vector<ScoredSample>& samples,
                            const Priors& priors);

// Score threshold realizing the likelihood-ratio criterion when the score
// approximates P(fake | x): fake iff score odds exceed the prior odds.
DecisionRule calibrate_threshold(const Priors& priors);

}  // namespace lfl

#endif
