#include "lfl/decision.hpp"

#include <cmath>
#include <limits>

namespace lfl {

DensityModel DensityModel::fit(const MatrixRM& samples, Index bins) {
  if (samples.rows() < 1) throw Error("decision: density fit needs at least one sample");
  if (bins < 1) throw Error("decision: bins must be positive");
  Index dims = samples.cols();
  if (dims < 1 || dims > 2) throw Error("decision: densities support 1 or 2 dimensions only");

  DensityModel m;
  m.bins_ = bins;
  for (Index d = 0; d < dims; ++d) {
    double lo = samples.col(d).minCoeff(), hi = samples.col(d).maxCoeff();
    double pad = 0.05 * (hi - lo);
    if (pad == 0.0) pad = 0.5;  // degenerate range: give the bin real width
    m.lo_.push_back(lo - pad);
    m.hi_.push_back(hi + pad);
  }

  Index n_cells = dims == 1 ? bins : bins * bins;
  Eigen::ArrayXd counts = Eigen::ArrayXd::Zero(n_cells);
  auto cell_of = [&](double v, Index d) {
    double t = (v - m.lo_[static_cast<size_t>(d)]) /
               (m.hi_[static_cast<size_t>(d)] - m.lo_[static_cast<size_t>(d)]);
    Index b = static_cast<Index>(t * static_cast<double>(bins));
    return std::min(bins - 1, std::max<Index>(0, b));
  };
  for (Index i = 0; i < samples.rows(); ++i) {
    Index c = cell_of(samples(i, 0), 0);
    if (dims == 2) c = c * bins + cell_of(samples(i, 1), 1);
    counts(c) += 1.0;
  }

  double vol = 1.0;
  for (Index d = 0; d < dims; ++d)
    vol *= (m.hi_[static_cast<size_t>(d)] - m.lo_[static_cast<size_t>(d)]) /
           static_cast<double>(bins);
  m.cells_ = counts / (static_cast<double>(samples.rows()) * vol);
  return m;
}

double DensityModel::density(const Eigen::VectorXd& point) const {
  if (point.size() != dims()) throw Error("decision: density point dimension mismatch");
  Index c = 0;
  for (Index d = 0; d < dims(); ++d) {
    double v = point(d);
    if (v < lo_[static_cast<size_t>(d)] || v > hi_[static_cast<size_t>(d)]) return 0.0;
    double t = (v - lo_[static_cast<size_t>(d)]) /
               (hi_[static_cast<size_t>(d)] - lo_[static_cast<size_t>(d)]);
    Index b = std::min(bins_ - 1, std::max<Index>(0, static_cast<Index>(t * static_cast<double>(bins_))));
    c = c * bins_ + b;
  }
  return cells_(c);
}

double DensityModel::total_integral() const {
  double vol = 1.0;
  for (Index d = 0; d < dims(); ++d)
    vol *= (hi_[static_cast<size_t>(d)] - lo_[static_cast<size_t>(d)]) / static_cast<double>(bins_);
  return cells_.sum() * vol;
}

double criterion_value(const Eigen::VectorXd& x, const DensityModel& p_m,
                       const DensityModel& p_g, const Priors& priors) {
  double dm = p_m.density(x), dg = p_g.density(x);
  if (dg == 0.0) {
    if (dm > 0.0) return std::numeric_limits<double>::infinity();
    throw Error("decision: criterion undefined where both densities vanish");
  }
  return dm / dg - priors.pi_g() / priors.pi_m;
}

double empirical_mean_error(const DecisionRule& rule, const std::vector<ScoredSample>& samples,
                            const Priors& priors) {
  Index n_g = 0, n_m = 0, false_alarm = 0, miss = 0;
  for (const auto& s : samples) {
    if (s.label) {
      ++n_m;
      if (!rule.decide_fake(s.score)) ++miss;
    } else {
      ++n_g;
      if (rule.decide_fake(s.score)) ++false_alarm;
    }
  }
  if (n_g == 0 || n_m == 0) throw Error("decision: mean error needs both classes");
  return priors.pi_g() * static_cast<double>(false_alarm) / static_cast<double>(n_g) +
         priors.pi_m * static_cast<double>(miss) / static_cast<double>(n_m);
}

DecisionRule calibrate_threshold(const Priors& priors) { return {priors.pi_g()}; }

}  // namespace lfl
