#ifndef LFL_ANALYSIS_HPP
#define LFL_ANALYSIS_HPP

#include <functional>
#include <string>
#include <vector>

#include "lfl/classifiers.hpp"
#include "lfl/decision.hpp"
#include "lfl/projector.hpp"
#include "lfl/worldsim.hpp"

namespace lfl {

// Static interleaved work distribution; results must be written to
// preallocated per-index slots so worker count never changes the outcome.
void parallel_for(Index n, Index workers, const std::function<void(Index)>& fn);

struct EncodedSplit {
  MatrixRM x;                 // one flattened code per row
  std::vector<int> y;         // 1 = fake
  std::vector<Index> source;  // source_id per row
};

struct EncodedDataset {
  ProjectorKind kind = ProjectorKind::pca;
  EncodedSplit train, test;
};

// Projects every image of both splits; parallel over images.
EncodedDataset encode_dataset(const Projector& p, const std::vector<LabeledImage>& train,
                              const std::vector<LabeledImage>& test, Index workers);

struct BenchmarkRow {
  std::string projector;
  std::string classifier;
  Index train_size = 0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  Index tp = 0, fp = 0, tn = 0, fn = 0;
};

// Deterministic per-cell training seed shared by the grid and the ablation.
std::uint64_t cell_seed(std::uint64_t run_seed, const std::string& projector,
                        const std::string& classifier);

// Trains and evaluates one classifier on encoded splits at the calibrated
// threshold; fills a complete row.
BenchmarkRow evaluate_cell(const EncodedDataset& data, ClassifierKind clf, std::uint64_t seed,
                           const TrainConfig& train_cfg, Index forest_trees,
                           const Priors& priors);

// One row per (projector, classifier, seed), rows in that nesting order.
std::vector<BenchmarkRow> benchmark_grid(const std::vector<EncodedDataset>& datasets,
                                         const std::vector<ClassifierKind>& classifiers,
                                         const std::vector<std::uint64_t>& seeds,
                                         const TrainConfig& train_cfg, Index forest_trees,
                                         const Priors& priors, Index workers);

// One row per (size, seed); the subsample is stratified by class and
// source-disjoint. The full size reproduces the benchmark row bit-for-bit.
std::vector<BenchmarkRow> training_size_ablation(const EncodedDataset& data,
                                                 const std::vector<Index>& sizes,
                                                 ClassifierKind clf,
                                                 const std::vector<std::uint64_t>& seeds,
                                                 const TrainConfig& train_cfg, Index forest_trees,
                                                 const Priors& priors, Index workers);

struct ChannelReport {
  std::string classifier;
  Index channels = 0;
  std::vector<std::uint64_t> seeds;
  MatrixRM accuracy;  // seeds x channels
  std::vector<double> median;
};

// Per-channel study over style codes: one classifier per d-wide slice.
ChannelReport channel_importance(const EncodedDataset& gan_codes, Index channels,
                                 ClassifierKind clf, const std::vector<std::uint64_t>& seeds,
                                 const TrainConfig& train_cfg, Index forest_trees,
                                 const Priors& priors, Index workers);

// Report emission; all outputs are byte-deterministic for identical inputs.
std::string rows_to_csv(const std::vector<BenchmarkRow>& rows);
std::string rows_to_markdown(const std::vector<BenchmarkRow>& rows);
std::string rows_to_plotdata(const std::vector<BenchmarkRow>& rows);
std::string channels_to_csv(const ChannelReport& r);
std::string channels_to_plotdata(const ChannelReport& r);

// format is one of csv, markdown, plotdata; unknown formats are an error.
std::string emit_report(const std::vector<BenchmarkRow>& rows, const std::string& format);

double median_of(std::vector<double> v);

}  // namespace lfl

#endif
