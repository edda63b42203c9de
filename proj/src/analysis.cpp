#include "lfl/analysis.hpp"

#include <algorithm>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "lfl/rng.hpp"
#include "lfl/serialize.hpp"

namespace lfl {

void parallel_for(Index n, Index workers, const std::function<void(Index)>& fn) {
  workers = std::max<Index>(1, std::min(workers, n));
  if (workers == 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr first_error;
  std::mutex err_mutex;
  std::vector<std::thread> pool;
  for (Index w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (Index i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

EncodedDataset encode_dataset(const Projector& p, const std::vector<LabeledImage>& train,
                              const std::vector<LabeledImage>& test, Index workers) {
  EncodedDataset out;
  out.kind = p.kind();
  Index dim = 1;
  for (Index e : p.code_shape()) dim *= e;
  auto encode = [&](const std::vector<LabeledImage>& data, EncodedSplit& split) {
    Index n = static_cast<Index>(data.size());
    split.x.resize(n, dim);
    split.y.resize(static_cast<size_t>(n));
    split.source.resize(static_cast<size_t>(n));
    parallel_for(n, workers, [&](Index i) {
      const LabeledImage& s = data[static_cast<size_t>(i)];
      split.x.row(i) = p.code_features(p.project(s.image)).transpose();
      split.y[static_cast<size_t>(i)] = s.label == Label::fake ? 1 : 0;
      split.source[static_cast<size_t>(i)] = s.source_id;
    });
  };
  encode(train, out.train);
  encode(test, out.test);
  return out;
}

std::uint64_t cell_seed(std::uint64_t run_seed, const std::string& projector,
                        const std::string& classifier) {
  return derive_seed(run_seed, fnv1a64(projector + "/" + classifier));
}

BenchmarkRow evaluate_cell(const EncodedDataset& data, ClassifierKind clf, std::uint64_t seed,
                           const TrainConfig& train_cfg, Index forest_trees,
                           const Priors& priors) {
  BenchmarkRow row;
  row.projector = projector_kind_name(data.kind);
  row.classifier = classifier_kind_name(clf);
  row.train_size = data.train.x.rows();
  row.seed = seed;

  auto model = train_classifier(clf, data.train.x, data.train.y,
                                cell_seed(seed, row.projector, row.classifier), train_cfg,
                                forest_trees);
  DecisionRule rule = calibrate_threshold(priors);
  for (Index i = 0; i < data.test.x.rows(); ++i) {
    bool fake = rule.decide_fake(model->score(data.test.x.row(i).transpose()));
    bool truth = data.test.y[static_cast<size_t>(i)] == 1;
    if (truth && fake) ++row.tp;
    else if (truth) ++row.fn;
    else if (fake) ++row.fp;
    else ++row.tn;
  }
  row.accuracy = static_cast<double>(row.tp + row.tn) / static_cast<double>(data.test.x.rows());
  return row;
}

std::vector<BenchmarkRow> benchmark_grid(const std::vector<EncodedDataset>& datasets,
                                         const std::vector<ClassifierKind>& classifiers,
                                         const std::vector<std::uint64_t>& seeds,
                                         const TrainConfig& train_cfg, Index forest_trees,
                                         const Priors& priors, Index workers) {
  if (seeds.empty()) throw Error("analysis: benchmark needs at least one seed");
  struct Cell {
    Index dataset;
    ClassifierKind clf;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (Index d = 0; d < static_cast<Index>(datasets.size()); ++d)
    for (ClassifierKind c : classifiers)
      for (std::uint64_t s : seeds) cells.push_back({d, c, s});

  std::vector<BenchmarkRow> rows(cells.size());
  parallel_for(static_cast<Index>(cells.size()), workers, [&](Index i) {
    const Cell& c = cells[static_cast<size_t>(i)];
    try {
      rows[static_cast<size_t>(i)] = evaluate_cell(datasets[static_cast<size_t>(c.dataset)],
                                                   c.clf, c.seed, train_cfg, forest_trees, priors);
    } catch (const Error& e) {
      throw Error("analysis: cell " + projector_kind_name(datasets[static_cast<size_t>(c.dataset)].kind) +
                  "/" + classifier_kind_name(c.clf) + "/seed " + std::to_string(c.seed) + ": " +
                  e.what());
    }
  });
  return rows;
}

namespace {

// Class-stratified, deterministic subsample of the training split. The full
// size returns the split unchanged so grid and ablation rows coincide.
EncodedDataset subsample_train(const EncodedDataset& data, Index size, std::uint64_t seed) {
  Index n = data.train.x.rows();
  if (size > n) throw Error("analysis: ablation size exceeds the training set");
  if (size == n) return data;

  std::vector<Index> fake_rows, genuine_rows;
  for (Index i = 0; i < n; ++i)
    (data.train.y[static_cast<size_t>(i)] ? fake_rows : genuine_rows).push_back(i);
  Rng rng(derive_seed(seed, 0xAB1A7Eu));
  rng.shuffle(genuine_rows);
  rng.shuffle(fake_rows);

  std::vector<Index> keep;
  for (Index i = 0; static_cast<Index>(keep.size()) < size; ++i) {
    auto& side = (i % 2 == 0) ? genuine_rows : fake_rows;
    auto& other = (i % 2 == 0) ? fake_rows : genuine_rows;
    if (static_cast<size_t>(i / 2) < side.size()) keep.push_back(side[static_cast<size_t>(i / 2)]);
    else if (static_cast<size_t>(i / 2) < other.size()) keep.push_back(other[static_cast<size_t>(i / 2)]);
  }
  std::sort(keep.begin(), keep.end());

  EncodedDataset out;
  out.kind = data.kind;
  out.test = data.test;
  out.train.x.resize(size, data.train.x.cols());
  out.train.y.resize(static_cast<size_t>(size));
  out.train.source.resize(static_cast<size_t>(size));
  for (Index i = 0; i < size; ++i) {
    Index r = keep[static_cast<size_t>(i)];
    out.train.x.row(i) = data.train.x.row(r);
    out.train.y[static_cast<size_t>(i)] = data.train.y[static_cast<size_t>(r)];
    out.train.source[static_cast<size_t>(i)] = data.train.source[static_cast<size_t>(r)];
  }
  return out;
}

}  // namespace

std::vector<BenchmarkRow> training_size_ablation(const EncodedDataset& data,
                                                 const std::vector<Index>& sizes,
                                                 ClassifierKind clf,
                                                 const std::vector<std::uint64_t>& seeds,
                                                 const TrainConfig& train_cfg, Index forest_trees,
                                                 const Priors& priors, Index workers) {
  struct Cell {
    Index size;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (Index s : sizes)
    for (std::uint64_t k : seeds) cells.push_back({s, k});
  std::vector<BenchmarkRow> rows(cells.size());
  parallel_for(static_cast<Index>(cells.size()), workers, [&](Index i) {
    const Cell& c = cells[static_cast<size_t>(i)];
    EncodedDataset sub = subsample_train(data, c.size, c.seed);
    rows[static_cast<size_t>(i)] = evaluate_cell(sub, clf, c.seed, train_cfg, forest_trees, priors);
  });
  return rows;
}

ChannelReport channel_importance(const EncodedDataset& gan_codes, Index channels,
                                 ClassifierKind clf, const std::vector<std::uint64_t>& seeds,
                                 const TrainConfig& train_cfg, Index forest_trees,
                                 const Priors& priors, Index workers) {
  if (gan_codes.kind != ProjectorKind::gan_inversion)
    throw Error("analysis: channel importance requires style codes from the inversion projector");
  Index dim = gan_codes.train.x.cols();
  if (dim % channels != 0) throw Error("analysis: code dimension is not divisible by channels");
  Index d = dim / channels;

  ChannelReport report;
  report.classifier = classifier_kind_name(clf);
  report.channels = channels;
  report.seeds = seeds;
  report.accuracy.resize(static_cast<Index>(seeds.size()), channels);

  struct Cell {
    Index seed_i, channel;
  };
  std::vector<Cell> cells;
  for (Index s = 0; s < static_cast<Index>(seeds.size()); ++s)
    for (Index c = 0; c < channels; ++c) cells.push_back({s, c});
  parallel_for(static_cast<Index>(cells.size()), workers, [&](Index i) {
    const Cell& cell = cells[static_cast<size_t>(i)];
    EncodedDataset slice;
    slice.kind = gan_codes.kind;
    slice.train.x = gan_codes.train.x.middleCols(cell.channel * d, d);
    slice.train.y = gan_codes.train.y;
    slice.train.source = gan_codes.train.source;
    slice.test.x = gan_codes.test.x.middleCols(cell.channel * d, d);
    slice.test.y = gan_codes.test.y;
    slice.test.source = gan_codes.test.source;
    BenchmarkRow row = evaluate_cell(slice, clf, derive_seed(report.seeds[static_cast<size_t>(cell.seed_i)],
                                                             static_cast<std::uint64_t>(cell.channel)),
                                     train_cfg, forest_trees, priors);
    report.accuracy(cell.seed_i, cell.channel) = row.accuracy;
  });

  for (Index c = 0; c < channels; ++c) {
    std::vector<double> col;
    for (Index s = 0; s < report.accuracy.rows(); ++s) col.push_back(report.accuracy(s, c));
    report.median.push_back(median_of(col));
  }
  return report;
}

double median_of(std::vector<double> v) {
  if (v.empty()) throw Error("analysis: median of empty set");
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string rows_to_csv(const std::vector<BenchmarkRow>& rows) {
  std::ostringstream os;
  os << "projector,classifier,train_size,seed,accuracy,tp,fp,tn,fn\n";
  for (const auto& r : rows)
    os << r.projector << ',' << r.classifier << ',' << r.train_size << ',' << r.seed << ','
       << fmt(r.accuracy) << ',' << r.tp << ',' << r.fp << ',' << r.tn << ',' << r.fn << '\n';
  return os.str();
}

std::string rows_to_markdown(const std::vector<BenchmarkRow>& rows) {
  std::ostringstream os;
  os << "| projector | classifier | train_size | seed | accuracy | tp | fp | tn | fn |\n";
  os << "|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows)
    os << "| " << r.projector << " | " << r.classifier << " | " << r.train_size << " | " << r.seed
       << " | " << fmt(r.accuracy) << " | " << r.tp << " | " << r.fp << " | " << r.tn << " | "
       << r.fn << " |\n";
  return os.str();
}

std::string rows_to_plotdata(const std::vector<BenchmarkRow>& rows) {
  // One series per (projector, classifier): x = train_size or seed, y = accuracy.
  std::ostringstream os;
  std::string current;
  for (const auto& r : rows) {
    std::string series = r.projector + "_" + r.classifier;
    if (series != current) {
      os << "# series " << series << "\n";
      current = series;
    }
    os << r.train_size << ' ' << r.seed << ' ' << fmt(r.accuracy) << '\n';
  }
  return os.str();
}

std::string channels_to_csv(const ChannelReport& r) {
  std::ostringstream os;
  os << "classifier,seed,channel,accuracy\n";
  for (Index s = 0; s < static_cast<Index>(r.seeds.size()); ++s)
    for (Index c = 0; c < r.channels; ++c)
      os << r.classifier << ',' << r.seeds[static_cast<size_t>(s)] << ',' << c << ','
         << fmt(r.accuracy(s, c)) << '\n';
  return os.str();
}

std::string channels_to_plotdata(const ChannelReport& r) {
  std::ostringstream os;
  for (Index s = 0; s < static_cast<Index>(r.seeds.size()); ++s) {
    os << "# series seed_" << r.seeds[static_cast<size_t>(s)] << "\n";
    for (Index c = 0; c < r.channels; ++c) os << c << ' ' << fmt(r.accuracy(s, c)) << '\n';
  }
  os << "# series median\n";
  for (Index c = 0; c < r.channels; ++c)
    os << c << ' ' << fmt(r.median[static_cast<size_t>(c)]) << '\n';
  return os.str();
}

std::string emit_report(const std::vector<BenchmarkRow>& rows, const std::string& format) {
  if (rows.empty()) throw Error("analysis: nothing to report");
  if (format == "csv") return rows_to_csv(rows);
  if (format == "markdown") return rows_to_markdown(rows);
  if (format == "plotdata") return rows_to_plotdata(rows);
  throw Error("analysis: unknown report format '" + format + "'");
}

}  // namespace lfl
