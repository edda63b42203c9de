// Command-line front door for the latent-forensics laboratory.
//
// Every subcommand is a pure function of the config file: artifacts land in
// <out_dir>/<config-hash>/ and each one carries the hash, so a run directory
// can always be traced back to the exact configuration that produced it.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "lfl/analysis.hpp"
#include "lfl/config.hpp"
#include "lfl/serialize.hpp"

namespace fs = std::filesystem;
using namespace lfl;

namespace {

constexpr std::uint64_t kSaltGenuine = 0x9E1u;
constexpr std::uint64_t kSaltFake = 0x9E2u;
constexpr std::uint64_t kSaltPerturb = 0x9E3u;
constexpr std::uint64_t kSaltVq = 0x9E4u;
constexpr std::uint64_t kSaltEncoder = 0x9E5u;
constexpr std::uint64_t kSaltRecon = 0x9E6u;

struct Ctx {
  ExperimentConfig cfg;
  std::uint64_t hash = 0;
  fs::path run_dir;
  Index workers = 1;
};

void write_text(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void require_artifact(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path))
    throw Error("missing artifact " + path.string() + "; run `" + producer + "` first");
}

std::string stamp_line(std::uint64_t hash) { return "# config_hash=" + hash_hex(hash) + "\n"; }

void check_text_stamp(const fs::path& path, std::uint64_t hash) {
  std::string text = read_text(path);
  std::string want = stamp_line(hash);
  if (text.size() < want.size() || text.substr(text.size() - want.size()) != want)
    throw Error("artifact " + path.string() + " carries a different config hash");
}

// --- dataset -----------------------------------------------------------

std::pair<std::vector<LabeledImage>, std::vector<LabeledImage>> build_dataset(
    const Ctx& ctx, const GeneratorModel& gen) {
  const auto& d = ctx.cfg.dataset;
  auto genuine = generate_genuine(gen, d.n_per_class, d.noise_sigma, derive_seed(d.seed, kSaltGenuine));
  auto fakes = generate_fake(gen, d.n_per_class, d.forgery, d.noise_sigma,
                             derive_seed(d.seed, kSaltFake), d.n_per_class);
  std::vector<LabeledImage> all = std::move(genuine);
  all.insert(all.end(), fakes.begin(), fakes.end());
  if (d.perturb.noise_sigma > 0.0 || d.perturb.compression_quality < 100) {
    parallel_for(static_cast<Index>(all.size()), ctx.workers, [&](Index i) {
      all[static_cast<size_t>(i)].image =
          perturb(all[static_cast<size_t>(i)].image, d.perturb,
                  derive_seed(derive_seed(d.seed, kSaltPerturb), static_cast<std::uint64_t>(i)));
    });
  }
  return split_dataset(all, d.train_fraction, d.seed);
}

void cmd_gen_data(const Ctx& ctx) {
  GeneratorModel gen(ctx.cfg.generator);
  auto [train, test] = build_dataset(ctx, gen);
  std::string params_hash = hash_hex(ctx.hash);
  save_dataset((ctx.run_dir / "dataset" / "train").string(), train, ctx.hash, params_hash);
  save_dataset((ctx.run_dir / "dataset" / "test").string(), test, ctx.hash, params_hash);
  // Stored without out_dir so run directories in different locations stay
  // byte-identical; pass --out to relocate a reproduction.
  ExperimentConfig stored = ctx.cfg;
  stored.out_dir = ExperimentConfig{}.out_dir;
  write_text(ctx.run_dir / "config.json", stored.canonical_json());
  std::cout << "gen-data: " << train.size() << " train / " << test.size() << " test\n";
}

std::pair<std::vector<LabeledImage>, std::vector<LabeledImage>> load_splits(const Ctx& ctx) {
  fs::path tr = ctx.run_dir / "dataset" / "train", te = ctx.run_dir / "dataset" / "test";
  require_artifact(tr / "manifest.tsv", "gen-data");
  require_artifact(te / "manifest.tsv", "gen-data");
  std::uint64_t h1 = 0, h2 = 0;
  auto train = load_dataset(tr.string(), &h1);
  auto test = load_dataset(te.string(), &h2);
  if (h1 != ctx.hash || h2 != ctx.hash)
    throw Error("dataset was generated under a different config hash");
  return {std::move(train), std::move(test)};
}

// --- projectors --------------------------------------------------------

void cmd_fit_projector(const Ctx& ctx) {
  auto [train, test] = load_splits(ctx);
  (void)test;
  const auto& pj = ctx.cfg.projectors;
  fs::create_directories(ctx.run_dir / "projectors");

  for (ProjectorKind kind : pj.kinds) {
    if (kind == ProjectorKind::pca) {
      Index dim = train[0].image.size();
      MatrixRM data(static_cast<Index>(train.size()), dim);
      for (Index i = 0; i < static_cast<Index>(train.size()); ++i)
        data.row(i) = train[static_cast<size_t>(i)].image.data.matrix().transpose();
      PcaProjector p(pca_fit_incremental(data, pj.pca_d_prime, pj.pca_batch));
      p.save((ctx.run_dir / "projectors" / "pca.lfl").string(), ctx.hash);
      std::cout << "fit-projector: pca d'=" << pj.pca_d_prime << "\n";
    } else if (kind == ProjectorKind::vq) {
      std::vector<const Tensor*> imgs;
      for (const auto& s : train) imgs.push_back(&s.image);
      VqTrainReport report;
      VqProjector p(vq_train(imgs, pj.vq_epochs, derive_seed(ctx.cfg.seed, kSaltVq), pj.vq, &report));
      p.save((ctx.run_dir / "projectors" / "vq.lfl").string(), ctx.hash);
      std::cout << "fit-projector: vq mse " << report.epoch_mse.front() << " -> "
                << report.epoch_mse.back() << "\n";
    } else if (pj.encoder_enabled) {
      GeneratorModel gen(ctx.cfg.generator);
      EncoderModel enc = train_encoder(gen, pj.encoder_pairs, pj.encoder_epochs,
                                       derive_seed(ctx.cfg.seed, kSaltEncoder));
      TensorMap t = enc.params();
      stamp_hash(t, ctx.hash);
      save_tensors((ctx.run_dir / "projectors" / "encoder.lfl").string(), t);
      std::cout << "fit-projector: encoder trained\n";
    }
  }
}

std::map<ProjectorKind, std::shared_ptr<Projector>> load_projectors(const Ctx& ctx) {
  const auto& pj = ctx.cfg.projectors;
  std::map<ProjectorKind, std::shared_ptr<Projector>> out;
  std::uint64_t h = 0;
  for (ProjectorKind kind : pj.kinds) {
    if (kind == ProjectorKind::pca) {
      fs::path p = ctx.run_dir / "projectors" / "pca.lfl";
      require_artifact(p, "fit-projector");
      out[kind] = std::make_shared<PcaProjector>(PcaProjector::load(p.string(), &h));
    } else if (kind == ProjectorKind::vq) {
      fs::path p = ctx.run_dir / "projectors" / "vq.lfl";
      require_artifact(p, "fit-projector");
      out[kind] = std::make_shared<VqProjector>(VqProjector::load(p.string(), &h));
    } else {
      auto gen = std::make_shared<GeneratorModel>(ctx.cfg.generator);
      auto fe = std::make_shared<FeatureExtractor>();
      std::shared_ptr<EncoderModel> enc;
      if (pj.encoder_enabled) {
        fs::path p = ctx.run_dir / "projectors" / "encoder.lfl";
        require_artifact(p, "fit-projector");
        enc = std::make_shared<EncoderModel>(*gen, derive_seed(ctx.cfg.seed, kSaltEncoder));
        enc->load_params(load_tensors(p.string()));
      }
      out[kind] = std::make_shared<GanProjector>(gen, fe, pj.inversion, enc);
    }
    if (h != 0 && h != ctx.hash)
      throw Error("projector " + projector_kind_name(kind) + " carries a different config hash");
  }
  return out;
}

// --- codes -------------------------------------------------------------

fs::path codes_path(const Ctx& ctx, ProjectorKind kind) {
  return ctx.run_dir / "codes" / (projector_kind_name(kind) + ".lfl");
}

void save_codes(const Ctx& ctx, ProjectorKind kind, const EncodedDataset& data) {
  auto pack = [](const EncodedSplit& s, const std::string& prefix, TensorMap& t) {
    Tensor x = Tensor::zeros({s.x.rows(), s.x.cols()});
    x.mat() = s.x;
    Tensor y = Tensor::zeros({static_cast<Index>(s.y.size())});
    Tensor src = Tensor::zeros({static_cast<Index>(s.source.size())});
    for (size_t i = 0; i < s.y.size(); ++i) {
      y.data(static_cast<Index>(i)) = s.y[i];
      src.data(static_cast<Index>(i)) = static_cast<double>(s.source[i]);
    }
    t[prefix + "_x"] = std::move(x);
    t[prefix + "_y"] = std::move(y);
    t[prefix + "_src"] = std::move(src);
  };
  TensorMap t;
  pack(data.train, "train", t);
  pack(data.test, "test", t);
  stamp_hash(t, ctx.hash);
  fs::create_directories(ctx.run_dir / "codes");
  save_tensors(codes_path(ctx, kind).string(), t);
}

EncodedDataset load_codes(const Ctx& ctx, ProjectorKind kind) {
  fs::path p = codes_path(ctx, kind);
  require_artifact(p, "invert");
  TensorMap t = load_tensors(p.string());
  if (read_stamp(t) != ctx.hash)
    throw Error("codes " + p.string() + " carry a different config hash");
  EncodedDataset out;
  out.kind = kind;
  auto unpack = [&](const std::string& prefix, EncodedSplit& s) {
    const Tensor& x = t.at(prefix + "_x");
    s.x = x.mat();
    const Tensor& y = t.at(prefix + "_y");
    const Tensor& src = t.at(prefix + "_src");
    for (Index i = 0; i < y.size(); ++i) {
      s.y.push_back(static_cast<int>(y.data(i)));
      s.source.push_back(static_cast<Index>(src.data(i)));
    }
  };
  unpack("train", out.train);
  unpack("test", out.test);
  return out;
}

void cmd_invert(const Ctx& ctx) {
  auto [train, test] = load_splits(ctx);
  auto projectors = load_projectors(ctx);
  for (const auto& [kind, proj] : projectors) {
    EncodedDataset data = encode_dataset(*proj, train, test, ctx.workers);
    save_codes(ctx, kind, data);
    std::cout << "invert: " << projector_kind_name(kind) << " codes " << data.train.x.rows()
              << "+" << data.test.x.rows() << " x " << data.train.x.cols() << "\n";
  }
}

// --- classifiers -------------------------------------------------------

fs::path model_path(const Ctx& ctx, ProjectorKind pk, ClassifierKind ck, std::uint64_t seed) {
  return ctx.run_dir / "models" /
         (projector_kind_name(pk) + "_" + classifier_kind_name(ck) + "_s" + std::to_string(seed) +
          ".lfl");
}

void cmd_train_classifier(const Ctx& ctx) {
  fs::create_directories(ctx.run_dir / "models");
  for (ProjectorKind pk : ctx.cfg.projectors.kinds) {
    EncodedDataset data = load_codes(ctx, pk);
    struct Cell {
      ClassifierKind ck;
      std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (ClassifierKind ck : ctx.cfg.classifiers.kinds)
      for (std::uint64_t s : ctx.cfg.analysis.seeds) cells.push_back({ck, s});
    std::vector<TensorMap> outputs(cells.size());
    parallel_for(static_cast<Index>(cells.size()), ctx.workers, [&](Index i) {
      const Cell& c = cells[static_cast<size_t>(i)];
      auto model = train_classifier(
          c.ck, data.train.x, data.train.y,
          cell_seed(c.seed, projector_kind_name(pk), classifier_kind_name(c.ck)),
          ctx.cfg.classifiers.train, ctx.cfg.classifiers.forest_trees);
      outputs[static_cast<size_t>(i)] = model->to_tensors();
    });
    for (size_t i = 0; i < cells.size(); ++i) {
      TensorMap t = std::move(outputs[i]);
      t["clf_kind"] = Tensor::scalar(static_cast<double>(static_cast<int>(cells[i].ck)));
      stamp_hash(t, ctx.hash);
      save_tensors(model_path(ctx, pk, cells[i].ck, cells[i].seed).string(), t);
    }
    std::cout << "train-classifier: " << projector_kind_name(pk) << " -> " << cells.size()
              << " models\n";
  }
}

std::unique_ptr<Classifier> load_classifier(const Ctx& ctx, ProjectorKind pk, ClassifierKind ck,
                                            std::uint64_t seed) {
  fs::path p = model_path(ctx, pk, ck, seed);
  require_artifact(p, "train-classifier");
  TensorMap t = load_tensors(p.string());
  if (read_stamp(t) != ctx.hash)
    throw Error("model " + p.string() + " carries a different config hash");
  switch (static_cast<int>(t.at("clf_kind").data(0))) {
    case static_cast<int>(ClassifierKind::random_forest):
      return std::make_unique<RandomForestModel>(RandomForestModel::from_tensors(t));
    case static_cast<int>(ClassifierKind::logistic):
      return std::make_unique<LogisticModel>(LogisticModel::from_tensors(t));
    default:
      return std::make_unique<MlpModel>(MlpModel::from_tensors(t));
  }
}

// --- evaluation and reports --------------------------------------------

BenchmarkRow score_row(const EncodedDataset& data, const Classifier& model, ClassifierKind ck,
                       std::uint64_t seed, const Priors& priors) {
  BenchmarkRow row;
  row.projector = projector_kind_name(data.kind);
  row.classifier = classifier_kind_name(ck);
  row.train_size = data.train.x.rows();
  row.seed = seed;
  DecisionRule rule = calibrate_threshold(priors);
  for (Index i = 0; i < data.test.x.rows(); ++i) {
    bool fake = rule.decide_fake(model.score(data.test.x.row(i).transpose()));
    bool truth = data.test.y[static_cast<size_t>(i)] == 1;
    if (truth && fake) ++row.tp;
    else if (truth) ++row.fn;
    else if (fake) ++row.fp;
    else ++row.tn;
  }
  row.accuracy = static_cast<double>(row.tp + row.tn) / static_cast<double>(data.test.x.rows());
  return row;
}

void cmd_evaluate(const Ctx& ctx) {
  Priors priors(ctx.cfg.decision.pi_m);
  std::vector<BenchmarkRow> rows;
  for (ProjectorKind pk : ctx.cfg.projectors.kinds) {
    EncodedDataset data = load_codes(ctx, pk);
    for (ClassifierKind ck : ctx.cfg.classifiers.kinds)
      for (std::uint64_t s : ctx.cfg.analysis.seeds)
        rows.push_back(score_row(data, *load_classifier(ctx, pk, ck, s), ck, s, priors));
  }
  write_text(ctx.run_dir / "reports" / "benchmark.csv", rows_to_csv(rows) + stamp_line(ctx.hash));
  write_text(ctx.run_dir / "reports" / "benchmark.md", rows_to_markdown(rows) + stamp_line(ctx.hash));
  write_text(ctx.run_dir / "reports" / "benchmark.plot", rows_to_plotdata(rows) + stamp_line(ctx.hash));

  // Reconstruction benchmark over a dedicated genuine sample.
  GeneratorModel gen(ctx.cfg.generator);
  FeatureExtractor fe;
  auto bench = generate_genuine(gen, ctx.cfg.analysis.reconstruction_n, ctx.cfg.dataset.noise_sigma,
                                derive_seed(ctx.cfg.dataset.seed, kSaltRecon));
  std::vector<Tensor> images;
  for (auto& s : bench) images.push_back(std::move(s.image));
  auto projectors = load_projectors(ctx);
  std::ostringstream rc;
  rc << "projector,n,mean,ci_low,ci_high\n";
  for (const auto& [kind, proj] : projectors) {
    std::vector<Tensor> recon(images.size());
    parallel_for(static_cast<Index>(images.size()), ctx.workers, [&](Index i) {
      recon[static_cast<size_t>(i)] = proj->reconstruct(proj->project(images[static_cast<size_t>(i)]));
    });
    Index at = 0;
    auto stats = reconstruction_benchmark(
        fe, [&](const Tensor&) { return recon[static_cast<size_t>(at++)]; }, images,
        static_cast<Index>(images.size()));
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s,%lld,%.9f,%.9f,%.9f\n", projector_kind_name(kind).c_str(),
                  static_cast<long long>(stats.n), stats.mean, stats.ci_low, stats.ci_high);
    rc << buf;
  }
  write_text(ctx.run_dir / "reports" / "reconstruction.csv", rc.str() + stamp_line(ctx.hash));
  std::cout << "evaluate: " << rows.size() << " benchmark rows\n";
}

void cmd_channel_importance(const Ctx& ctx) {
  EncodedDataset data = load_codes(ctx, ProjectorKind::gan_inversion);
  Priors priors(ctx.cfg.decision.pi_m);
  ChannelReport report = channel_importance(
      data, ctx.cfg.generator.channels, ctx.cfg.analysis.channel_classifier,
      ctx.cfg.analysis.seeds, ctx.cfg.classifiers.train, ctx.cfg.classifiers.forest_trees, priors,
      ctx.workers);
  write_text(ctx.run_dir / "reports" / "channels.csv", channels_to_csv(report) + stamp_line(ctx.hash));
  write_text(ctx.run_dir / "reports" / "channels.plot",
             channels_to_plotdata(report) + stamp_line(ctx.hash));
  std::cout << "channel-importance: " << report.channels << " channels x " << report.seeds.size()
            << " seeds\n";
}

void cmd_ablate_size(const Ctx& ctx) {
  EncodedDataset data = load_codes(ctx, ctx.cfg.analysis.ablation_projector);
  Priors priors(ctx.cfg.decision.pi_m);
  auto rows = training_size_ablation(data, ctx.cfg.analysis.ablation_sizes,
                                     ctx.cfg.analysis.ablation_classifier, ctx.cfg.analysis.seeds,
                                     ctx.cfg.classifiers.train, ctx.cfg.classifiers.forest_trees,
                                     priors, ctx.workers);
  write_text(ctx.run_dir / "reports" / "ablation.csv", rows_to_csv(rows) + stamp_line(ctx.hash));
  std::cout << "ablate-size: " << rows.size() << " rows\n";
}

std::vector<BenchmarkRow> parse_rows_csv(const std::string& text) {
  std::vector<BenchmarkRow> rows;
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    BenchmarkRow r;
    std::istringstream ls(line);
    std::string field;
    std::getline(ls, r.projector, ',');
    std::getline(ls, r.classifier, ',');
    std::getline(ls, field, ',');
    r.train_size = std::stoll(field);
    std::getline(ls, field, ',');
    r.seed = std::stoull(field);
    std::getline(ls, field, ',');
    r.accuracy = std::stod(field);
    std::getline(ls, field, ',');
    r.tp = std::stoll(field);
    std::getline(ls, field, ',');
    r.fp = std::stoll(field);
    std::getline(ls, field, ',');
    r.tn = std::stoll(field);
    std::getline(ls, field, ',');
    r.fn = std::stoll(field);
    rows.push_back(std::move(r));
  }
  return rows;
}

void cmd_report(const Ctx& ctx) {
  fs::path rep = ctx.run_dir / "reports";
  require_artifact(rep / "benchmark.csv", "evaluate");
  check_text_stamp(rep / "benchmark.csv", ctx.hash);
  auto rows = parse_rows_csv(read_text(rep / "benchmark.csv"));

  std::ostringstream md;
  md << "# Run report " << hash_hex(ctx.hash) << "\n\n";
  md << "## Benchmark medians over seeds\n\n";
  md << "| projector | classifier | median accuracy |\n|---|---|---|\n";
  for (ProjectorKind pk : ctx.cfg.projectors.kinds) {
    for (ClassifierKind ck : ctx.cfg.classifiers.kinds) {
      std::vector<double> accs;
      for (const auto& r : rows)
        if (r.projector == projector_kind_name(pk) && r.classifier == classifier_kind_name(ck))
          accs.push_back(r.accuracy);
      if (accs.empty()) continue;
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", median_of(accs));
      md << "| " << projector_kind_name(pk) << " | " << classifier_kind_name(ck) << " | " << buf
         << " |\n";
    }
  }
  md << "\n## Full grid\n\n" << rows_to_markdown(rows);

  for (const char* name : {"ablation.csv", "channels.csv", "reconstruction.csv"}) {
    fs::path p = rep / name;
    if (!fs::exists(p)) continue;
    check_text_stamp(p, ctx.hash);
    md << "\n## " << name << "\n\n```\n" << read_text(p) << "```\n";
  }
  write_text(rep / "summary.md", md.str() + "\n" + stamp_line(ctx.hash));
  std::cout << "report: " << (rep / "summary.md").string() << "\n";
}

void cmd_full(const Ctx& ctx) {
  cmd_gen_data(ctx);
  cmd_fit_projector(ctx);
  cmd_invert(ctx);
  cmd_train_classifier(ctx);
  cmd_evaluate(ctx);
  cmd_channel_importance(ctx);
  cmd_ablate_size(ctx);
  cmd_report(ctx);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent-space forensics laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_override;
  std::vector<std::string> overrides;
  Index workers = 1;
  std::int64_t seed_override = -1;

  app.add_option("--config", config_path, "experiment config file (JSON)")->required();
  app.add_option("--set", overrides, "override config values by dotted path (key=value)");
  app.add_option("--out", out_override, "override the output directory");
  app.add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed_override, "override the master seed");

  const std::vector<std::pair<std::string, void (*)(const Ctx&)>> commands = {
      {"gen-data", cmd_gen_data},
      {"fit-projector", cmd_fit_projector},
      {"invert", cmd_invert},
      {"train-classifier", cmd_train_classifier},
      {"evaluate", cmd_evaluate},
      {"channel-importance", cmd_channel_importance},
      {"ablate-size", cmd_ablate_size},
      {"report", cmd_report},
      {"full", cmd_full},
  };
  for (const auto& [name, fn] : commands) app.add_subcommand(name)->fallthrough(true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  Ctx ctx;
  try {
    std::vector<std::string> all = overrides;
    if (!out_override.empty()) all.push_back("out_dir=" + out_override);
    if (seed_override >= 0) all.push_back("seed=" + std::to_string(seed_override));
    ctx.cfg = load_config(config_path, all);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  ctx.hash = ctx.cfg.hash();
  ctx.run_dir = fs::path(ctx.cfg.out_dir) / hash_hex(ctx.hash);
  ctx.workers = workers;

  try {
    for (const auto& [name, fn] : commands)
      if (app.got_subcommand(name)) fn(ctx);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
