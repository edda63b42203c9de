#include "lfl/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lfl/serialize.hpp"

namespace lfl {

using nlohmann::json;

namespace {

std::string forgery_method_name(ForgeryParams::Method m) {
  return m == ForgeryParams::Method::splice ? "splice" : "style_swap";
}
ForgeryParams::Method forgery_method_from(const std::string& s, const std::string& path) {
  if (s == "splice") return ForgeryParams::Method::splice;
  if (s == "style_swap") return ForgeryParams::Method::style_swap;
  throw Error("config: " + path + ": unknown forgery method '" + s + "'");
}

std::string init_name(InversionConfig::Init i) {
  switch (i) {
    case InversionConfig::Init::mean_w: return "mean_w";
    case InversionConfig::Init::encoder: return "encoder";
    case InversionConfig::Init::random: return "random";
  }
  return "?";
}
InversionConfig::Init init_from(const std::string& s, const std::string& path) {
  if (s == "mean_w") return InversionConfig::Init::mean_w;
  if (s == "encoder") return InversionConfig::Init::encoder;
  if (s == "random") return InversionConfig::Init::random;
  throw Error("config: " + path + ": unknown inversion init '" + s + "'");
}

ProjectorKind projector_from(const std::string& s, const std::string& path) {
  if (s == "pca") return ProjectorKind::pca;
  if (s == "vq") return ProjectorKind::vq;
  if (s == "gan") return ProjectorKind::gan_inversion;
  throw Error("config: " + path + ": unknown projector kind '" + s + "'");
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  j["generator"] = {{"d_z", c.generator.d_z},
                    {"d", c.generator.d},
                    {"channels", c.generator.channels},
                    {"fmaps", c.generator.fmaps},
                    {"seed", c.generator.seed}};
  j["dataset"] = {
      {"n_per_class", c.dataset.n_per_class},
      {"noise_sigma", c.dataset.noise_sigma},
      {"train_fraction", c.dataset.train_fraction},
      {"seed", c.dataset.seed},
      {"forgery",
       {{"method", forgery_method_name(c.dataset.forgery.method)},
        {"mask_radius", c.dataset.forgery.mask_radius},
        {"feather", c.dataset.forgery.feather},
        {"swap_channels", c.dataset.forgery.swap_channels}}},
      {"perturb",
       {{"noise_sigma", c.dataset.perturb.noise_sigma},
        {"compression_quality", c.dataset.perturb.compression_quality}}}};
  std::vector<std::string> pk;
  for (auto k : c.projectors.kinds) pk.push_back(projector_kind_name(k));
  j["projectors"] = {
      {"kinds", pk},
      {"pca", {{"d_prime", c.projectors.pca_d_prime}, {"batch_size", c.projectors.pca_batch}}},
      {"vq",
       {{"codebook_size", c.projectors.vq.codebook_size},
        {"code_dim", c.projectors.vq.code_dim},
        {"learning_rate", c.projectors.vq.learning_rate},
        {"momentum", c.projectors.vq.momentum},
        {"commitment_beta", c.projectors.vq.commitment_beta},
        {"ema_decay", c.projectors.vq.ema_decay},
        {"epochs", c.projectors.vq_epochs}}},
      {"gan",
       {{"steps", c.projectors.inversion.steps},
        {"step_size", c.projectors.inversion.step_size},
        {"alpha", c.projectors.inversion.alpha},
        {"init", init_name(c.projectors.inversion.init)},
        {"momentum", c.projectors.inversion.momentum},
        {"max_halvings", c.projectors.inversion.max_halvings},
        {"consistency", c.projectors.inversion.consistency},
        {"refine_steps", c.projectors.inversion.refine_steps},
        {"encoder",
         {{"enabled", c.projectors.encoder_enabled},
          {"pairs", c.projectors.encoder_pairs},
          {"epochs", c.projectors.encoder_epochs}}}}}};
  std::vector<std::string> ck;
  for (auto k : c.classifiers.kinds) ck.push_back(classifier_kind_name(k));
  j["classifiers"] = {{"kinds", ck},
                      {"forest_trees", c.classifiers.forest_trees},
                      {"learning_rate", c.classifiers.train.learning_rate},
                      {"epochs", c.classifiers.train.epochs},
                      {"batch_size", c.classifiers.train.batch_size},
                      {"patience", c.classifiers.train.patience},
                      {"val_fraction", c.classifiers.train.val_fraction}};
  j["decision"] = {{"pi_m", c.decision.pi_m}};
  j["analysis"] = {
      {"seeds", c.analysis.seeds},
      {"ablation_sizes", c.analysis.ablation_sizes},
      {"ablation_projector", projector_kind_name(c.analysis.ablation_projector)},
      {"ablation_classifier", classifier_kind_name(c.analysis.ablation_classifier)},
      {"channel_classifier", classifier_kind_name(c.analysis.channel_classifier)},
      {"reconstruction_n", c.analysis.reconstruction_n}};
  return j;
}

// Merges user JSON onto the defaults, rejecting keys absent from the schema.
void merge_checked(json& base, const json& user, const std::string& path) {
  if (!user.is_object())
    throw Error("config: " + (path.empty() ? std::string("<root>") : path) + ": expected an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    std::string sub = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw Error("config: unknown key '" + sub + "'");
    json& slot = base[it.key()];
    if (slot.is_object() && it.value().is_object())
      merge_checked(slot, it.value(), sub);
    else if (slot.is_object() != it.value().is_object())
      throw Error("config: " + sub + ": type mismatch");
    else
      slot = it.value();
  }
}

void apply_override(json& base, const std::string& kv) {
  auto eq = kv.find('=');
  if (eq == std::string::npos) throw Error("config: override '" + kv + "' must be key=value");
  std::string path = kv.substr(0, eq), raw = kv.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;  // unquoted strings pass through

  json* slot = &base;
  std::string walked;
  size_t at = 0;
  while (true) {
    size_t dot = path.find('.', at);
    std::string key = path.substr(at, dot == std::string::npos ? std::string::npos : dot - at);
    walked = walked.empty() ? key : walked + "." + key;
    if (!slot->contains(key)) throw Error("config: unknown key '" + walked + "'");
    slot = &(*slot)[key];
    if (dot == std::string::npos) break;
    at = dot + 1;
  }
  if (slot->is_object()) throw Error("config: '" + path + "' is a section, not a value");
  *slot = value;
}

template <typename T>
T get(const json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw Error("config: " + path + ": invalid value type");
  }
}

ExperimentConfig from_json(const json& j) {
  ExperimentConfig c;
  c.seed = get<std::uint64_t>(j["seed"], "seed");
  c.out_dir = get<std::string>(j["out_dir"], "out_dir");
  const json& g = j["generator"];
  c.generator.d_z = get<Index>(g["d_z"], "generator.d_z");
  c.generator.d = get<Index>(g["d"], "generator.d");
  c.generator.channels = get<Index>(g["channels"], "generator.channels");
  c.generator.fmaps = get<Index>(g["fmaps"], "generator.fmaps");
  c.generator.seed = get<std::uint64_t>(g["seed"], "generator.seed");
  const json& d = j["dataset"];
  c.dataset.n_per_class = get<Index>(d["n_per_class"], "dataset.n_per_class");
  c.dataset.noise_sigma = get<double>(d["noise_sigma"], "dataset.noise_sigma");
  c.dataset.train_fraction = get<double>(d["train_fraction"], "dataset.train_fraction");
  c.dataset.seed = get<std::uint64_t>(d["seed"], "dataset.seed");
  c.dataset.forgery.method = forgery_method_from(
      get<std::string>(d["forgery"]["method"], "dataset.forgery.method"), "dataset.forgery.method");
  c.dataset.forgery.mask_radius = get<double>(d["forgery"]["mask_radius"], "dataset.forgery.mask_radius");
  c.dataset.forgery.feather = get<double>(d["forgery"]["feather"], "dataset.forgery.feather");
  c.dataset.forgery.swap_channels =
      get<std::vector<Index>>(d["forgery"]["swap_channels"], "dataset.forgery.swap_channels");
  c.dataset.perturb.noise_sigma = get<double>(d["perturb"]["noise_sigma"], "dataset.perturb.noise_sigma");
  c.dataset.perturb.compression_quality =
      get<int>(d["perturb"]["compression_quality"], "dataset.perturb.compression_quality");
  const json& p = j["projectors"];
  c.projectors.kinds.clear();
  for (const auto& k : get<std::vector<std::string>>(p["kinds"], "projectors.kinds"))
    c.projectors.kinds.push_back(projector_from(k, "projectors.kinds"));
  c.projectors.pca_d_prime = get<Index>(p["pca"]["d_prime"], "projectors.pca.d_prime");
  c.projectors.pca_batch = get<Index>(p["pca"]["batch_size"], "projectors.pca.batch_size");
  c.projectors.vq.codebook_size = get<Index>(p["vq"]["codebook_size"], "projectors.vq.codebook_size");
  c.projectors.vq.code_dim = get<Index>(p["vq"]["code_dim"], "projectors.vq.code_dim");
  c.projectors.vq.learning_rate = get<double>(p["vq"]["learning_rate"], "projectors.vq.learning_rate");
  c.projectors.vq.momentum = get<double>(p["vq"]["momentum"], "projectors.vq.momentum");
  c.projectors.vq.commitment_beta =
      get<double>(p["vq"]["commitment_beta"], "projectors.vq.commitment_beta");
  c.projectors.vq.ema_decay = get<double>(p["vq"]["ema_decay"], "projectors.vq.ema_decay");
  c.projectors.vq_epochs = get<Index>(p["vq"]["epochs"], "projectors.vq.epochs");
  c.projectors.inversion.steps = get<Index>(p["gan"]["steps"], "projectors.gan.steps");
  c.projectors.inversion.step_size = get<double>(p["gan"]["step_size"], "projectors.gan.step_size");
  c.projectors.inversion.alpha = get<double>(p["gan"]["alpha"], "projectors.gan.alpha");
  c.projectors.inversion.init =
      init_from(get<std::string>(p["gan"]["init"], "projectors.gan.init"), "projectors.gan.init");
  c.projectors.inversion.momentum = get<double>(p["gan"]["momentum"], "projectors.gan.momentum");
  c.projectors.inversion.max_halvings =
      get<Index>(p["gan"]["max_halvings"], "projectors.gan.max_halvings");
  c.projectors.inversion.consistency =
      get<double>(p["gan"]["consistency"], "projectors.gan.consistency");
  c.projectors.inversion.refine_steps =
      get<Index>(p["gan"]["refine_steps"], "projectors.gan.refine_steps");
  c.projectors.encoder_enabled = get<bool>(p["gan"]["encoder"]["enabled"], "projectors.gan.encoder.enabled");
  c.projectors.encoder_pairs = get<Index>(p["gan"]["encoder"]["pairs"], "projectors.gan.encoder.pairs");
  c.projectors.encoder_epochs = get<Index>(p["gan"]["encoder"]["epochs"], "projectors.gan.encoder.epochs");
  const json& cl = j["classifiers"];
  c.classifiers.kinds.clear();
  for (const auto& k : get<std::vector<std::string>>(cl["kinds"], "classifiers.kinds"))
    c.classifiers.kinds.push_back(classifier_kind_from_name(k));
  c.classifiers.forest_trees = get<Index>(cl["forest_trees"], "classifiers.forest_trees");
  c.classifiers.train.learning_rate = get<double>(cl["learning_rate"], "classifiers.learning_rate");
  c.classifiers.train.epochs = get<Index>(cl["epochs"], "classifiers.epochs");
  c.classifiers.train.batch_size = get<Index>(cl["batch_size"], "classifiers.batch_size");
  c.classifiers.train.patience = get<Index>(cl["patience"], "classifiers.patience");
  c.classifiers.train.val_fraction = get<double>(cl["val_fraction"], "classifiers.val_fraction");
  c.decision.pi_m = get<double>(j["decision"]["pi_m"], "decision.pi_m");
  const json& a = j["analysis"];
  c.analysis.seeds = get<std::vector<std::uint64_t>>(a["seeds"], "analysis.seeds");
  c.analysis.ablation_sizes = get<std::vector<Index>>(a["ablation_sizes"], "analysis.ablation_sizes");
  c.analysis.ablation_projector = projector_from(
      get<std::string>(a["ablation_projector"], "analysis.ablation_projector"), "analysis.ablation_projector");
  c.analysis.ablation_classifier = classifier_kind_from_name(
      get<std::string>(a["ablation_classifier"], "analysis.ablation_classifier"));
  c.analysis.channel_classifier =
      classifier_kind_from_name(get<std::string>(a["channel_classifier"], "analysis.channel_classifier"));
  c.analysis.reconstruction_n = get<Index>(a["reconstruction_n"], "analysis.reconstruction_n");
  return c;
}

void check(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw Error("config: " + path + ": " + what);
}

}  // namespace

void ExperimentConfig::validate() const {
  check(generator.d_z > 0, "generator.d_z", "must be positive");
  check(generator.d > 0, "generator.d", "must be positive");
  check(generator.channels > 0, "generator.channels", "must be positive");
  check(generator.fmaps > 0, "generator.fmaps", "must be positive");
  check(dataset.n_per_class >= 2, "dataset.n_per_class", "must be at least 2");
  check(dataset.noise_sigma >= 0.0, "dataset.noise_sigma", "must be non-negative");
  check(dataset.train_fraction > 0.0 && dataset.train_fraction < 1.0, "dataset.train_fraction",
        "must lie in (0, 1)");
  try {
    dataset.forgery.validate(generator.channels);
  } catch (const Error& e) {
    throw Error("config: dataset.forgery: " + std::string(e.what()));
  }
  try {
    dataset.perturb.validate();
  } catch (const Error& e) {
    throw Error("config: dataset.perturb: " + std::string(e.what()));
  }
  check(!projectors.kinds.empty(), "projectors.kinds", "must not be empty");
  check(projectors.pca_d_prime > 0, "projectors.pca.d_prime", "must be positive");
  check(projectors.pca_d_prime <= 3 * 32 * 32, "projectors.pca.d_prime",
        "exceeds the image dimension");
  check(projectors.pca_batch > 0, "projectors.pca.batch_size", "must be positive");
  check(projectors.vq.codebook_size > 0, "projectors.vq.codebook_size", "must be positive");
  check(projectors.vq.code_dim > 0, "projectors.vq.code_dim", "must be positive");
  check(projectors.vq_epochs > 0, "projectors.vq.epochs", "must be positive");
  try {
    projectors.inversion.validate();
  } catch (const Error& e) {
    throw Error("config: projectors.gan: " + std::string(e.what()));
  }
  check(projectors.inversion.init != InversionConfig::Init::encoder || projectors.encoder_enabled,
        "projectors.gan.init", "encoder init requires projectors.gan.encoder.enabled");
  check(!classifiers.kinds.empty(), "classifiers.kinds", "must not be empty");
  check(classifiers.forest_trees > 0, "classifiers.forest_trees", "must be positive");
  check(classifiers.train.learning_rate > 0.0, "classifiers.learning_rate", "must be positive");
  check(classifiers.train.epochs > 0, "classifiers.epochs", "must be positive");
  check(classifiers.train.batch_size > 0, "classifiers.batch_size", "must be positive");
  check(classifiers.train.patience > 0, "classifiers.patience", "must be positive");
  check(classifiers.train.val_fraction >= 0.0 && classifiers.train.val_fraction < 0.5,
        "classifiers.val_fraction", "must lie in [0, 0.5)");
  check(decision.pi_m > 0.0 && decision.pi_m < 1.0, "decision.pi_m", "must lie in (0, 1)");
  check(!analysis.seeds.empty(), "analysis.seeds", "must not be empty");
  for (Index s : analysis.ablation_sizes)
    check(s >= 2, "analysis.ablation_sizes", "sizes must be at least 2");
  check(analysis.reconstruction_n > 0, "analysis.reconstruction_n", "must be positive");
}

std::string ExperimentConfig::canonical_json() const { return to_json(*this).dump(2) + "\n"; }

std::uint64_t ExperimentConfig::hash() const {
  // out_dir is where artifacts land, not what the experiment is; two runs
  // into different directories must agree byte-for-byte, stamps included.
  json j = to_json(*this);
  j.erase("out_dir");
  return fnv1a64(j.dump());
}

ExperimentConfig parse_config(const std::string& json_text,
                              const std::vector<std::string>& overrides) {
  json user = json::parse(json_text, nullptr, false);
  if (user.is_discarded()) throw Error("config: file is not valid JSON");
  json merged = to_json(ExperimentConfig{});
  merge_checked(merged, user, "");
  for (const auto& kv : overrides) apply_override(merged, kv);
  ExperimentConfig c = from_json(merged);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw Error("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides);
}

}  // namespace lfl
