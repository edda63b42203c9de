#include "lfl/worldsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "lfl/serialize.hpp"

namespace lfl {

namespace {

constexpr std::uint64_t kSaltZ = 0x5a17;
constexpr std::uint64_t kSaltNoise = 0x6017;
constexpr std::uint64_t kSaltDonor = 0xd060;

void add_noise_clip(Tensor& img, double sigma, Rng& rng) {
  if (sigma > 0.0)
    for (Index i = 0; i < img.size(); ++i) img.data[i] += sigma * rng.normal();
  img.data = img.data.min(1.0).max(0.0);
}

// Orthonormal 8x8 DCT-II basis.
const Eigen::Matrix<double, 8, 8>& dct8() {
  static const Eigen::Matrix<double, 8, 8> m = [] {
    Eigen::Matrix<double, 8, 8> d;
    const double pi = 3.14159265358979323846;
    for (int k = 0; k < 8; ++k) {
      double c = k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int n = 0; n < 8; ++n) d(k, n) = c * std::cos(pi * (n + 0.5) * k / 8.0);
    }
    return d;
  }();
  return m;
}

std::string label_str(Label l) { return l == Label::fake ? "fake" : "genuine"; }

}  // namespace

void ForgeryParams::validate(Index channels) const {
  if (mask_radius <= 0.0 || mask_radius > 0.5)
    throw Error("forgery: mask_radius must be in (0, 0.5]");
  if (feather < 0.0 || feather > 0.25) throw Error("forgery: feather must be in [0, 0.25]");
  if (method == Method::style_swap) {
    if (swap_channels.empty()) throw Error("forgery: style_swap requires non-empty swap_channels");
    for (Index c : swap_channels)
      if (c < 0 || c >= channels)
        throw Error("forgery: swap channel " + std::to_string(c) + " out of range [0, " +
                    std::to_string(channels) + ")");
  }
}

void PerturbationParams::validate() const {
  if (noise_sigma < 0.0) throw Error("perturb: noise_sigma must be >= 0");
  if (compression_quality < 1 || compression_quality > 100)
    throw Error("perturb: compression_quality must be in [1, 100]");
}

std::vector<LabeledImage> generate_genuine(const GeneratorModel& g, Index n, double noise_sigma,
                                           std::uint64_t seed, Index id_offset) {
  if (n <= 0) throw Error("worldsim: n must be positive");
  std::vector<LabeledImage> out(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) {
    std::uint64_t item = derive_seed(seed, static_cast<std::uint64_t>(i));
    Tensor z = g.sample_z(derive_seed(item, kSaltZ));
    Tensor img = g.synthesize(g.map(z));
    Rng noise_rng(derive_seed(item, kSaltNoise));
    add_noise_clip(img, noise_sigma, noise_rng);
    out[static_cast<size_t>(i)] = {std::move(img), Label::genuine, id_offset + i};
  }
  return out;
}

std::vector<LabeledImage> generate_fake(const GeneratorModel& g, Index n,
                                        const ForgeryParams& params, double noise_sigma,
                                        std::uint64_t seed, Index id_offset) {
  if (n <= 0) throw Error("worldsim: n must be positive");
  params.validate(g.config().channels);
  const Index size = GeneratorModel::kImageSize;
  std::vector<LabeledImage> out(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) {
    std::uint64_t item = derive_seed(seed, static_cast<std::uint64_t>(i));
    Tensor z_base = g.sample_z(derive_seed(item, kSaltZ));
    Tensor z_donor = g.sample_z(derive_seed(item, kSaltDonor));
    Tensor img;
    if (params.method == ForgeryParams::Method::splice) {
      Tensor base = g.synthesize(g.map(z_base));
      Tensor donor = g.synthesize(g.map(z_donor));
      double radius = params.mask_radius * static_cast<double>(size);
      double fw = params.feather * static_cast<double>(size);
      double cx = (static_cast<double>(size) - 1.0) / 2.0;
      img = base;
      for (Index y = 0; y < size; ++y)
        for (Index x = 0; x < size; ++x) {
          double dist = std::hypot(static_cast<double>(y) - cx, static_cast<double>(x) - cx);
          double m = fw > 0.0 ? std::clamp((radius - dist) / fw, 0.0, 1.0)
                              : (dist <= radius ? 1.0 : 0.0);
          if (m > 0.0)
            for (Index c = 0; c < 3; ++c)
              img.at(c, y, x) = (1.0 - m) * img.at(c, y, x) + m * donor.at(c, y, x);
        }
    } else {
      Tensor w = g.map(z_base);
      Tensor w_donor = g.map(z_donor);
      for (Index c : params.swap_channels)
        w.data.segment(c * g.config().d, g.config().d) =
            w_donor.data.segment(c * g.config().d, g.config().d);
      img = g.synthesize(w);
    }
    Rng noise_rng(derive_seed(item, kSaltNoise));
    add_noise_clip(img, noise_sigma, noise_rng);
    out[static_cast<size_t>(i)] = {std::move(img), Label::fake, id_offset + i};
  }
  return out;
}

Tensor perturb(const Tensor& image, const PerturbationParams& params, std::uint64_t seed) {
  params.validate();
  if (image.rank() != 3 || image.shape[1] % 8 != 0 || image.shape[2] % 8 != 0)
    throw Error("perturb: image must be C x H x W with H, W multiples of 8");
  Tensor out = image;
  Rng rng(derive_seed(seed, kSaltNoise));
  if (params.noise_sigma > 0.0)
    for (Index i = 0; i < out.size(); ++i) out.data[i] += params.noise_sigma * rng.normal();
  if (params.compression_quality < 100) {
    double step = 0.2 * static_cast<double>(101 - params.compression_quality) / 100.0;
    const auto& d = dct8();
    Index C = out.shape[0], H = out.shape[1], W = out.shape[2];
    Eigen::Matrix<double, 8, 8> blk;
    for (Index c = 0; c < C; ++c)
      for (Index by = 0; by < H; by += 8)
        for (Index bx = 0; bx < W; bx += 8) {
          for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j) blk(i, j) = out.at(c, by + i, bx + j);
          Eigen::Matrix<double, 8, 8> coef = d * blk * d.transpose();
          coef = (coef / step).array().round().matrix() * step;
          blk = d.transpose() * coef * d;
          for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j) out.at(c, by + i, bx + j) = blk(i, j);
        }
  }
  out.data = out.data.min(1.0).max(0.0);
  return out;
}

std::pair<std::vector<LabeledImage>, std::vector<LabeledImage>> split_dataset(
    const std::vector<LabeledImage>& data, double train_fraction, std::uint64_t seed) {
  if (train_fraction <= 0.0 || train_fraction >= 1.0)
    throw Error("split: train_fraction must be in (0, 1)");
  std::set<Index> ids;
  for (const auto& li : data) ids.insert(li.source_id);
  if (ids.size() < 2) throw Error("split: need at least 2 distinct source_ids");
  std::vector<Index> order(ids.begin(), ids.end());
  Rng rng(derive_seed(seed, 0x5b117));
  rng.shuffle(order);
  size_t n_train = static_cast<size_t>(train_fraction * static_cast<double>(order.size()));
  n_train = std::max<size_t>(1, std::min(n_train, order.size() - 1));
  std::set<Index> train_ids(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::pair<std::vector<LabeledImage>, std::vector<LabeledImage>> out;
  for (const auto& li : data)
    (train_ids.count(li.source_id) ? out.first : out.second).push_back(li);
  return out;
}

void save_dataset(const std::string& dir, const std::vector<LabeledImage>& data,
                  std::uint64_t config_hash, const std::string& params_hash, bool packed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream manifest(dir + "/manifest.tsv");
  if (!manifest) throw Error("dataset: cannot write manifest in " + dir);
  manifest << "# config_hash=" << hash_hex(config_hash) << "\n";
  char name[32];
  if (packed) {
    TensorMap pack;
    stamp_hash(pack, config_hash);
    for (size_t i = 0; i < data.size(); ++i) {
      std::snprintf(name, sizeof name, "img/%06zu", i);
      pack[name] = data[i].image;
      manifest << "images.lfl#" << name << "\t" << label_str(data[i].label) << "\t"
               << data[i].source_id << "\t" << params_hash << "\n";
    }
    save_tensors(dir + "/images.lfl", pack);
  } else {
    fs::create_directories(dir + "/images");
    for (size_t i = 0; i < data.size(); ++i) {
      std::snprintf(name, sizeof name, "images/%06zu.lfl", i);
      TensorMap one{{"image", data[i].image}};
      stamp_hash(one, config_hash);
      save_tensors(dir + "/" + name, one);
      manifest << name << "\t" << label_str(data[i].label) << "\t" << data[i].source_id << "\t"
               << params_hash << "\n";
    }
  }
}

std::vector<LabeledImage> load_dataset(const std::string& dir, std::uint64_t* config_hash_out) {
  std::ifstream manifest(dir + "/manifest.tsv");
  if (!manifest) throw Error("dataset: cannot read manifest in " + dir);
  std::vector<LabeledImage> out;
  TensorMap pack;
  bool pack_loaded = false;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto pos = line.find("config_hash=");
      if (pos != std::string::npos && config_hash_out)
        *config_hash_out = std::stoull(line.substr(pos + 12), nullptr, 16);
      continue;
    }
    std::istringstream ss(line);
    std::string path, label, sid, phash;
    if (!std::getline(ss, path, '\t') || !std::getline(ss, label, '\t') ||
        !std::getline(ss, sid, '\t') || !std::getline(ss, phash))
      throw Error("dataset: malformed manifest line: " + line);
    LabeledImage li;
    li.label = label == "fake" ? Label::fake : Label::genuine;
    li.source_id = std::stoll(sid);
    auto hashpos = path.find('#');
    if (hashpos != std::string::npos) {
      if (!pack_loaded) {
        pack = load_tensors(dir + "/" + path.substr(0, hashpos));
        pack_loaded = true;
      }
      li.image = pack.at(path.substr(hashpos + 1));
    } else {
      li.image = load_tensors(dir + "/" + path).at("image");
    }
    out.push_back(std::move(li));
  }
  return out;
}

}  // namespace lfl
