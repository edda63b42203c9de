#include "lfl/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <ostream>

namespace lfl {

namespace {

constexpr char kMagic[4] = {'L', 'F', 'L', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw Error("container: truncated u64");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_f64(std::ostream& os, double d) {
  put_u64(os, std::bit_cast<std::uint64_t>(d));
}

double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

}  // namespace

void write_tensors(std::ostream& os, const TensorMap& tensors) {
  os.write(kMagic, 4);
  for (const auto& [name, t] : tensors) {
    put_u64(os, name.size());
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(os, static_cast<std::uint64_t>(t.rank()));
    for (Index e : t.shape) put_u64(os, static_cast<std::uint64_t>(e));
    for (Index i = 0; i < t.size(); ++i) put_f64(os, t.data[i]);
  }
  if (!os) throw Error("container: write failed");
}

TensorMap read_tensors(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw Error("container: bad magic (expected LFL1)");
  TensorMap out;
  while (true) {
    is.peek();
    if (is.eof()) break;
    std::uint64_t name_len = get_u64(is);
    std::string name(name_len, '\0');
    is.read(name.data(), static_cast<std::streamsize>(name_len));
    if (!is) throw Error("container: truncated name");
    std::uint64_t rank = get_u64(is);
    Shape shape(rank);
    for (auto& e : shape) e = static_cast<Index>(get_u64(is));
    Tensor t(shape);
    for (Index i = 0; i < t.size(); ++i) t.data[i] = get_f64(is);
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

void save_tensors(const std::string& path, const TensorMap& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("container: cannot open for write: " + path);
  write_tensors(os, tensors);
}

TensorMap load_tensors(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("container: cannot open for read: " + path);
  return read_tensors(is);
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return s;
}

void stamp_hash(TensorMap& tensors, std::uint64_t config_hash) {
  tensors["__config_hash_hi"] = Tensor::scalar(static_cast<double>(config_hash >> 32));
  tensors["__config_hash_lo"] = Tensor::scalar(static_cast<double>(config_hash & 0xffffffffULL));
}

std::uint64_t read_stamp(const TensorMap& tensors) {
  auto hi = tensors.find("__config_hash_hi");
  auto lo = tensors.find("__config_hash_lo");
  if (hi == tensors.end() || lo == tensors.end())
    throw Error("container: missing config hash stamp");
  return (static_cast<std::uint64_t>(hi->second.value()) << 32) |
         static_cast<std::uint64_t>(lo->second.value());
}

}  // namespace lfl
