#ifndef LFL_SERIALIZE_HPP
#define LFL_SERIALIZE_HPP

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>

#include "lfl/tensor.hpp"

namespace lfl {

using TensorMap = std::map<std::string, Tensor>;

// Binary tensor container.
// Layout: magic "LFL1", then per-tensor records until EOF:
//   name length (u64 LE), name bytes, rank (u64 LE),
//   extents (u64 LE each), data (f64 LE each, row-major).
void write_tensors(std::ostream& os, const TensorMap& tensors);
TensorMap read_tensors(std::istream& is);

void save_tensors(const std::string& path, const TensorMap& tensors);
TensorMap load_tensors(const std::string& path);

// 64-bit FNV-1a, used for config hashes and artifact stamps.
std::uint64_t fnv1a64(const std::string& bytes);
std::string hash_hex(std::uint64_t h);

// Artifact stamping: the hash rides along as a reserved pair of scalar
// tensors so any container can be checked for config provenance.
void stamp_hash(TensorMap& tensors, std::uint64_t config_hash);
std::uint64_t read_stamp(const TensorMap& tensors);  // throws if absent

}  // namespace lfl

#endif
