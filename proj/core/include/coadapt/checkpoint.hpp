#pragma once

// Flat binary container of named fp64 arrays.
//
// Byte layout (all integers little-endian, no padding):
//
//   magic        8 bytes   "COADAPT\0"
//   version      u32       currently 1
//   attr_count   u32
//   attr_count x { u32 key_len, key bytes, u32 value_len, value bytes }
//   array_count  u32
//   array_count x {
//     u32 name_len, name bytes,
//     u32 rank, rank x u64 dims,
//     prod(dims) x f64 (IEEE-754 binary64, little-endian)
//   }
//
// Attributes carry small string metadata (model hyper-shape, domain id).

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "coadapt/tensor.hpp"

namespace coadapt::autograd {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  std::map<std::string, std::string> attributes;
  std::vector<NamedArray> arrays;

  const NamedArray& array(const std::string& name) const;
  const std::string& attribute(const std::string& key) const;
};

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt);
/// Throws std::runtime_error on bad magic, unsupported version or truncation.
Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace coadapt::autograd
