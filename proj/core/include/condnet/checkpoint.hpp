#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "condnet/network.hpp"

namespace condnet {

/// Model plus provenance, serialized as
///
///   magic "CNDNETCK" | u32 version | u32 header bytes | JSON header | tensors
///
/// Integers are little-endian. The JSON header lists the architecture, model
/// kind, seed, string metadata and the tensor table (name, rows, cols) in
/// storage order; each tensor follows as rows*cols little-endian float64
/// values, row-major. See docs/checkpoint.md.
struct Checkpoint {
  Model model;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> metadata;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& os, const Checkpoint& ck);
Checkpoint read_checkpoint(std::istream& is);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace condnet
