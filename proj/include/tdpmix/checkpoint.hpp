#pragma once

// Stats-only checkpoints for online learning. A checkpoint holds the model
// definition, the concentration and every cluster's sufficient statistics,
// member count and lock flag; raw items are never stored.
//
// Layout (little-endian): 8-byte magic "TDPMIXCK", u32 version, u64 payload
// length, payload. Vectors are u64-length-prefixed arrays of IEEE doubles.

#include <filesystem>
#include <string>
#include <string_view>

#include "tdpmix/jac.hpp"

namespace tdpmix {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string checkpoint_save(const JACState& state);

// Rebuilds the model and clusters, then attaches a new batch of items, all
// unassigned. Saved members stay counted in their clusters.
JACState checkpoint_load(std::string_view bytes, std::vector<DataItem> items, std::uint64_t seed);

void save_checkpoint_file(const JACState& state, const std::filesystem::path& path);
JACState load_checkpoint_file(const std::filesystem::path& path, std::vector<DataItem> items,
                              std::uint64_t seed);

// Bit-exact comparison of concentration and cluster contents (ids, counts,
// lock flags, statistics).
bool same_clusters(const JACState& a, const JACState& b);

}  // namespace tdpmix
