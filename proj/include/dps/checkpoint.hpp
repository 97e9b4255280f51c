#pragma once

// Checkpoint container: a text header (format tag, architecture, seed,
// iteration count, free-form metadata, array table) terminated by the line
// "end_header", followed by the arrays as raw little-endian float64 in table
// order. Weights are stored column-major.
//
//   DPS-CHECKPOINT 1
//   input_dim 2
//   ...
//   arrays 12
//   array embx.0.weight 128 2
//   array embx.0.bias 128
//   ...
//   end_header

#include "dps/network.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

namespace dps {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Checkpoint {
    nn::NetworkParams params;
    std::uint64_t seed = 0;
    std::uint64_t iteration = 0;
    // Keys and values must not contain whitespace.
    std::map<std::string, std::string> metadata;
};

inline constexpr int kCheckpointVersion = 1;

// Writes through a temporary file and renames, so a failed save leaves no
// partial file behind.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dps
