#pragma once

#include <cstdint>
#include <string>

#include "rfl/model.hpp"
#include "rfl/training.hpp"

namespace rfl {

inline constexpr const char* kCheckpointVersion = "rfl-ckpt-v1";

// Everything needed to resume training or to track: parameters, batch-norm statistics,
// optimizer moments, iteration counter, configuration and pixel normalization.
struct Checkpoint {
  RflModel<float> model;
  Adam adam;
  int iteration = 0;
  TrainConfig train;
};

// Layout: "rfl-ckpt-v1\n", little-endian uint64 header length, JSON header, raw float32 blobs
// in header order. Throws IoError when the file cannot be written.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
// Throws IoError (unreadable), VersionError (other version tag) or FormatError (corrupt).
Checkpoint load_checkpoint(const std::string& path);

}  // namespace rfl
