#pragma once

#include <string>

#include "relex/corpus.hpp"
#include "relex/model.hpp"

namespace relex::model {

// Self-contained inference bundle: everything cmd_eval/cmd_analyze need.
struct Checkpoint {
  TrainState state;
  corpus::Vocabulary vocab;
  corpus::RelationSchema schema;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Versioned little-endian binary container with a trailing FNV-1a checksum.
// Parameter payloads are raw IEEE-754 bytes, so save/load round-trips are
// bitwise. Truncation, corruption, or a version mismatch raise IoError and
// leave no partial state behind.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace relex::model
