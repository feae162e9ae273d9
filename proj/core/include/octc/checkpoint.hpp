#pragma once

#include <cstdint>
#include <string>

#include "octc/model.hpp"

namespace octc {

struct CheckpointMeta {
    uint32_t version = 1;
    uint64_t model_hash = 0;  // ModelConfig fingerprint, checked on load
    uint64_t run_hash = 0;    // full run-config fingerprint, provenance
    uint64_t steps = 0;       // training steps represented by the weights
};

/// Binary weight checkpoint: magic "OCTCCKPT", version, hashes, then named
/// parameter blocks as shape-prefixed little-endian float32. Write-then-read
/// is bitwise exact.
void save_checkpoint(const std::string& path, const FlowModel& model, uint64_t run_hash,
                     uint64_t steps);

/// Loads weights into a model constructed with the matching config; throws on
/// bad magic, version, hash mismatch, or shape mismatch.
CheckpointMeta load_checkpoint(const std::string& path, FlowModel& model);

/// Header only, without touching weights.
CheckpointMeta read_checkpoint_meta(const std::string& path);

}  // namespace octc
