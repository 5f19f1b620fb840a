#pragma once

#include <cstdint>
#include <string>

#include "gem/model.hpp"

namespace gem {

inline constexpr int kCheckpointVersion = 1;

// Versioned JSON snapshot: model configuration, every layer's weights and
// normalization state, fitted density machinery, and energy calibrations.
void save_checkpoint(GemModel& model, const std::string& path, std::uint64_t seed,
                     std::size_t trained_epochs);

struct LoadedCheckpoint {
    GemModel model;
    std::uint64_t seed = 0;
    std::size_t trained_epochs = 0;
};

// FormatError on malformed content, version mismatch, or shape mismatch.
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace gem
