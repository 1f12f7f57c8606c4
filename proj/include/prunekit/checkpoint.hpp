#pragma once

#include <filesystem>

#include "prunekit/model.hpp"

namespace prunekit {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Writes a .pkpt file: framed JSON header describing every layer and
// parameter shape, followed by the float32 blobs in header order.
// See docs/checkpoint_format.md for the byte layout.
void save_checkpoint(const ModelGraph& model, const std::filesystem::path& path);

// Throws FormatError on bad magic/version, truncated or oversized payload,
// or parameter shapes that disagree with the layer hyperparameters.
ModelGraph load_checkpoint(const std::filesystem::path& path);

}  // namespace prunekit
