#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uwdiff/image.hpp"

namespace uwdiff {

// Procedural marine scene: vertical water gradient, light shafts, warm
// blobs, drifting particles, and a per-image defocus blur. The blur draw
// spreads the sharpness scores so quality ranking has signal.
Image toy_scene(int height, int width, uint64_t seed);

struct ToyDataset {
    std::vector<std::string> ids;
    std::vector<std::string> paths;  // relative to dir
};

// Writes <dir>/<id>.png, ids zero-padded, one substream per image.
ToyDataset generate_toy_dataset(const std::string& dir, int count, int height, int width,
                                uint64_t seed);

}  // namespace uwdiff
