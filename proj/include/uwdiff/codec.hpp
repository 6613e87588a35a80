#pragma once

#include <vector>

#include "json.hpp"
#include "uwdiff/image.hpp"
#include "uwdiff/tensor.hpp"

namespace uwdiff {

// Fixed invertible image <-> latent transform standing in for a learned
// autoencoder. Both modes pack f x f spatial blocks into channels, so an
// H x W x C image becomes a (C*f^2, H/f, W/f) latent; a per-channel affine
// map (v - shift) * scale zero-centers the result.
struct CodecConfig {
    enum class Mode { space_to_depth, haar };

    int factor = 2;
    Mode mode = Mode::space_to_depth;
    double shift = 0.5;
    double scale = 2.0;

    void validate() const;
    int latent_channels(int image_channels) const { return image_channels * factor * factor; }

    nlohmann::json to_json() const;
    static CodecConfig from_json(const nlohmann::json& j);
};

Tensor<float> encode(const Image& img, const CodecConfig& cfg);
Image decode(const Tensor<float>& latent, const CodecConfig& cfg, bool clamp = true);

// Attainable latent value range per channel for images in [0,1], found by
// probing the (affine) transform. Used to clamp predicted x0 during
// sampling.
struct LatentBounds {
    std::vector<float> lo;
    std::vector<float> hi;
};
LatentBounds latent_bounds(const CodecConfig& cfg, int image_channels = 3);

}  // namespace uwdiff
