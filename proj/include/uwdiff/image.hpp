#pragma once

#include <vector>

#include "uwdiff/tensor.hpp"

namespace uwdiff {

// H x W x C pixel array, row-major interleaved, values in [0,1].
// Channels is 1 (gray) or 3 (RGB).
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> data;

    Image() = default;
    Image(int h, int w, int c, float fill = 0.0f)
        : height(h), width(w), channels(c),
          data(static_cast<size_t>(h) * w * c, fill) {}

    float& at(int y, int x, int c) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    float at(int y, int x, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }

    size_t numel() const { return data.size(); }
    bool same_shape(const Image& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
};

void clamp01(Image& img);

// Center crop to the target aspect, then bilinear resample with half-pixel
// centers. Identity (bit-exact) when shapes already match. Inputs smaller
// than 8x8 are rejected.
Image crop_resize(const Image& img, int out_h, int out_w);

// Peak signal-to-noise ratio against peak 1.0, capped at 99 dB for
// (near-)identical inputs.
double psnr(const Image& a, const Image& b);

double channel_mean(const Image& img, int c);
double image_mean(const Image& img);

// Separable Gaussian blur with symmetric (edge-duplicating) reflection at
// the borders; the normalized kernel then preserves the image mean exactly.
// Returns the input unchanged when sigma yields a size-1 kernel.
Image gaussian_blur(const Image& img, double sigma, int size_cap = 99);

// Variance of the 4-neighbor Laplacian of the luma channel; used to rank
// synthetic images by sharpness.
double sharpness_score(const Image& img);

// Interleaved HWC <-> planar {C,H,W} conversion.
Tensor<float> to_chw(const Image& img);
Image from_chw(const Tensor<float>& t, bool clamp = true);

}  // namespace uwdiff
