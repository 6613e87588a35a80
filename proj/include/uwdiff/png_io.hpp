#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uwdiff/image.hpp"

namespace uwdiff {

// 8-bit PNG in/out. Decode maps {0..255} to [0,1] by /255; encode stores
// round(v*255) clamped. Encoder settings are fixed so identical images
// produce identical bytes.
Image decode_png(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> encode_png(const Image& img);

Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& img);

std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<uint8_t>& bytes);

}  // namespace uwdiff
