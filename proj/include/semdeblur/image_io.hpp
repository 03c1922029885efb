#pragma once

#include <filesystem>

#include "semdeblur/tensor.hpp"

namespace semdeblur {

// 8-bit PNG <-> [0,1] RGB (3 channels, gray inputs are expanded).
Image read_rgb(const std::filesystem::path& path);
void write_rgb(const Image& image, const std::filesystem::path& path);

// Single-channel 8-bit image of raw integer values (label indices).
Tensor<int> read_index_image(const std::filesystem::path& path);
void write_index_image(const Tensor<int>& labels,
                       const std::filesystem::path& path);

// Single-channel [0,1] gray written as 8-bit.
void write_gray(const Image& image, const std::filesystem::path& path);

// Rounds to the nearest 8-bit level, matching a PNG write/read round trip.
Image quantize8(const Image& image);

}  // namespace semdeblur
