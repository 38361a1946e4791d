#pragma once

#include <string>

#include "fedcaug/image.hpp"

namespace fedcaug::img {

// Binary PNM I/O: P6 (maxval 255) for 3-channel images, P5 for single-channel.
// Quantization is round(v*255); the written bytes round-trip losslessly.
void save_pnm(const Image& image, const std::string& path);
Image load_pnm(const std::string& path);

// Masks as P5 with values 0/255.
void save_mask_pgm(const BinaryMap& mask, const std::string& path);
BinaryMap load_mask_pgm(const std::string& path);

}  // namespace fedcaug::img
