#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace fedcaug::img {

// H x W x C raster, row-major with interleaved channels, values in [0,1].
// `provenance` carries the dataset sample id an image derives from (-1 if none)
// so privacy properties of per-client pools can be asserted.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 1;
    std::vector<double> pixels;
    int provenance = -1;

    Image() = default;
    Image(int h, int w, int c, double fill = 0.0);

    double& at(int y, int x, int c) noexcept {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    double at(int y, int x, int c) const noexcept {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    // Rec.601 luma for 3-channel images, the pixel itself otherwise.
    double luminance(int y, int x) const noexcept;

    std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(height) * width;
    }
};

// Binary H x W grid. Used both for edge maps and for object/saliency masks.
struct BinaryMap {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> values;  // 0 or 1

    BinaryMap() = default;
    BinaryMap(int h, int w, std::uint8_t fill = 0)
        : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

    std::uint8_t& at(int y, int x) noexcept {
        return values[static_cast<std::size_t>(y) * width + x];
    }
    std::uint8_t at(int y, int x) const noexcept {
        return values[static_cast<std::size_t>(y) * width + x];
    }

    std::size_t count() const noexcept;  // number of set pixels
    bool empty_mask() const noexcept { return count() == 0; }
};

using EdgeMap = BinaryMap;

// Separable Gaussian with truncated kernel (radius = ceil(3*sigma)), reflect
// padding, kernel normalized to sum 1.
Image gaussian_blur(const Image& image, double sigma);

struct SobelResult {
    int height = 0;
    int width = 0;
    std::vector<double> gx;
    std::vector<double> gy;
    std::vector<double> magnitude;
    std::vector<double> direction;  // atan2(gy, gx), in (-pi, pi]
};

// Standard 3x3 Sobel on a single-channel image, reflect padding.
SobelResult sobel(const Image& gray);

// Classic 4-stage Canny. `low` and `high` threshold the magnitude normalized
// by its maximum, so the edge map is invariant to brightness shifts.
EdgeMap canny(const Image& image, double low, double high, double sigma);

// Per-pixel I*(1-lambda) + E*lambda, edge map broadcast across channels,
// clamped to [0,1].
Image sharpen(const Image& image, const EdgeMap& edges, double lambda_weighted);

// Hadamard product with the mask: pixels outside the mask become 0.
Image mask_apply(const Image& image, const BinaryMap& mask);

// Inside the mask: alpha*object + (1-alpha)*background; outside the mask the
// background is untouched. Clamped to [0,1].
Image composite(const Image& object, const BinaryMap& mask, const Image& background, double alpha);

// Gaussian smoothing of a raw scalar grid (no clamping); shared by the public
// blur and the saliency pipeline.
std::vector<double> gaussian_blur_grid(const std::vector<double>& grid, int height, int width,
                                       double sigma);

double clamp01(double v) noexcept;

}  // namespace fedcaug::img
