#include "fedcaug/image.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "fedcaug/error.hpp"

namespace fedcaug::img {

namespace {

// Symmetric reflection: -1 -> 0, n -> n-1.
inline int reflect(int i, int n) noexcept {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
    return i;
}

void require_same_dims(int h1, int w1, int h2, int w2, const char* context) {
    if (h1 != h2 || w1 != w2) {
        throw ShapeError(context, "[" + std::to_string(h1) + "x" + std::to_string(w1) + "]",
                         "[" + std::to_string(h2) + "x" + std::to_string(w2) + "]");
    }
}

std::vector<double> gaussian_kernel(double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
        k[i + radius] = w;
        sum += w;
    }
    for (double& w : k) w /= sum;
    return k;
}

}  // namespace

Image::Image(int h, int w, int c, double fill)
    : height(h), width(w), channels(c),
      pixels(static_cast<std::size_t>(h) * w * c, fill) {
    if (h <= 0 || w <= 0 || (c != 1 && c != 3)) {
        throw ArgumentError("image dims must be positive with 1 or 3 channels, got " +
                            std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c));
    }
}

double Image::luminance(int y, int x) const noexcept {
    if (channels == 1) return at(y, x, 0);
    return 0.299 * at(y, x, 0) + 0.587 * at(y, x, 1) + 0.114 * at(y, x, 2);
}

std::size_t BinaryMap::count() const noexcept {
    std::size_t n = 0;
    for (std::uint8_t v : values) n += v != 0;
    return n;
}

double clamp01(double v) noexcept { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

std::vector<double> gaussian_blur_grid(const std::vector<double>& grid, int height, int width,
                                       double sigma) {
    const std::vector<double> kernel = gaussian_kernel(sigma);
    const int radius = static_cast<int>(kernel.size() / 2);

    std::vector<double> tmp(grid.size());
    std::vector<double> out(grid.size());

    // Horizontal pass.
    for (int y = 0; y < height; ++y) {
        const double* row = grid.data() + static_cast<std::size_t>(y) * width;
        double* dst = tmp.data() + static_cast<std::size_t>(y) * width;
        for (int x = 0; x < width; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                acc += kernel[i + radius] * row[reflect(x + i, width)];
            }
            dst[x] = acc;
        }
    }
    // Vertical pass.
    for (int y = 0; y < height; ++y) {
        double* dst = out.data() + static_cast<std::size_t>(y) * width;
        for (int i = -radius; i <= radius; ++i) {
            const double w = kernel[i + radius];
            const double* src = tmp.data() + static_cast<std::size_t>(reflect(y + i, height)) * width;
            if (i == -radius) {
                for (int x = 0; x < width; ++x) dst[x] = w * src[x];
            } else {
                for (int x = 0; x < width; ++x) dst[x] += w * src[x];
            }
        }
    }
    return out;
}

Image gaussian_blur(const Image& image, double sigma) {
    if (sigma <= 0.0) {
        throw ArgumentError("gaussian_blur: sigma must be positive");
    }
    if (sigma > std::min(image.height, image.width) / 4.0) {
        throw ArgumentError("gaussian_blur: sigma too large for image dims");
    }
    Image out = image;
    const std::size_t plane = image.pixel_count();
    std::vector<double> channel(plane);
    for (int c = 0; c < image.channels; ++c) {
        for (int y = 0; y < image.height; ++y)
            for (int x = 0; x < image.width; ++x)
                channel[static_cast<std::size_t>(y) * image.width + x] = image.at(y, x, c);
        const std::vector<double> blurred = gaussian_blur_grid(channel, image.height, image.width, sigma);
        for (int y = 0; y < image.height; ++y)
            for (int x = 0; x < image.width; ++x)
                out.at(y, x, c) = clamp01(blurred[static_cast<std::size_t>(y) * image.width + x]);
    }
    return out;
}

SobelResult sobel(const Image& gray) {
    if (gray.channels != 1) {
        throw ArgumentError("sobel: expected a single-channel image, got " +
                            std::to_string(gray.channels) + " channels");
    }
    const int h = gray.height, w = gray.width;
    SobelResult r;
    r.height = h;
    r.width = w;
    r.gx.assign(gray.pixel_count(), 0.0);
    r.gy.assign(gray.pixel_count(), 0.0);
    r.magnitude.assign(gray.pixel_count(), 0.0);
    r.direction.assign(gray.pixel_count(), 0.0);

    for (int y = 0; y < h; ++y) {
        const int ym = reflect(y - 1, h), yp = reflect(y + 1, h);
        for (int x = 0; x < w; ++x) {
            const int xm = reflect(x - 1, w), xp = reflect(x + 1, w);
            const double tl = gray.at(ym, xm, 0), tc = gray.at(ym, x, 0), tr = gray.at(ym, xp, 0);
            const double ml = gray.at(y, xm, 0), mr = gray.at(y, xp, 0);
            const double bl = gray.at(yp, xm, 0), bc = gray.at(yp, x, 0), br = gray.at(yp, xp, 0);
            const double gx = (tr + 2.0 * mr + br) - (tl + 2.0 * ml + bl);
            const double gy = (bl + 2.0 * bc + br) - (tl + 2.0 * tc + tr);
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            r.gx[i] = gx;
            r.gy[i] = gy;
            r.magnitude[i] = std::sqrt(gx * gx + gy * gy);
            r.direction[i] = std::atan2(gy, gx);
        }
    }
    return r;
}

EdgeMap canny(const Image& image, double low, double high, double sigma) {
    if (!(0.0 < low && low < high && high <= 1.0)) {
        throw ArgumentError("canny: thresholds must satisfy 0 < low < high <= 1, got low=" +
                            std::to_string(low) + " high=" + std::to_string(high));
    }
    const int h = image.height, w = image.width;

    Image gray(h, w, 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            gray.at(y, x, 0) = image.luminance(y, x);

    const Image blurred = gaussian_blur(gray, sigma);
    const SobelResult g = sobel(blurred);

    double max_mag = 0.0;
    for (double m : g.magnitude) max_mag = std::max(max_mag, m);

    EdgeMap edges(h, w, 0);
    if (max_mag <= 1e-12) return edges;  // flat image: no edges

    std::vector<double> nmag(g.magnitude.size());
    for (std::size_t i = 0; i < nmag.size(); ++i) nmag[i] = g.magnitude[i] / max_mag;

    // Non-maximum suppression with the gradient direction quantized to
    // 0/45/90/135 degrees. On the two-pixel plateaus a symmetric step
    // produces, the strict ">" towards the forward neighbor keeps exactly
    // one of the tied pixels, so edges come out one pixel thick.
    auto mag_at = [&](int y, int x) -> double {
        if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;
        return nmag[static_cast<std::size_t>(y) * w + x];
    };

    std::vector<std::uint8_t> strong(nmag.size(), 0), weak(nmag.size(), 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            const double m = nmag[i];
            if (m < low) continue;
            double theta = g.direction[i] * 180.0 / M_PI;
            if (theta < 0.0) theta += 180.0;
            int fy, fx, by, bx;
            if (theta < 22.5 || theta >= 157.5) {  // horizontal gradient
                fy = y; fx = x + 1; by = y; bx = x - 1;
            } else if (theta < 67.5) {             // down-right gradient
                fy = y + 1; fx = x + 1; by = y - 1; bx = x - 1;
            } else if (theta < 112.5) {            // vertical gradient
                fy = y + 1; fx = x; by = y - 1; bx = x;
            } else {                               // down-left gradient
                fy = y + 1; fx = x - 1; by = y - 1; bx = x + 1;
            }
            if (m > mag_at(fy, fx) && m >= mag_at(by, bx)) {
                if (m >= high) strong[i] = 1;
                else weak[i] = 1;
            }
        }
    }

    // Hysteresis: flood from strong pixels through weak ones, 8-connected.
    std::vector<std::size_t> stack;
    for (std::size_t i = 0; i < strong.size(); ++i) {
        if (strong[i]) {
            edges.values[i] = 1;
            stack.push_back(i);
        }
    }
    while (!stack.empty()) {
        const std::size_t i = stack.back();
        stack.pop_back();
        const int y = static_cast<int>(i) / w, x = static_cast<int>(i) % w;
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                const int ny = y + dy, nx = x + dx;
                if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                const std::size_t ni = static_cast<std::size_t>(ny) * w + nx;
                if (weak[ni] && !edges.values[ni]) {
                    edges.values[ni] = 1;
                    stack.push_back(ni);
                }
            }
        }
    }
    return edges;
}

Image sharpen(const Image& image, const EdgeMap& edges, double lambda_weighted) {
    if (lambda_weighted < 0.0 || lambda_weighted > 1.0) {
        throw ArgumentError("sharpen: lambda_weighted must lie in [0,1]");
    }
    require_same_dims(image.height, image.width, edges.height, edges.width, "sharpen");
    Image out = image;
    const double lam = lambda_weighted;
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            const double e = edges.at(y, x) ? 1.0 : 0.0;
            for (int c = 0; c < image.channels; ++c) {
                out.at(y, x, c) = clamp01(image.at(y, x, c) * (1.0 - lam) + e * lam);
            }
        }
    }
    return out;
}

Image mask_apply(const Image& image, const BinaryMap& mask) {
    require_same_dims(image.height, image.width, mask.height, mask.width, "mask_apply");
    Image out = image;
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            if (!mask.at(y, x)) {
                for (int c = 0; c < image.channels; ++c) out.at(y, x, c) = 0.0;
            }
        }
    }
    return out;
}

Image composite(const Image& object, const BinaryMap& mask, const Image& background, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) {
        throw ArgumentError("composite: alpha must lie in [0,1]");
    }
    require_same_dims(object.height, object.width, background.height, background.width, "composite");
    require_same_dims(object.height, object.width, mask.height, mask.width, "composite mask");
    if (object.channels != background.channels) {
        throw ShapeError("composite channels", std::to_string(object.channels),
                         std::to_string(background.channels));
    }
    Image out = background;
    for (int y = 0; y < object.height; ++y) {
        for (int x = 0; x < object.width; ++x) {
            if (mask.at(y, x)) {
                for (int c = 0; c < object.channels; ++c) {
                    out.at(y, x, c) =
                        clamp01(alpha * object.at(y, x, c) + (1.0 - alpha) * background.at(y, x, c));
                }
            }
        }
    }
    return out;
}

}  // namespace fedcaug::img
