#include "fedcaug/crl.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <vector>

#include "fedcaug/error.hpp"
#include "fedcaug/pnm.hpp"

namespace fedcaug::crl {

namespace {

using cplx = std::complex<double>;

// Naive O(n^2) 1-D DFT applied row-column. Images here are small (tens of
// pixels per side), so this stays well under a millisecond and avoids an FFT
// dependency.
void dft_axis(std::vector<cplx>& grid, int count, int len, std::size_t stride,
              std::size_t step, bool inverse) {
    const double sign = inverse ? 2.0 : -2.0;
    std::vector<cplx> twiddle(len);
    for (int m = 0; m < len; ++m) {
        const double ang = sign * M_PI * m / len;
        twiddle[m] = cplx(std::cos(ang), std::sin(ang));
    }
    std::vector<cplx> line(len), out(len);
    for (int r = 0; r < count; ++r) {
        const std::size_t base = static_cast<std::size_t>(r) * stride;
        for (int i = 0; i < len; ++i) line[i] = grid[base + i * step];
        for (int k = 0; k < len; ++k) {
            cplx acc(0.0, 0.0);
            for (int i = 0; i < len; ++i) {
                acc += line[i] * twiddle[(static_cast<std::size_t>(k) * i) % len];
            }
            out[k] = acc;
        }
        for (int i = 0; i < len; ++i) grid[base + i * step] = out[i];
    }
}

void dft_2d(std::vector<cplx>& grid, int h, int w, bool inverse) {
    dft_axis(grid, h, w, static_cast<std::size_t>(w), 1, inverse);  // rows
    dft_axis(grid, w, h, 1, static_cast<std::size_t>(w), inverse);  // columns
    if (inverse) {
        const double norm = 1.0 / (static_cast<double>(h) * w);
        for (cplx& v : grid) v *= norm;
    }
}

std::vector<double> luminance_grid(const img::Image& image) {
    std::vector<double> lum(image.pixel_count());
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
            lum[static_cast<std::size_t>(y) * image.width + x] = image.luminance(y, x);
    return lum;
}

// Mean filter with periodic wrap, matching the periodicity of the spectrum.
std::vector<double> box_filter_wrap(const std::vector<double>& grid, int h, int w, int window) {
    const int r = window / 2;
    std::vector<double> out(grid.size());
    const double inv = 1.0 / (static_cast<double>(window) * window);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int dy = -r; dy <= r; ++dy) {
                const int yy = (y + dy + h) % h;
                for (int dx = -r; dx <= r; ++dx) {
                    const int xx = (x + dx + w) % w;
                    acc += grid[static_cast<std::size_t>(yy) * w + xx];
                }
            }
            out[static_cast<std::size_t>(y) * w + x] = acc * inv;
        }
    }
    return out;
}

struct Component {
    std::vector<std::size_t> pixels;
};

// Largest 8-connected component; ties resolved by scan order.
img::BinaryMap largest_component(const img::BinaryMap& mask) {
    const int h = mask.height, w = mask.width;
    std::vector<std::uint8_t> seen(mask.values.size(), 0);
    std::vector<std::size_t> best;
    std::vector<std::size_t> stack, current;
    for (std::size_t start = 0; start < mask.values.size(); ++start) {
        if (!mask.values[start] || seen[start]) continue;
        current.clear();
        stack.assign(1, start);
        seen[start] = 1;
        while (!stack.empty()) {
            const std::size_t i = stack.back();
            stack.pop_back();
            current.push_back(i);
            const int y = static_cast<int>(i) / w, x = static_cast<int>(i) % w;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const int ny = y + dy, nx = x + dx;
                    if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                    const std::size_t ni = static_cast<std::size_t>(ny) * w + nx;
                    if (mask.values[ni] && !seen[ni]) {
                        seen[ni] = 1;
                        stack.push_back(ni);
                    }
                }
            }
        }
        if (current.size() > best.size()) best = current;
    }
    img::BinaryMap out(h, w, 0);
    for (std::size_t i : best) out.values[i] = 1;
    return out;
}

img::BinaryMap dilate3(const img::BinaryMap& mask) {
    const int h = mask.height, w = mask.width;
    img::BinaryMap out(h, w, 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            bool any = false;
            for (int dy = -1; dy <= 1 && !any; ++dy) {
                for (int dx = -1; dx <= 1 && !any; ++dx) {
                    const int ny = y + dy, nx = x + dx;
                    if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                    any = mask.at(ny, nx) != 0;
                }
            }
            out.at(y, x) = any ? 1 : 0;
        }
    }
    return out;
}

// Erosion over the in-bounds part of the window, so a full-frame mask stays
// full-frame.
img::BinaryMap erode3(const img::BinaryMap& mask) {
    const int h = mask.height, w = mask.width;
    img::BinaryMap out(h, w, 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            bool all = true;
            for (int dy = -1; dy <= 1 && all; ++dy) {
                for (int dx = -1; dx <= 1 && all; ++dx) {
                    const int ny = y + dy, nx = x + dx;
                    if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                    all = mask.at(ny, nx) != 0;
                }
            }
            out.at(y, x) = all ? 1 : 0;
        }
    }
    return out;
}

BBox tight_bbox(const img::BinaryMap& mask) {
    BBox b{mask.width, mask.height, -1, -1};
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.at(y, x)) continue;
            b.x1 = std::min(b.x1, x);
            b.y1 = std::min(b.y1, y);
            b.x2 = std::max(b.x2, x);
            b.y2 = std::max(b.y2, y);
        }
    }
    return b;
}

}  // namespace

img::BinaryMap threshold_saliency(const img::Image& image, double level) {
    if (level <= 0.0 || level >= 1.0) {
        throw ArgumentError("threshold_saliency: level must lie in (0,1)");
    }
    std::vector<double> lum = luminance_grid(image);

    std::vector<double> sorted = lum;
    const std::size_t n = sorted.size();
    std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
    double median = sorted[n / 2];
    if (n % 2 == 0) {
        // Average of the two middles keeps the mask invariant under inversion.
        std::nth_element(sorted.begin(), sorted.begin() + (n / 2 - 1), sorted.begin() + n / 2);
        median = 0.5 * (median + sorted[n / 2 - 1]);
    }

    img::BinaryMap mask(image.height, image.width, 0);
    for (std::size_t i = 0; i < lum.size(); ++i) {
        mask.values[i] = std::abs(lum[i] - median) > level ? 1 : 0;
    }
    return mask;
}

img::BinaryMap spectral_residual_saliency(const img::Image& image, int avg_window) {
    if (image.height < 16 || image.width < 16) {
        throw ArgumentError("spectral_residual_saliency: image must be at least 16x16, got " +
                            std::to_string(image.height) + "x" + std::to_string(image.width));
    }
    if (avg_window < 3 || avg_window % 2 == 0) {
        throw ArgumentError("spectral_residual_saliency: avg_window must be odd and >= 3");
    }
    const int h = image.height, w = image.width;
    const std::vector<double> lum = luminance_grid(image);

    std::vector<cplx> spectrum(lum.size());
    for (std::size_t i = 0; i < lum.size(); ++i) spectrum[i] = cplx(lum[i], 0.0);
    dft_2d(spectrum, h, w, false);

    std::vector<double> log_amp(lum.size());
    std::vector<cplx> phase(lum.size());
    for (std::size_t i = 0; i < spectrum.size(); ++i) {
        const double amp = std::abs(spectrum[i]);
        log_amp[i] = std::log(amp + 1e-12);
        phase[i] = amp > 1e-300 ? spectrum[i] / amp : cplx(1.0, 0.0);
    }

    const std::vector<double> smoothed = box_filter_wrap(log_amp, h, w, avg_window);
    std::vector<cplx> residual(lum.size());
    for (std::size_t i = 0; i < residual.size(); ++i) {
        residual[i] = std::exp(log_amp[i] - smoothed[i]) * phase[i];
    }
    dft_2d(residual, h, w, true);

    std::vector<double> saliency(lum.size());
    for (std::size_t i = 0; i < saliency.size(); ++i) saliency[i] = std::norm(residual[i]);
    saliency = img::gaussian_blur_grid(saliency, h, w, 2.5);

    double mean = 0.0;
    for (double v : saliency) mean += v;
    mean /= static_cast<double>(saliency.size());
    const double cut = 3.0 * mean;

    img::BinaryMap mask(h, w, 0);
    for (std::size_t i = 0; i < saliency.size(); ++i) mask.values[i] = saliency[i] > cut ? 1 : 0;
    return mask;
}

CausalRegion localize(const img::Image& sharpened, const SaliencyBackend& backend) {
    if (sharpened.height <= 0 || sharpened.width <= 0) {
        throw ArgumentError("localize: empty image");
    }
    img::BinaryMap raw;
    switch (backend.kind) {
        case BackendKind::Threshold:
            raw = threshold_saliency(sharpened, backend.threshold_level);
            break;
        case BackendKind::SpectralResidual:
            raw = spectral_residual_saliency(sharpened, backend.spectral_window);
            break;
    }

    CausalRegion region;
    if (raw.empty_mask()) {
        // Degrade to a full-frame object so downstream compositing is a no-op
        // rather than an empty extraction.
        region.mask = img::BinaryMap(sharpened.height, sharpened.width, 1);
        region.bbox = BBox{0, 0, sharpened.width - 1, sharpened.height - 1};
        return region;
    }

    region.mask = erode3(dilate3(largest_component(raw)));
    region.bbox = tight_bbox(region.mask);
    return region;
}

img::Image extract_object(const img::Image& image, const CausalRegion& region) {
    return img::mask_apply(image, region.mask);
}

img::Image extract_background(const img::Image& image, const CausalRegion& region) {
    img::BinaryMap complement = region.mask;
    for (auto& v : complement.values) v = v ? 0 : 1;
    return img::mask_apply(image, complement);
}

CausalSource sharpen_and_localize(const img::Image& image, const CrlConfig& cfg) {
    const img::EdgeMap edges = img::canny(image, cfg.canny_low, cfg.canny_high, cfg.canny_sigma);
    CausalSource src;
    src.sharpened = img::sharpen(image, edges, cfg.lambda_weighted);
    src.region = localize(src.sharpened, cfg.backend);
    return src;
}

void save_region(const CausalRegion& region, const std::string& pgm_path,
                 const std::string& bbox_path) {
    img::save_mask_pgm(region.mask, pgm_path);
    std::ofstream f(bbox_path, std::ios::trunc);
    if (!f) throw ArgumentError("cannot write bbox file: " + bbox_path);
    f << region.bbox.x1 << " " << region.bbox.y1 << " " << region.bbox.x2 << " "
      << region.bbox.y2 << "\n";
}

CausalRegion load_region(const std::string& pgm_path, const std::string& bbox_path) {
    CausalRegion region;
    region.mask = img::load_mask_pgm(pgm_path);
    std::ifstream f(bbox_path);
    if (!f) throw ArgumentError("cannot open bbox file: " + bbox_path);
    if (!(f >> region.bbox.x1 >> region.bbox.y1 >> region.bbox.x2 >> region.bbox.y2)) {
        throw FormatError(bbox_path + ": expected four integers", 0);
    }
    if (region.bbox.x1 > region.bbox.x2 || region.bbox.y1 > region.bbox.y2) {
        throw FormatError(bbox_path + ": bbox corners out of order", 0);
    }
    return region;
}

}  // namespace fedcaug::crl
