#pragma once

#include <string>

#include "fedcaug/image.hpp"

namespace fedcaug::crl {

// Inclusive pixel coordinates, (x1,y1) top-left to (x2,y2) bottom-right.
struct BBox {
    int x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

// Object mask plus its tight bounding box. The mask is primary (it feeds the
// Hadamard products); the bbox is derived metadata.
struct CausalRegion {
    img::BinaryMap mask;
    BBox bbox;
};

enum class BackendKind { Threshold, SpectralResidual };

// Saliency backend selector. Classical detectors stand in for a learned
// segmentation network; the interface leaves room for one later.
// The default threshold level sits below the sharpening lambda so pixels
// brightened by the edge overlay count as salient and join the object mask.
struct SaliencyBackend {
    BackendKind kind = BackendKind::Threshold;
    double threshold_level = 0.25;  // Threshold: |luminance - median| cut
    int spectral_window = 3;        // SpectralResidual: box window over the log amplitude
};

// Pixel salient iff |luminance - median luminance| > level. Suited to images
// whose subject contrasts with a near-solid background.
img::BinaryMap threshold_saliency(const img::Image& image, double level);

// Spectral residual saliency: DFT -> log amplitude minus its box-filtered
// average -> inverse DFT with the original phase -> squared magnitude ->
// Gaussian smooth (sigma 2.5) -> binarize at 3x the mean.
img::BinaryMap spectral_residual_saliency(const img::Image& image, int avg_window);

// Backend mask post-processed to one coherent object: largest 8-connected
// component, 3x3 morphological closing, tight bbox. An empty raw mask falls
// back to the full frame.
CausalRegion localize(const img::Image& sharpened, const SaliencyBackend& backend);

img::Image extract_object(const img::Image& image, const CausalRegion& region);
img::Image extract_background(const img::Image& image, const CausalRegion& region);

// Full front half of the augmentation pipeline: Canny edges -> weighted
// sharpening -> saliency localization.
struct CrlConfig {
    double canny_sigma = 1.0;
    double canny_low = 0.1;
    double canny_high = 0.3;
    double lambda_weighted = 0.3;
    SaliencyBackend backend;
};

struct CausalSource {
    img::Image sharpened;
    CausalRegion region;
};

CausalSource sharpen_and_localize(const img::Image& image, const CrlConfig& cfg);

// Mask sidecar: P5 PGM with 0/255 values plus a "x1 y1 x2 y2" line in an
// adjacent text file.
void save_region(const CausalRegion& region, const std::string& pgm_path,
                 const std::string& bbox_path);
CausalRegion load_region(const std::string& pgm_path, const std::string& bbox_path);

}  // namespace fedcaug::crl
