#pragma once

#include "octc/flow.hpp"
#include "octc/image.hpp"
#include "octc/rng.hpp"

namespace octc {

/// Smoothed-noise occlusion mask generator. Per mask, sigma and the occluded
/// coverage proportion are sampled uniformly from their ranges.
struct CowmaskParams {
    double sigma_min = 2.0;
    double sigma_max = 8.0;
    double coverage_min = 0.2;
    double coverage_max = 0.6;

    void validate() const;
};

/// Gaussian-smoothed i.i.d. noise thresholded at the empirical quantile that
/// occludes a proportion p of pixels (mask value 0 = occluded, 1 = visible).
OcclusionMask generate_mask(int width, int height, const CowmaskParams& params, Rng& rng);

/// Pixel-wise product: occluded pixels go black.
Image apply_occlusion(const Image& img, const OcclusionMask& mask);

}  // namespace octc
