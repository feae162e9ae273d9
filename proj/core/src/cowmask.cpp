#include "octc/cowmask.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace octc {

void CowmaskParams::validate() const {
    if (sigma_min <= 0.0 || sigma_max < sigma_min)
        throw std::invalid_argument("cowmask sigma range must satisfy 0 < min <= max");
    if (coverage_min <= 0.0 || coverage_max >= 1.0 || coverage_max < coverage_min)
        throw std::invalid_argument("cowmask coverage range must lie inside (0,1)");
}

namespace {

// Separable Gaussian blur, kernel radius ceil(3*sigma), reflective padding.
void gaussian_blur(std::vector<double>& field, int w, int h, double sigma) {
    int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    double norm = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
        kernel[i + radius] = v;
        norm += v;
    }
    for (double& v : kernel) v /= norm;

    auto reflect = [](int i, int n) {
        while (i < 0 || i >= n) {
            if (i < 0) i = -i - 1;
            if (i >= n) i = 2 * n - 1 - i;
        }
        return i;
    };

    std::vector<double> tmp(field.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[i + radius] * field[static_cast<size_t>(y) * w + reflect(x + i, w)];
            tmp[static_cast<size_t>(y) * w + x] = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[i + radius] * tmp[static_cast<size_t>(reflect(y + i, h)) * w + x];
            field[static_cast<size_t>(y) * w + x] = acc;
        }
}

}  // namespace

OcclusionMask generate_mask(int width, int height, const CowmaskParams& params, Rng& rng) {
    params.validate();
    if (width < 8 || height < 8)
        throw std::invalid_argument("cowmask extent must be at least 8x8");

    double sigma = rng.uniform(params.sigma_min, params.sigma_max);
    double coverage = rng.uniform(params.coverage_min, params.coverage_max);

    size_t n = static_cast<size_t>(width) * height;
    std::vector<double> noise(n);
    for (double& v : noise) v = rng.normal();
    gaussian_blur(noise, width, height, sigma);

    // Threshold at the empirical quantile: the floor(p*n) smallest values
    // become occluded.
    std::vector<double> sorted(noise);
    size_t k = static_cast<size_t>(coverage * static_cast<double>(n));
    k = std::min(k, n - 1);
    std::nth_element(sorted.begin(), sorted.begin() + k, sorted.end());
    double threshold = sorted[k];

    OcclusionMask mask(width, height);
    for (size_t i = 0; i < n; ++i) mask.data[i] = noise[i] < threshold ? 0 : 1;
    return mask;
}

Image apply_occlusion(const Image& img, const OcclusionMask& mask) {
    if (img.width != mask.width || img.height != mask.height)
        throw std::invalid_argument("apply_occlusion extent mismatch");
    Image out = img;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (!mask.at(x, y))
                for (int c = 0; c < img.channels; ++c) out.at(c, x, y) = 0.0f;
    return out;
}

}  // namespace octc
