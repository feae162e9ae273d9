#pragma once

#include <string>
#include <vector>

#include "octc/flow.hpp"
#include "octc/image.hpp"

namespace octc {

/// Empirical per-axis displacement CDFs over the symmetric grid -100..100
/// (step 1). Displacements outside [-100, 100] are excluded as outliers
/// before accumulation. median_v surfaces vertical asymmetry.
struct DisplacementCdf {
    std::vector<int> grid;       // -100..100
    std::vector<double> cdf_u;   // P(u <= grid[i]) among included u values
    std::vector<double> cdf_v;
    double median_u = 0.0;
    double median_v = 0.0;
    int64_t included_u = 0, included_v = 0;
    int64_t excluded_u = 0, excluded_v = 0;

    bool v_axis_asymmetric(double threshold_px = 0.5) const {
        return median_v > threshold_px || median_v < -threshold_px;
    }
};

/// Rejects an empty field list.
DisplacementCdf displacement_cdf(const std::vector<FlowField>& fields);

/// CSV rows of (value, cdf_u, cdf_v) with a header line.
std::string cdf_to_csv(const DisplacementCdf& cdf);

/// Simple line plot of both CDFs (u and v) for quick inspection.
Image plot_cdf(const DisplacementCdf& cdf, int width = 640, int height = 480);

}  // namespace octc
