#include "octc/cdf.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace octc {

namespace {

double median_of(std::vector<float>& v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (static_cast<double>(v[n / 2 - 1]) + v[n / 2]);
}

std::vector<double> empirical_cdf(std::vector<float>& sorted_values,
                                  const std::vector<int>& grid) {
    std::sort(sorted_values.begin(), sorted_values.end());
    std::vector<double> cdf(grid.size(), 0.0);
    double n = static_cast<double>(sorted_values.size());
    for (size_t i = 0; i < grid.size(); ++i) {
        auto it = std::upper_bound(sorted_values.begin(), sorted_values.end(),
                                   static_cast<float>(grid[i]));
        cdf[i] = n > 0 ? static_cast<double>(it - sorted_values.begin()) / n : 0.0;
    }
    return cdf;
}

}  // namespace

DisplacementCdf displacement_cdf(const std::vector<FlowField>& fields) {
    if (fields.empty()) throw std::invalid_argument("displacement_cdf needs at least one field");

    DisplacementCdf out;
    for (int g = -100; g <= 100; ++g) out.grid.push_back(g);

    std::vector<float> us, vs;
    for (const auto& f : fields)
        for (int y = 0; y < f.height; ++y)
            for (int x = 0; x < f.width; ++x) {
                float u = f.u(x, y), v = f.v(x, y);
                if (u >= -100.0f && u <= 100.0f) us.push_back(u);
                else ++out.excluded_u;
                if (v >= -100.0f && v <= 100.0f) vs.push_back(v);
                else ++out.excluded_v;
            }
    out.included_u = static_cast<int64_t>(us.size());
    out.included_v = static_cast<int64_t>(vs.size());
    if (us.empty() && vs.empty())
        throw std::invalid_argument("displacement_cdf: all values excluded as outliers");

    std::vector<float> us_m = us, vs_m = vs;
    out.median_u = median_of(us_m);
    out.median_v = median_of(vs_m);
    out.cdf_u = empirical_cdf(us, out.grid);
    out.cdf_v = empirical_cdf(vs, out.grid);
    return out;
}

std::string cdf_to_csv(const DisplacementCdf& cdf) {
    std::ostringstream os;
    os << "value,cdf_u,cdf_v\n";
    char buf[96];
    for (size_t i = 0; i < cdf.grid.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%d,%.9f,%.9f\n", cdf.grid[i], cdf.cdf_u[i],
                      cdf.cdf_v[i]);
        os << buf;
    }
    return os.str();
}

namespace {

void draw_line(Image& img, int x0, int y0, int x1, int y1, const float rgb[3]) {
    int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        if (x0 >= 0 && y0 >= 0 && x0 < img.width && y0 < img.height)
            for (int c = 0; c < 3; ++c) img.at(c, x0, y0) = rgb[c];
        if (x0 == x1 && y0 == y1) break;
        int e2 = 2 * err;
        if (e2 >= dy) { err += dy; x0 += sx; }
        if (e2 <= dx) { err += dx; y0 += sy; }
    }
}

}  // namespace

Image plot_cdf(const DisplacementCdf& cdf, int width, int height) {
    Image img(width, height, 3, 1.0f);  // white canvas
    int margin = 32;
    int x0 = margin, x1 = width - margin, y0 = height - margin, y1 = margin;

    const float axis[3] = {0.25f, 0.25f, 0.25f};
    const float grid_c[3] = {0.85f, 0.85f, 0.85f};
    const float u_c[3] = {0.1f, 0.3f, 0.85f};
    const float v_c[3] = {0.85f, 0.25f, 0.1f};

    auto px = [&](double value) {
        return x0 + static_cast<int>(std::lround((value + 100.0) / 200.0 * (x1 - x0)));
    };
    auto py = [&](double p) { return y0 - static_cast<int>(std::lround(p * (y0 - y1))); };

    for (int gv = -100; gv <= 100; gv += 25) draw_line(img, px(gv), y0, px(gv), y1, grid_c);
    for (int i = 0; i <= 4; ++i) {
        int y = py(i / 4.0);
        draw_line(img, x0, y, x1, y, grid_c);
    }
    draw_line(img, x0, y0, x1, y0, axis);
    draw_line(img, px(0), y0, px(0), y1, axis);

    for (size_t i = 1; i < cdf.grid.size(); ++i) {
        draw_line(img, px(cdf.grid[i - 1]), py(cdf.cdf_u[i - 1]), px(cdf.grid[i]),
                  py(cdf.cdf_u[i]), u_c);
        draw_line(img, px(cdf.grid[i - 1]), py(cdf.cdf_v[i - 1]), px(cdf.grid[i]),
                  py(cdf.cdf_v[i]), v_c);
    }
    return img;
}

}  // namespace octc
