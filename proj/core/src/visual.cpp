#include "octc/visual.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace octc {

double flow_p99_magnitude(const FlowField& flow) {
    std::vector<double> mags;
    mags.reserve(static_cast<size_t>(flow.width) * flow.height);
    for (int y = 0; y < flow.height; ++y)
        for (int x = 0; x < flow.width; ++x)
            mags.push_back(std::hypot(static_cast<double>(flow.u(x, y)),
                                      static_cast<double>(flow.v(x, y))));
    size_t idx = static_cast<size_t>(std::llround(0.99 * static_cast<double>(mags.size() - 1)));
    std::nth_element(mags.begin(), mags.begin() + static_cast<ptrdiff_t>(idx), mags.end());
    return mags[idx];
}

namespace {

void hsv_to_rgb(double h_deg, double s, double v, float rgb[3]) {
    double c = v * s;
    double hp = h_deg / 60.0;
    double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else { r = c; b = x; }
    double m = v - c;
    rgb[0] = static_cast<float>(r + m);
    rgb[1] = static_cast<float>(g + m);
    rgb[2] = static_cast<float>(b + m);
}

}  // namespace

Image flow_to_color(const FlowField& flow) {
    double norm = flow_p99_magnitude(flow);
    Image img(flow.width, flow.height, 3);
    for (int y = 0; y < flow.height; ++y)
        for (int x = 0; x < flow.width; ++x) {
            double u = flow.u(x, y), v = flow.v(x, y);
            double mag = std::hypot(u, v);
            double hue = std::atan2(v, u) * 180.0 / 3.14159265358979323846;
            if (hue < 0) hue += 360.0;
            if (hue >= 360.0) hue = 0.0;
            double sat = norm > 0.0 ? std::min(1.0, mag / norm) : 0.0;
            float rgb[3];
            hsv_to_rgb(hue, sat, 1.0, rgb);
            for (int c = 0; c < 3; ++c) img.at(c, x, y) = rgb[c];
        }
    return img;
}

Image gray_image(int width, int height, const std::vector<float>& values) {
    if (values.size() != static_cast<size_t>(width) * height)
        throw std::invalid_argument("gray_image value count mismatch");
    Image img(width, height, 3);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            float v = std::clamp(values[static_cast<size_t>(y) * width + x], 0.0f, 1.0f);
            for (int c = 0; c < 3; ++c) img.at(c, x, y) = v;
        }
    return img;
}

namespace {

void put_be32(std::vector<unsigned char>& out, uint32_t v) {
    out.push_back(static_cast<unsigned char>(v >> 24));
    out.push_back(static_cast<unsigned char>(v >> 16));
    out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v));
}

void put_chunk(std::vector<unsigned char>& out, const char type[4],
               const std::vector<unsigned char>& payload) {
    put_be32(out, static_cast<uint32_t>(payload.size()));
    size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    uLong crc = crc32(0L, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
    put_be32(out, static_cast<uint32_t>(crc));
}

}  // namespace

void write_png(const std::string& path, const Image& img) {
    if (img.channels != 3) throw std::invalid_argument("write_png requires a 3-channel image");

    // Raw scanlines, filter byte 0 per row.
    std::vector<unsigned char> raw;
    raw.reserve(static_cast<size_t>(img.height) * (1 + static_cast<size_t>(img.width) * 3));
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                int q = static_cast<int>(std::lround(img.at(c, x, y) * 255.0f));
                raw.push_back(static_cast<unsigned char>(std::clamp(q, 0, 255)));
            }
    }

    uLongf comp_size = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> compressed(comp_size);
    if (compress2(compressed.data(), &comp_size, raw.data(), static_cast<uLong>(raw.size()), 6) !=
        Z_OK)
        throw std::runtime_error("PNG deflate failed");
    compressed.resize(comp_size);

    std::vector<unsigned char> out;
    const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    out.insert(out.end(), sig, sig + 8);

    std::vector<unsigned char> ihdr;
    put_be32(ihdr, static_cast<uint32_t>(img.width));
    put_be32(ihdr, static_cast<uint32_t>(img.height));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // color type: truecolor
    ihdr.push_back(0);   // compression
    ihdr.push_back(0);   // filter
    ihdr.push_back(0);   // interlace
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", compressed);
    put_chunk(out, "IEND", {});

    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!os) throw std::runtime_error("write failed: " + path);
}

}  // namespace octc
