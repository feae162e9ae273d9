#include "octc/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace octc {

namespace {

constexpr float kFloMagic = 202021.25f;

[[noreturn]] void flo_error(const std::string& path, const std::string& what, int64_t offset) {
    throw std::runtime_error(path + ": " + what + " (byte offset " + std::to_string(offset) + ")");
}

void put_le32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

bool get_le32(std::istream& is, uint32_t& v) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) return false;
    v = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
        (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
    return true;
}

}  // namespace

void write_flo(const std::string& path, const FlowField& flow) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    uint32_t magic_bits;
    std::memcpy(&magic_bits, &kFloMagic, 4);
    put_le32(os, magic_bits);
    put_le32(os, static_cast<uint32_t>(flow.width));
    put_le32(os, static_cast<uint32_t>(flow.height));
    for (float v : flow.data) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_le32(os, bits);
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

FlowField read_flo(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    uint32_t magic_bits;
    if (!get_le32(is, magic_bits)) flo_error(path, "truncated header", 0);
    float magic;
    std::memcpy(&magic, &magic_bits, 4);
    if (magic != kFloMagic)
        flo_error(path, "bad magic " + std::to_string(magic) + ", expected 202021.25", 0);
    uint32_t w, h;
    if (!get_le32(is, w)) flo_error(path, "truncated width", 4);
    if (!get_le32(is, h)) flo_error(path, "truncated height", 8);
    if (w == 0 || h == 0 || w > 1u << 20 || h > 1u << 20)
        flo_error(path, "implausible extent " + std::to_string(w) + "x" + std::to_string(h), 4);

    FlowField flow(static_cast<int>(w), static_cast<int>(h));
    for (size_t i = 0; i < flow.data.size(); ++i) {
        uint32_t bits;
        if (!get_le32(is, bits))
            flo_error(path, "truncated payload", 12 + static_cast<int64_t>(i) * 4);
        std::memcpy(&flow.data[i], &bits, 4);
    }
    return flow;
}

void write_ppm(const std::string& path, const Image& img) {
    if (img.channels != 3) throw std::invalid_argument("PPM requires a 3-channel image");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(img.width) * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                float v = img.at(c, x, y);
                int q = static_cast<int>(std::lround(v * 255.0f));
                row[static_cast<size_t>(x) * 3 + c] =
                    static_cast<unsigned char>(std::clamp(q, 0, 255));
            }
        os.write(reinterpret_cast<const char*>(row.data()),
                 static_cast<std::streamsize>(row.size()));
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

namespace {

int ppm_token(std::istream& is, const std::string& path) {
    // Skips whitespace and '#' comments, then reads one decimal value.
    int c = is.get();
    while (is) {
        if (c == '#') {
            while (is && c != '\n') c = is.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = is.get();
    }
    if (!is || !std::isdigit(c)) throw std::runtime_error(path + ": malformed PPM header");
    int value = 0;
    while (is && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        c = is.get();
    }
    return value;
}

}  // namespace

Image read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    char m0 = static_cast<char>(is.get());
    char m1 = static_cast<char>(is.get());
    if (!is || m0 != 'P' || m1 != '6')
        throw std::runtime_error(path + ": unsupported PPM type (only binary P6)");
    int w = ppm_token(is, path);
    int h = ppm_token(is, path);
    int maxval = ppm_token(is, path);
    if (maxval != 255) throw std::runtime_error(path + ": only maxval 255 supported");
    if (w <= 0 || h <= 0) throw std::runtime_error(path + ": bad extent");

    // The token reader consumed the single whitespace byte after maxval, so
    // binary pixel data starts here.
    Image img(w, h, 3);
    std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (!is) throw std::runtime_error(path + ": truncated pixel data");
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(c, x, y) = static_cast<float>(row[static_cast<size_t>(x) * 3 + c]) / 255.0f;
    }
    return img;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& e : entries) {
        os << e.directory;
        for (const auto& f : e.frames) os << " " << f;
        os << "\n";
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    std::vector<ManifestEntry> entries;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        ManifestEntry e;
        if (!(ls >> e.directory)) continue;
        std::string f;
        while (ls >> f) e.frames.push_back(f);
        if (e.frames.empty())
            throw std::runtime_error(path + ": manifest line without frames: " + line);
        entries.push_back(std::move(e));
    }
    return entries;
}

std::vector<Image> load_manifest_frames(const ManifestEntry& entry) {
    std::vector<Image> frames;
    frames.reserve(entry.frames.size());
    for (const auto& f : entry.frames) frames.push_back(read_ppm(entry.directory + "/" + f));
    return frames;
}

}  // namespace octc
