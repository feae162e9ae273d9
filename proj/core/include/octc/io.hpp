#pragma once

#include <string>
#include <vector>

#include "octc/flow.hpp"
#include "octc/image.hpp"

namespace octc {

/// Middlebury .flo: float magic 202021.25 ("PIEH"), int32 width, int32 height,
/// interleaved (u,v) float32 row-major, all little-endian. Write-then-read is
/// a bitwise identity. Malformed files are rejected with the byte offset.
void write_flo(const std::string& path, const FlowField& flow);
FlowField read_flo(const std::string& path);

/// Binary PPM (P6, maxval 255). Images with values on the k/255 grid
/// round-trip bitwise; other values round to the nearest step.
void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);

/// Dataset manifest: one line per sequence directory, the directory followed
/// by its frame files in temporal order, space separated.
struct ManifestEntry {
    std::string directory;
    std::vector<std::string> frames;
};

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

/// Loads the frames of one manifest entry (paths resolved against the entry
/// directory).
std::vector<Image> load_manifest_frames(const ManifestEntry& entry);

}  // namespace octc
