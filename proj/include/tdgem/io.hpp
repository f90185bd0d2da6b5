#pragma once

// File formats of the toolkit:
//  - PNG (8-bit sRGB) image read/write, zlib-backed
//  - latent files: raw little-endian f32 (L, D) plus a JSON sidecar
//    {L, D, space_tag, seed} at <file>.json
//  - CSV scalar logs with (step, term, value) rows

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tdgem/core.hpp"

namespace tdgem::io {

// Images are written from UNIT range (SIGNED_UNIT inputs are converted);
// loading yields UNIT range.
void write_png(const std::filesystem::path& path, const ImageBuffer& img);
ImageBuffer read_png(const std::filesystem::path& path);

struct LatentFile {
    LatentCode code;
    std::uint64_t seed = 0;
};

void write_latent(const std::filesystem::path& path, const LatentCode& code,
                  std::uint64_t seed);
LatentFile read_latent(const std::filesystem::path& path);

struct ScalarLogRow {
    int step;
    std::string term;
    double value;
};

void write_scalar_log(const std::filesystem::path& path,
                      const std::vector<ScalarLogRow>& rows);

// Content digest of a file, for byte-reproducibility checks.
std::string file_digest(const std::filesystem::path& path);

}  // namespace tdgem::io
