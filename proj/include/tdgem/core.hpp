#pragma once

// Shared domain types of the editing toolkit. All types are immutable value
// types and safe to share across threads.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "tdgem/tensor.hpp"

namespace tdgem {

enum class SpaceTag { W, WPlus };

std::string to_string(SpaceTag t);
SpaceTag space_tag_from_string(const std::string& s);

// A point in the style latent space: one D-dimensional row per generator
// layer.
struct LatentCode {
    Tensor values;  // (L, D)
    SpaceTag space_tag = SpaceTag::WPlus;

    std::size_t layers() const { return values.rows(); }
    std::size_t dim() const { return values.cols(); }

    // L >= 3 (coarse/medium/fine must be non-degenerate), D >= 1, all finite
    void validate() const;
};

LatentCode make_latent(Tensor values, SpaceTag tag = SpaceTag::WPlus);

// Coarse = [0, coarse_end), medium = [coarse_end, medium_end),
// fine = [medium_end, layers).
struct LatentPartition {
    std::size_t layers = 0;
    std::size_t coarse_end = 0;
    std::size_t medium_end = 0;

    std::size_t coarse_size() const { return coarse_end; }
    std::size_t medium_size() const { return medium_end - coarse_end; }
    std::size_t fine_size() const { return layers - medium_end; }
};

// Rejects non-monotone or out-of-range split indices.
LatentPartition make_partition(std::size_t layers, std::size_t coarse_end,
                               std::size_t medium_end);

// Default split: the (4, 8) over 18 layers convention when it fits, even
// thirds otherwise (toy generators typically have few layers).
LatentPartition default_partition(std::size_t layers);

struct TextCondition {
    std::string shape_prompt;
    std::optional<std::string> color_prompt;
    Tensor shape_embedding;                 // dim E
    std::optional<Tensor> color_embedding;  // dim E, present iff color_prompt is

    void validate() const;
};

enum class RangeTag { SignedUnit, Unit };  // [-1,1] vs [0,1]

std::string to_string(RangeTag t);

struct ImageBuffer {
    Tensor pixels;  // (H, W, 3)
    RangeTag range_tag = RangeTag::Unit;

    std::size_t height() const { return pixels.shape().size() == 3 ? pixels.shape()[0] : 0; }
    std::size_t width() const { return pixels.shape().size() == 3 ? pixels.shape()[1] : 0; }

    // all pixels inside the declared range, tolerance 1e-5
    void validate() const;
};

ImageBuffer make_image(std::size_t height, std::size_t width, RangeTag tag);
// (x+1)/2 clamped into [0,1]; identity for images already in UNIT range
ImageBuffer to_unit_range(const ImageBuffer& img);

// Soft per-pixel foreground indicator in [0,1].
struct RegionMask {
    Tensor mask;  // (H, W)

    std::size_t height() const { return mask.rows(); }
    std::size_t width() const { return mask.cols(); }
    double coverage() const;  // sum of weights

    void validate() const;
};

RegionMask mask_complement(const RegionMask& a);
RegionMask mask_union(const RegionMask& a, const RegionMask& b);
RegionMask mask_intersection(const RegionMask& a, const RegionMask& b);
// min(1-a, 1-b): the region untouched by both foregrounds
RegionMask mask_background(const RegionMask& a, const RegionMask& b);

// The five loss coefficients; all finite and >= 0.
struct LossWeights {
    double clip = 1.0;
    double l2 = 1.0;
    double id = 1.0;
    double color = 5e-3;
    double bg = 0.3;

    void validate() const;

    static LossWeights sleeve_defaults() { return {1.0, 1.0, 1.0, 5e-3, 0.3}; }
    static LossWeights color_defaults() { return {1.0, 1.0, 1.0, 5e-3, 1.0}; }
};

struct EditConfig {
    LatentPartition partition{18, 4, 8};
    LossWeights weights{};
    bool inject_fine = true;
    bool use_id_loss = true;
    double learning_rate = 5e-4;
    int max_steps = 100000;
    std::uint64_t seed = 0;

    void validate() const;
};

// Key-value config file with [section] headers; unknown keys and sections are
// rejected. The schema is documented in the README.
EditConfig load_edit_config(const std::filesystem::path& path);
void save_edit_config(const EditConfig& cfg, const std::filesystem::path& path);
EditConfig parse_edit_config(const std::string& text);
std::string format_edit_config(const EditConfig& cfg);

}  // namespace tdgem
