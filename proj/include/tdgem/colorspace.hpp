#pragma once

// Exact sRGB -> XYZ -> CIE L*a*b* conversion (D65, IEC 61966-2-1 companding)
// used by the color loss and the ACD metric. The conversion is differentiable;
// SIGNED_UNIT inputs are mapped to [0,1] with a straight-through clamp before
// converting.

#include "tdgem/autodiff.hpp"
#include "tdgem/core.hpp"

namespace tdgem::colorspace {

struct LabImage {
    Tensor pixels;  // (H, W, 3), channels L*, a*, b*
    std::size_t height() const { return pixels.shape()[0]; }
    std::size_t width() const { return pixels.shape()[1]; }
};

// Requires UNIT range; out-of-range values are clamped to [0,1] first.
LabImage srgb_to_lab(const ImageBuffer& img);

// Scalar conversion of one sRGB triple in [0,1].
void srgb_to_lab_pixel(const double rgb[3], double lab[3]);

// Per-channel mask-weighted mean of the LAB conversion:
// sum(lab * mask) / sum(mask). Throws on an all-zero mask.
Tensor masked_mean_lab(const ImageBuffer& img, const RegionMask& mask);

// graph builders for the loss pipelines
ad::Var lab_node(ad::Graph& g, ad::Var image, RangeTag range);
ad::Var masked_mean_lab_node(ad::Graph& g, ad::Var image, RangeTag range,
                             const RegionMask& mask);

}  // namespace tdgem::colorspace
