#include "tdgem/colorspace.hpp"

#include <algorithm>

#include "tdgem/kernels.hpp"

namespace tdgem::colorspace {

void srgb_to_lab_pixel(const double rgb[3], double lab[3]) {
    double clamped[3];
    for (int c = 0; c < 3; ++c) clamped[c] = std::clamp(rgb[c], 0.0, 1.0);
    kernels::detail::lab_pixel(clamped, lab);
}

LabImage srgb_to_lab(const ImageBuffer& img) {
    if (img.range_tag != RangeTag::Unit)
        throw TdgemError("srgb_to_lab: image must be in UNIT range; convert first");
    if (img.pixels.rank() != 3 || img.pixels.shape()[2] != 3)
        throw TdgemError("srgb_to_lab: expected a (H, W, 3) image");
    Tensor clamped = img.pixels;
    for (std::size_t i = 0; i < clamped.size(); ++i)
        clamped[i] = std::clamp(clamped[i], 0.0, 1.0);
    LabImage out{Tensor(img.pixels.shape())};
    kernels::srgb_to_lab(clamped.data(), out.pixels.data(), clamped.size() / 3);
    return out;
}

Tensor masked_mean_lab(const ImageBuffer& img, const RegionMask& mask) {
    if (img.height() != mask.height() || img.width() != mask.width())
        throw TdgemError("masked_mean_lab: mask shape does not match image");
    const double wsum = kernels::sum(mask.mask.data(), mask.mask.size());
    if (!(wsum > 0.0)) throw TdgemError("masked_mean_lab: empty foreground mask");
    const LabImage lab = srgb_to_lab(to_unit_range(img));
    Tensor out({3});
    for (std::size_t p = 0; p < mask.mask.size(); ++p)
        for (std::size_t c = 0; c < 3; ++c)
            out[c] += mask.mask[p] * lab.pixels[3 * p + c];
    for (std::size_t c = 0; c < 3; ++c) out[c] /= wsum;
    return out;
}

ad::Var lab_node(ad::Graph& g, ad::Var image, RangeTag range) {
    (void)g;
    ad::Var unit = range == RangeTag::Unit ? image : ad::signed_to_unit(image);
    return ad::srgb_to_lab(unit);
}

ad::Var masked_mean_lab_node(ad::Graph& g, ad::Var image, RangeTag range,
                             const RegionMask& mask) {
    if (!(mask.coverage() > 0.0))
        throw TdgemError("masked_mean_lab: empty foreground mask");
    return ad::masked_mean_channels(lab_node(g, image, range), mask.mask);
}

}  // namespace tdgem::colorspace
