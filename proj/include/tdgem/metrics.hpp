#pragma once

// Region-restricted image-quality evaluation: PSNR, SSIM, FID and the average
// color difference (ACD), over full images or parser-derived regions.

#include <string>
#include <utility>
#include <vector>

#include "tdgem/backends.hpp"
#include "tdgem/core.hpp"

namespace tdgem::metrics {

enum class Region { Full, Foreground, Background };

std::string region_name(Region r);
Region region_from_string(const std::string& s);

struct MetricReport {
    double fid = 0.0;
    double ssim = 0.0;
    double psnr = 0.0;
    double acd = 0.0;
    Region region = Region::Full;
    std::size_t n_images = 0;
};

inline constexpr double kPsnrCapDb = 100.0;

// 10 log10(MAX^2 / MSE) over the (optionally mask-weighted) region; MAX is
// the declared range width. Identical images return the cap.
double psnr(const ImageBuffer& a, const ImageBuffer& b,
            const RegionMask* region = nullptr, double cap_db = kPsnrCapDb);

// Mean local SSIM (11x11 window, Gaussian sigma 1.5, standard constants) over
// windows whose centers lie in the region; channels averaged.
double ssim(const ImageBuffer& a, const ImageBuffer& b,
            const RegionMask* region = nullptr);

// Frechet distance between Gaussian fits of the two feature sets. Covariances
// carry a 1e-6 ridge; the matrix square root goes through an eigendecomposition
// of the symmetrized product with small negative eigenvalues clamped to zero.
double fid(const std::vector<Tensor>& features_a, const std::vector<Tensor>& features_b);

// L1 distance between the region-mean LAB colors of the two images.
double acd(const ImageBuffer& a, const ImageBuffer& b, const RegionMask& region);

// Batch protocol: per-pair region masks from the parser (background follows
// the joint-background convention of the losses), per-image metrics averaged,
// FID over pooled features of region-masked images.
MetricReport evaluate_folder(
    const std::vector<std::pair<ImageBuffer, ImageBuffer>>& pairs,
    const std::vector<std::string>& ids, const ParserBackend& parser, Region region,
    const IdentityFeatureBackend& feature_backend);

// detail, exposed for tests: symmetric eigendecomposition (cyclic Jacobi)
namespace detail {
void symmetric_eigen(const Tensor& matrix, std::vector<double>& eigenvalues,
                     Tensor& eigenvectors);
}

}  // namespace tdgem::metrics
