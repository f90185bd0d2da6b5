#include "tdgem/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "tdgem/colorspace.hpp"
#include "tdgem/kernels.hpp"

namespace tdgem::metrics {

std::string region_name(Region r) {
    switch (r) {
        case Region::Full: return "full";
        case Region::Foreground: return "foreground";
        case Region::Background: return "background";
    }
    return "full";
}

Region region_from_string(const std::string& s) {
    if (s == "full") return Region::Full;
    if (s == "foreground") return Region::Foreground;
    if (s == "background") return Region::Background;
    throw TdgemError("unknown region '" + s + "' (expected full|foreground|background)");
}

namespace {

void check_pair(const ImageBuffer& a, const ImageBuffer& b, const char* op) {
    if (!a.pixels.same_shape(b.pixels))
        throw TdgemError(std::string(op) + ": image shapes differ");
    if (a.range_tag != b.range_tag)
        throw TdgemError(std::string(op) + ": range tags differ");
}

double range_width(RangeTag t) { return t == RangeTag::SignedUnit ? 2.0 : 1.0; }

}  // namespace

double psnr(const ImageBuffer& a, const ImageBuffer& b, const RegionMask* region,
            double cap_db) {
    check_pair(a, b, "psnr");
    const std::size_t npix = a.height() * a.width();
    double wsum = 0.0, sq = 0.0;
    for (std::size_t p = 0; p < npix; ++p) {
        const double w = region ? region->mask[p] : 1.0;
        if (w == 0.0) continue;
        wsum += w;
        for (std::size_t c = 0; c < 3; ++c) {
            const double d = a.pixels[3 * p + c] - b.pixels[3 * p + c];
            sq += w * d * d;
        }
    }
    if (!(wsum > 0.0)) throw TdgemError("psnr: empty region");
    const double mse = sq / (3.0 * wsum);
    const double max = range_width(a.range_tag);
    if (mse <= 0.0) return cap_db;
    return std::min(cap_db, 10.0 * std::log10(max * max / mse));
}

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

const std::vector<double>& ssim_kernel() {
    static const std::vector<double> k = [] {
        std::vector<double> v(kSsimWindow * kSsimWindow);
        const int half = kSsimWindow / 2;
        double total = 0.0;
        for (int r = 0; r < kSsimWindow; ++r)
            for (int c = 0; c < kSsimWindow; ++c) {
                const double dr = r - half, dc = c - half;
                const double w =
                    std::exp(-(dr * dr + dc * dc) / (2.0 * kSsimSigma * kSsimSigma));
                v[r * kSsimWindow + c] = w;
                total += w;
            }
        for (double& w : v) w /= total;
        return v;
    }();
    return k;
}

}  // namespace

double ssim(const ImageBuffer& a, const ImageBuffer& b, const RegionMask* region) {
    check_pair(a, b, "ssim");
    const std::size_t h = a.height(), w = a.width();
    if (h < kSsimWindow || w < kSsimWindow)
        throw TdgemError("ssim: image smaller than the 11x11 window");
    const double max = range_width(a.range_tag);
    const double c1 = (0.01 * max) * (0.01 * max);
    const double c2 = (0.03 * max) * (0.03 * max);
    const int half = kSsimWindow / 2;
    const std::vector<double>& kern = ssim_kernel();

    const long long nr = (long long)(h - 2 * half);
    const long long nc = (long long)(w - 2 * half);
    std::vector<double> window_vals((std::size_t)(nr * nc), 0.0);
    std::vector<unsigned char> included((std::size_t)(nr * nc), 0);

#pragma omp parallel for schedule(static)
    for (long long i = 0; i < nr * nc; ++i) {
        const std::size_t cr = (std::size_t)(i / nc) + half;
        const std::size_t cc = (std::size_t)(i % nc) + half;
        if (region && region->mask.at(cr, cc) <= 0.5) continue;
        double acc = 0.0;
        for (std::size_t ch = 0; ch < 3; ++ch) {
            double mu_a = 0, mu_b = 0, ssq_a = 0, ssq_b = 0, sab = 0;
            for (int dr = -half; dr <= half; ++dr)
                for (int dc = -half; dc <= half; ++dc) {
                    const double kw = kern[(dr + half) * kSsimWindow + (dc + half)];
                    const std::size_t p = (cr + dr) * w + (cc + dc);
                    const double va = a.pixels[3 * p + ch];
                    const double vb = b.pixels[3 * p + ch];
                    mu_a += kw * va;
                    mu_b += kw * vb;
                    ssq_a += kw * va * va;
                    ssq_b += kw * vb * vb;
                    sab += kw * va * vb;
                }
            const double var_a = ssq_a - mu_a * mu_a;
            const double var_b = ssq_b - mu_b * mu_b;
            const double cov = sab - mu_a * mu_b;
            acc += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
                   ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
        }
        window_vals[(std::size_t)i] = acc / 3.0;
        included[(std::size_t)i] = 1;
    }

    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < window_vals.size(); ++i) {
        if (!included[i]) continue;
        total += window_vals[i];
        ++count;
    }
    if (count == 0) throw TdgemError("ssim: no window centers inside the region");
    return total / (double)count;
}

// ---------------------------------------------------------------------------
// FID

namespace detail {

// Cyclic Jacobi rotations; fine for the small feature dimensions used here.
void symmetric_eigen(const Tensor& matrix, std::vector<double>& eigenvalues,
                     Tensor& eigenvectors) {
    const std::size_t n = matrix.rows();
    if (matrix.cols() != n) throw TdgemError("symmetric_eigen: matrix not square");
    Tensor a = matrix;
    Tensor v({n, n});
    for (std::size_t i = 0; i < n; ++i) v.at(i, i) = 1.0;

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a.at(p, q) * a.at(p, q);
        if (off < 1e-24) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a.at(p, q);
                if (std::fabs(apq) < 1e-300) continue;
                const double app = a.at(p, p), aqq = a.at(q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a.at(k, p), akq = a.at(k, q);
                    a.at(k, p) = c * akp - s * akq;
                    a.at(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a.at(p, k), aqk = a.at(q, k);
                    a.at(p, k) = c * apk - s * aqk;
                    a.at(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v.at(k, p), vkq = v.at(k, q);
                    v.at(k, p) = c * vkp - s * vkq;
                    v.at(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    eigenvalues.resize(n);
    for (std::size_t i = 0; i < n; ++i) eigenvalues[i] = a.at(i, i);
    eigenvectors = v;
}

}  // namespace detail

namespace {

struct GaussianFit {
    Tensor mean;  // (d)
    Tensor cov;   // (d, d), ridge included
};

GaussianFit fit_gaussian(const std::vector<Tensor>& features) {
    const std::size_t n = features.size();
    const std::size_t d = features[0].size();
    GaussianFit fit{Tensor({d}), Tensor({d, d})};
    for (const Tensor& f : features) {
        if (f.size() != d) throw TdgemError("fid: inconsistent feature dimensions");
        for (std::size_t i = 0; i < d; ++i) fit.mean[i] += f[i];
    }
    for (std::size_t i = 0; i < d; ++i) fit.mean[i] /= (double)n;
    if (n > 1) {
        for (const Tensor& f : features)
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j)
                    fit.cov.at(i, j) += (f[i] - fit.mean[i]) * (f[j] - fit.mean[j]);
        for (std::size_t i = 0; i < d * d; ++i) fit.cov[i] /= (double)(n - 1);
    }
    for (std::size_t i = 0; i < d; ++i) fit.cov.at(i, i) += 1e-6;
    return fit;
}

Tensor matrix_sqrt_psd(const Tensor& m) {
    std::vector<double> eig;
    Tensor vecs;
    detail::symmetric_eigen(m, eig, vecs);
    const std::size_t n = m.rows();
    Tensor out({n, n});
    for (std::size_t k = 0; k < n; ++k) {
        const double lambda = std::max(eig[k], 0.0);
        const double root = std::sqrt(lambda);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                out.at(i, j) += root * vecs.at(i, k) * vecs.at(j, k);
    }
    return out;
}

double frechet_from_fits(const GaussianFit& fa, const GaussianFit& fb) {
    const std::size_t d = fa.mean.size();
    double mean_sq = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double dm = fa.mean[i] - fb.mean[i];
        mean_sq += dm * dm;
    }
    const Tensor root_a = matrix_sqrt_psd(fa.cov);
    // trace((Sa Sb)^(1/2)) via the symmetrized product Sa^(1/2) Sb Sa^(1/2)
    Tensor tmp({d, d}), prod({d, d});
    kernels::matmul(root_a.data(), fb.cov.data(), tmp.data(), d, d, d);
    kernels::matmul(tmp.data(), root_a.data(), prod.data(), d, d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j) {
            const double s = 0.5 * (prod.at(i, j) + prod.at(j, i));
            prod.at(i, j) = s;
            prod.at(j, i) = s;
        }
    std::vector<double> eig;
    Tensor vecs;
    detail::symmetric_eigen(prod, eig, vecs);
    double trace_root = 0.0;
    for (double l : eig) trace_root += std::sqrt(std::max(l, 0.0));
    double trace_a = 0.0, trace_b = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        trace_a += fa.cov.at(i, i);
        trace_b += fb.cov.at(i, i);
    }
    return std::max(0.0, mean_sq + trace_a + trace_b - 2.0 * trace_root);
}

}  // namespace

double fid(const std::vector<Tensor>& features_a, const std::vector<Tensor>& features_b) {
    if (features_a.size() < 2 || features_b.size() < 2)
        throw TdgemError("fid: need at least 2 samples per set");
    return frechet_from_fits(fit_gaussian(features_a), fit_gaussian(features_b));
}

double acd(const ImageBuffer& a, const ImageBuffer& b, const RegionMask& region) {
    check_pair(a, b, "acd");
    const Tensor ma = colorspace::masked_mean_lab(a, region);
    const Tensor mb = colorspace::masked_mean_lab(b, region);
    double l1 = 0.0;
    for (std::size_t c = 0; c < 3; ++c) l1 += std::fabs(ma[c] - mb[c]);
    return l1;
}

MetricReport evaluate_folder(
    const std::vector<std::pair<ImageBuffer, ImageBuffer>>& pairs,
    const std::vector<std::string>& ids, const ParserBackend& parser, Region region,
    const IdentityFeatureBackend& feature_backend) {
    if (pairs.empty()) throw TdgemError("evaluate_folder: empty pair list");
    if (!ids.empty() && ids.size() != pairs.size())
        throw TdgemError("evaluate_folder: id/pair count mismatch");

    MetricReport report;
    report.region = region;
    report.n_images = pairs.size();

    std::vector<Tensor> feats_a, feats_b;
    double ssim_sum = 0.0, psnr_sum = 0.0, acd_sum = 0.0;

    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const std::string id = ids.empty() ? std::to_string(i) : ids[i];
        try {
            const ImageBuffer& orig = pairs[i].first;
            const ImageBuffer& edited = pairs[i].second;
            check_pair(orig, edited, "evaluate_folder");
            const RegionMask mask_orig = parser.parse(orig);
            const RegionMask mask_edit = parser.parse(edited);
            RegionMask rmask{Tensor::full({orig.height(), orig.width()}, 1.0)};
            if (region == Region::Foreground)
                rmask = mask_union(mask_orig, mask_edit);
            else if (region == Region::Background)
                rmask = mask_background(mask_orig, mask_edit);

            ssim_sum += ssim(orig, edited, region == Region::Full ? nullptr : &rmask);
            psnr_sum += psnr(orig, edited, region == Region::Full ? nullptr : &rmask);
            acd_sum += acd(orig, edited, rmask);

            // fixed input shape for the feature trunk: off-region pixels are
            // zeroed rather than cropped
            auto masked_features = [&](const ImageBuffer& img) {
                if (region == Region::Full) return feature_backend.features_tensor(img);
                ImageBuffer masked = img;
                for (std::size_t p = 0; p < rmask.mask.size(); ++p)
                    for (std::size_t c = 0; c < 3; ++c)
                        masked.pixels[3 * p + c] *= rmask.mask[p];
                return feature_backend.features_tensor(masked);
            };
            feats_a.push_back(masked_features(orig));
            feats_b.push_back(masked_features(edited));
        } catch (const TdgemError& e) {
            throw TdgemError("evaluate_folder: pair '" + id + "': " + e.what());
        }
    }

    report.ssim = ssim_sum / (double)pairs.size();
    report.psnr = psnr_sum / (double)pairs.size();
    report.acd = acd_sum / (double)pairs.size();
    if (pairs.size() >= 2) {
        report.fid = fid(feats_a, feats_b);
    } else {
        // single pair: Frechet distance of matched degenerate fits
        double mean_sq = 0.0;
        for (std::size_t i = 0; i < feats_a[0].size(); ++i) {
            const double dm = feats_a[0][i] - feats_b[0][i];
            mean_sq += dm * dm;
        }
        report.fid = mean_sq;
    }
    return report;
}

}  // namespace tdgem::metrics
