#include "tdgem/kernels.hpp"

#include <cmath>
#include <vector>

namespace tdgem::kernels {

namespace detail {

double srgb_linearize(double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double srgb_linearize_deriv(double c) {
    return c <= 0.04045 ? 1.0 / 12.92
                        : (2.4 / 1.055) * std::pow((c + 0.055) / 1.055, 1.4);
}

namespace {
constexpr double kDelta = 6.0 / 29.0;
constexpr double kDelta3 = kDelta * kDelta * kDelta;
}  // namespace

double lab_f(double t) {
    return t > kDelta3 ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}

double lab_f_deriv(double t) {
    if (t > kDelta3) {
        const double r = std::cbrt(t);
        return 1.0 / (3.0 * r * r);
    }
    return 1.0 / (3.0 * kDelta * kDelta);
}

const double kRgbToXyz[9] = {
    0.4124564, 0.3575761, 0.1804375,  // X
    0.2126729, 0.7151522, 0.0721750,  // Y
    0.0193339, 0.1191920, 0.9503041,  // Z
};

const double kWhiteX = kRgbToXyz[0] + kRgbToXyz[1] + kRgbToXyz[2];
const double kWhiteY = kRgbToXyz[3] + kRgbToXyz[4] + kRgbToXyz[5];
const double kWhiteZ = kRgbToXyz[6] + kRgbToXyz[7] + kRgbToXyz[8];

void lab_pixel(const double* rgb, double* lab) {
    const double lr = srgb_linearize(rgb[0]);
    const double lg = srgb_linearize(rgb[1]);
    const double lb = srgb_linearize(rgb[2]);
    const double x = (kRgbToXyz[0] * lr + kRgbToXyz[1] * lg + kRgbToXyz[2] * lb) / kWhiteX;
    const double y = (kRgbToXyz[3] * lr + kRgbToXyz[4] * lg + kRgbToXyz[5] * lb) / kWhiteY;
    const double z = (kRgbToXyz[6] * lr + kRgbToXyz[7] * lg + kRgbToXyz[8] * lb) / kWhiteZ;
    const double fx = lab_f(x);
    const double fy = lab_f(y);
    const double fz = lab_f(z);
    lab[0] = 116.0 * fy - 16.0;
    lab[1] = 500.0 * (fx - fy);
    lab[2] = 200.0 * (fy - fz);
}

void lab_pixel_bwd(const double* rgb, const double* glab, double* grgb) {
    const double lr = srgb_linearize(rgb[0]);
    const double lg = srgb_linearize(rgb[1]);
    const double lb = srgb_linearize(rgb[2]);
    const double x = (kRgbToXyz[0] * lr + kRgbToXyz[1] * lg + kRgbToXyz[2] * lb) / kWhiteX;
    const double y = (kRgbToXyz[3] * lr + kRgbToXyz[4] * lg + kRgbToXyz[5] * lb) / kWhiteY;
    const double z = (kRgbToXyz[6] * lr + kRgbToXyz[7] * lg + kRgbToXyz[8] * lb) / kWhiteZ;

    const double gfx = 500.0 * glab[1];
    const double gfy = 116.0 * glab[0] - 500.0 * glab[1] + 200.0 * glab[2];
    const double gfz = -200.0 * glab[2];

    const double gx = gfx * lab_f_deriv(x) / kWhiteX;
    const double gy = gfy * lab_f_deriv(y) / kWhiteY;
    const double gz = gfz * lab_f_deriv(z) / kWhiteZ;

    const double glr = kRgbToXyz[0] * gx + kRgbToXyz[3] * gy + kRgbToXyz[6] * gz;
    const double glg = kRgbToXyz[1] * gx + kRgbToXyz[4] * gy + kRgbToXyz[7] * gz;
    const double glb = kRgbToXyz[2] * gx + kRgbToXyz[5] * gy + kRgbToXyz[8] * gz;

    grgb[0] += glr * srgb_linearize_deriv(rgb[0]);
    grgb[1] += glg * srgb_linearize_deriv(rgb[1]);
    grgb[2] += glb * srgb_linearize_deriv(rgb[2]);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// serial reference

namespace serial {

void fill(double* x, std::size_t n, double v) {
    for (std::size_t i = 0; i < n; ++i) x[i] = v;
}

void copy(const double* src, double* dst, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = src[i];
}

void add(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale(const double* a, double s, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double sum(const double* x, std::size_t n) {
    const std::size_t nchunks = (n + kReduceChunk - 1) / kReduceChunk;
    double acc = 0.0;
    for (std::size_t c = 0; c < nchunks; ++c) {
        const std::size_t lo = c * kReduceChunk;
        const std::size_t hi = lo + kReduceChunk < n ? lo + kReduceChunk : n;
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += x[i];
        acc += s;
    }
    return acc;
}

double dot(const double* a, const double* b, std::size_t n) {
    const std::size_t nchunks = (n + kReduceChunk - 1) / kReduceChunk;
    double acc = 0.0;
    for (std::size_t c = 0; c < nchunks; ++c) {
        const std::size_t lo = c * kReduceChunk;
        const std::size_t hi = lo + kReduceChunk < n ? lo + kReduceChunk : n;
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += a[i] * b[i];
        acc += s;
    }
    return acc;
}

void matmul(const double* A, const double* B, double* C, std::size_t m,
            std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = C + i * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
        for (std::size_t p = 0; p < k; ++p) {
            const double a = A[i * k + p];
            const double* bp = B + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += a * bp[j];
        }
    }
}

void matmul_tn(const double* A, const double* B, double* C, std::size_t m,
               std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < k; ++i) {
        double* ci = C + i * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
        for (std::size_t p = 0; p < m; ++p) {
            const double a = A[p * k + i];
            const double* bp = B + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += a * bp[j];
        }
    }
}

void matmul_nt(const double* A, const double* B, double* C, std::size_t m,
               std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = A + i * n;
        double* ci = C + i * k;
        for (std::size_t j = 0; j < k; ++j) {
            const double* bj = B + j * n;
            double s = 0.0;
            for (std::size_t p = 0; p < n; ++p) s += ai[p] * bj[p];
            ci[j] = s;
        }
    }
}

void leaky_relu(const double* x, double slope, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : slope * x[i];
}

void leaky_relu_bwd(const double* x, const double* g, double slope, double* gx,
                    std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * (x[i] > 0.0 ? 1.0 : slope);
}

void tanh_fwd(const double* x, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(x[i]);
}

void tanh_bwd(const double* y, const double* g, double* gx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
}

void srgb_to_lab(const double* rgb, double* lab, std::size_t npix) {
    for (std::size_t p = 0; p < npix; ++p) detail::lab_pixel(rgb + 3 * p, lab + 3 * p);
}

void srgb_to_lab_bwd(const double* rgb, const double* glab, double* grgb,
                     std::size_t npix) {
    for (std::size_t p = 0; p < npix; ++p)
        detail::lab_pixel_bwd(rgb + 3 * p, glab + 3 * p, grgb + 3 * p);
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP-parallel variants

namespace par {

namespace {
using idx = long long;  // OpenMP wants signed loop indexes
}

void fill(double* x, std::size_t n, double v) {
#pragma omp parallel for schedule(static)
    for (idx i = 0; i < (idx)n; ++i) x[i] = v;
}

void copy(const double* src, double* dst, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (idx i = 0; i < (idx)n; ++i) dst[i] = src[i];
}

void add(const double* a, const double* b, double* out, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (idx i = 0; i < (idx)n; ++i) out[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* out, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (idx i = 0; i < (idx)n; ++i) out[i] = a[i] - b[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (idx i = 0; i < (idx)n; ++i) out[i] = a[i] * b[i];
}

void scale(const double* a, double s, double* out, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (idx i = 0; i < (idx)n; ++i) out[i] = a[i] * s;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (idx i = 0; i < (idx)n; ++i) y[i] += a * x[i];
}

// Chunked reduction: chunk sums are computed in parallel, each chunk serially,
// and the chunk results are accumulated in index order. The result matches
// serial::sum bit for bit regardless of the thread count.
double sum(const double* x, std::size_t n) {
    const std::size_t nchunks = (n + kReduceChunk - 1) / kReduceChunk;
    std::vector<double> partial(nchunks, 0.0);
#pragma omp parallel for schedule(static)
    for (idx c = 0; c < (idx)nchunks; ++c) {
        const std::size_t lo = (std::size_t)c * kReduceChunk;
        const std::size_t hi = lo + kReduceChunk < n ? lo + kReduceChunk : n;
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += x[i];
        partial[c] = s;
    }
    double acc = 0.0;
    for (std::size_t c = 0; c < nchunks; ++c) acc += partial[c];
    return acc;
}

double dot(const double* a, const double* b, std::size_t n) {
    const std::size_t nchunks = (n + kReduceChunk - 1) / kReduceChunk;
    std::vector<double> partial(nchunks, 0.0);
#pragma omp parallel for schedule(static)
    for (idx c = 0; c < (idx)nchunks; ++c) {
        const std::size_t lo = (std::size_t)c * kReduceChunk;
        const std::size_t hi = lo + kReduceChunk < n ? lo + kReduceChunk : n;
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += a[i] * b[i];
        partial[c] = s;
    }
    double acc = 0.0;
    for (std::size_t c = 0; c < nchunks; ++c) acc += partial[c];
    return acc;
}

void matmul(const double* A, const double* B, double* C, std::size_t m,
            std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (idx i = 0; i < (idx)m; ++i) {
        double* ci = C + i * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
        for (std::size_t p = 0; p < k; ++p) {
            const double a = A[i * k + p];
            const double* bp = B + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += a * bp[j];
        }
    }
}

void matmul_tn(const double* A, const double* B, double* C, std::size_t m,
               std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (idx i = 0; i < (idx)k; ++i) {
        double* ci = C + i * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
        for (std::size_t p = 0; p < m; ++p) {
            const double a = A[p * k + i];
            const double* bp = B + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += a * bp[j];
        }
    }
}

void matmul_nt(const double* A, const double* B, double* C, std::size_t m,
               std::size_t n, std::size_t k) {
#pragma omp parallel for schedule(static)
    for (idx i = 0; i < (idx)m; ++i) {
        const double* ai = A + i * n;
        double* ci = C + i * k;
        for (std::size_t j = 0; j < k; ++j) {
            const double* bj = B + j * n;
            double s = 0.0;
            for (std::size_t p = 0; p < n; ++p) s += ai[p] * bj[p];
            ci[j] = s;
        }
    }
}

void leaky_relu(const double* x, double slope, double* out, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (idx i = 0; i < (idx)n; ++i) out[i] = x[i] > 0.0 ? x[i] : slope * x[i];
}

void leaky_relu_bwd(const double* x, const double* g, double slope, double* gx,
                    std::size_t n) {
#pragma omp parallel for schedule(static)
    for (idx i = 0; i < (idx)n; ++i) gx[i] += g[i] * (x[i] > 0.0 ? 1.0 : slope);
}

void tanh_fwd(const double* x, double* out, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (idx i = 0; i < (idx)n; ++i) out[i] = std::tanh(x[i]);
}

void tanh_bwd(const double* y, const double* g, double* gx, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (idx i = 0; i < (idx)n; ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
}

void srgb_to_lab(const double* rgb, double* lab, std::size_t npix) {
#pragma omp parallel for schedule(static)
    for (idx p = 0; p < (idx)npix; ++p) detail::lab_pixel(rgb + 3 * p, lab + 3 * p);
}

void srgb_to_lab_bwd(const double* rgb, const double* glab, double* grgb,
                     std::size_t npix) {
#pragma omp parallel for schedule(static)
    for (idx p = 0; p < (idx)npix; ++p)
        detail::lab_pixel_bwd(rgb + 3 * p, glab + 3 * p, grgb + 3 * p);
}

}  // namespace par

// ---------------------------------------------------------------------------
// dispatch

namespace {
bool g_parallel = true;
}

bool parallel_enabled() { return g_parallel; }
void set_parallel_enabled(bool on) { g_parallel = on; }

#define TDGEM_DISPATCH(call) \
    do {                     \
        if (g_parallel)      \
            par::call;       \
        else                 \
            serial::call;    \
    } while (0)

void fill(double* x, std::size_t n, double v) { TDGEM_DISPATCH(fill(x, n, v)); }
void copy(const double* s, double* d, std::size_t n) { TDGEM_DISPATCH(copy(s, d, n)); }
void add(const double* a, const double* b, double* o, std::size_t n) { TDGEM_DISPATCH(add(a, b, o, n)); }
void sub(const double* a, const double* b, double* o, std::size_t n) { TDGEM_DISPATCH(sub(a, b, o, n)); }
void mul(const double* a, const double* b, double* o, std::size_t n) { TDGEM_DISPATCH(mul(a, b, o, n)); }
void scale(const double* a, double s, double* o, std::size_t n) { TDGEM_DISPATCH(scale(a, s, o, n)); }
void axpy(double a, const double* x, double* y, std::size_t n) { TDGEM_DISPATCH(axpy(a, x, y, n)); }

double sum(const double* x, std::size_t n) {
    return g_parallel ? par::sum(x, n) : serial::sum(x, n);
}

double dot(const double* a, const double* b, std::size_t n) {
    return g_parallel ? par::dot(a, b, n) : serial::dot(a, b, n);
}

void matmul(const double* A, const double* B, double* C, std::size_t m,
            std::size_t k, std::size_t n) {
    TDGEM_DISPATCH(matmul(A, B, C, m, k, n));
}

void matmul_tn(const double* A, const double* B, double* C, std::size_t m,
               std::size_t k, std::size_t n) {
    TDGEM_DISPATCH(matmul_tn(A, B, C, m, k, n));
}

void matmul_nt(const double* A, const double* B, double* C, std::size_t m,
               std::size_t n, std::size_t k) {
    TDGEM_DISPATCH(matmul_nt(A, B, C, m, n, k));
}

void leaky_relu(const double* x, double s, double* o, std::size_t n) {
    TDGEM_DISPATCH(leaky_relu(x, s, o, n));
}

void leaky_relu_bwd(const double* x, const double* g, double s, double* gx,
                    std::size_t n) {
    TDGEM_DISPATCH(leaky_relu_bwd(x, g, s, gx, n));
}

void tanh_fwd(const double* x, double* o, std::size_t n) { TDGEM_DISPATCH(tanh_fwd(x, o, n)); }
void tanh_bwd(const double* y, const double* g, double* gx, std::size_t n) {
    TDGEM_DISPATCH(tanh_bwd(y, g, gx, n));
}

void srgb_to_lab(const double* rgb, double* lab, std::size_t npix) {
    TDGEM_DISPATCH(srgb_to_lab(rgb, lab, npix));
}

void srgb_to_lab_bwd(const double* rgb, const double* glab, double* grgb,
                     std::size_t npix) {
    TDGEM_DISPATCH(srgb_to_lab_bwd(rgb, glab, grgb, npix));
}

#undef TDGEM_DISPATCH

}  // namespace tdgem::kernels
