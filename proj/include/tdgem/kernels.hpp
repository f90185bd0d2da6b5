#pragma once

// Data-parallel compute primitives used by the tensor/autodiff layer and the
// metrics. Every kernel exists in two variants with identical contracts:
//
//   kernels::serial::*  plain loops, the reference implementation
//   kernels::par::*     OpenMP-parallel
//
// Reductions use a fixed chunk order in both variants, so serial and parallel
// results are bit-identical and independent of the thread count. The
// unqualified functions dispatch according to parallel_enabled().
// tools/bench_kernels compares the two variants.

#include <cstddef>

namespace tdgem::kernels {

inline constexpr std::size_t kReduceChunk = 2048;

namespace serial {

void fill(double* x, std::size_t n, double v);
void copy(const double* src, double* dst, std::size_t n);
void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void scale(const double* a, double s, double* out, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);  // y += a*x
double sum(const double* x, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);

// C[m x n] = A[m x k] * B[k x n], row-major, C overwritten
void matmul(const double* A, const double* B, double* C, std::size_t m,
            std::size_t k, std::size_t n);
// C[k x n] = A[m x k]^T * B[m x n]
void matmul_tn(const double* A, const double* B, double* C, std::size_t m,
               std::size_t k, std::size_t n);
// C[m x k] = A[m x n] * B[k x n]^T
void matmul_nt(const double* A, const double* B, double* C, std::size_t m,
               std::size_t n, std::size_t k);

void leaky_relu(const double* x, double slope, double* out, std::size_t n);
// gx += g * lrelu'(x); the subgradient at 0 is the negative-side slope
void leaky_relu_bwd(const double* x, const double* g, double slope, double* gx,
                    std::size_t n);
void tanh_fwd(const double* x, double* out, std::size_t n);
// gx += g * (1 - y^2), y = tanh(x) from the forward pass
void tanh_bwd(const double* y, const double* g, double* gx, std::size_t n);

// interleaved RGB pixels in [0,1] -> CIE L*a*b* (D65, sRGB companding)
void srgb_to_lab(const double* rgb, double* lab, std::size_t npix);
// grgb += J^T glab with J the per-pixel conversion Jacobian
void srgb_to_lab_bwd(const double* rgb, const double* glab, double* grgb,
                     std::size_t npix);

}  // namespace serial

namespace par {

void fill(double* x, std::size_t n, double v);
void copy(const double* src, double* dst, std::size_t n);
void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void scale(const double* a, double s, double* out, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
double sum(const double* x, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
void matmul(const double* A, const double* B, double* C, std::size_t m,
            std::size_t k, std::size_t n);
void matmul_tn(const double* A, const double* B, double* C, std::size_t m,
               std::size_t k, std::size_t n);
void matmul_nt(const double* A, const double* B, double* C, std::size_t m,
               std::size_t n, std::size_t k);
void leaky_relu(const double* x, double slope, double* out, std::size_t n);
void leaky_relu_bwd(const double* x, const double* g, double slope, double* gx,
                    std::size_t n);
void tanh_fwd(const double* x, double* out, std::size_t n);
void tanh_bwd(const double* y, const double* g, double* gx, std::size_t n);
void srgb_to_lab(const double* rgb, double* lab, std::size_t npix);
void srgb_to_lab_bwd(const double* rgb, const double* glab, double* grgb,
                     std::size_t npix);

}  // namespace par

bool parallel_enabled();
void set_parallel_enabled(bool on);

void fill(double* x, std::size_t n, double v);
void copy(const double* src, double* dst, std::size_t n);
void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void scale(const double* a, double s, double* out, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
double sum(const double* x, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
void matmul(const double* A, const double* B, double* C, std::size_t m,
            std::size_t k, std::size_t n);
void matmul_tn(const double* A, const double* B, double* C, std::size_t m,
               std::size_t k, std::size_t n);
void matmul_nt(const double* A, const double* B, double* C, std::size_t m,
               std::size_t n, std::size_t k);
void leaky_relu(const double* x, double slope, double* out, std::size_t n);
void leaky_relu_bwd(const double* x, const double* g, double slope, double* gx,
                    std::size_t n);
void tanh_fwd(const double* x, double* out, std::size_t n);
void tanh_bwd(const double* y, const double* g, double* gx, std::size_t n);
void srgb_to_lab(const double* rgb, double* lab, std::size_t npix);
void srgb_to_lab_bwd(const double* rgb, const double* glab, double* grgb,
                     std::size_t npix);

namespace detail {

// sRGB IEC 61966-2-1 inverse companding and its derivative
double srgb_linearize(double c);
double srgb_linearize_deriv(double c);

// CIE f(t) with the 6/29 knot (C1 across the knot) and its derivative
double lab_f(double t);
double lab_f_deriv(double t);

// Linear-RGB -> XYZ (D65). The white point is the exact row sums of the
// matrix so that gray axis inputs land on a* = b* = 0.
extern const double kRgbToXyz[9];
extern const double kWhiteX;
extern const double kWhiteY;
extern const double kWhiteZ;

void lab_pixel(const double* rgb, double* lab);
void lab_pixel_bwd(const double* rgb, const double* glab, double* grgb);

}  // namespace detail

}  // namespace tdgem::kernels
