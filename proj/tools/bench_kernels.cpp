// Times the serial reference kernels against the OpenMP variants and checks
// that both produce identical results.

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "tdgem/kernels.hpp"
#include "tdgem/tensor.hpp"

using namespace tdgem;
namespace k = tdgem::kernels;
using clock_type = std::chrono::steady_clock;

namespace {

double ms_since(clock_type::time_point t0) {
    return std::chrono::duration<double, std::milli>(clock_type::now() - t0).count();
}

template <typename Fn>
double time_best_of(int reps, Fn&& fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = clock_type::now();
        fn();
        best = std::min(best, ms_since(t0));
    }
    return best;
}

void report(const char* name, double serial_ms, double parallel_ms, bool match) {
    std::printf("%-14s serial %8.3f ms   omp %8.3f ms   speedup %5.2fx   %s\n", name,
                serial_ms, parallel_ms, serial_ms / parallel_ms,
                match ? "results match" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
    const std::size_t n = argc > 1 ? std::stoull(argv[1]) : 4'000'000;
    const int reps = 5;
    Rng rng(42);

    std::vector<double> a(n), b(n), out_s(n), out_p(n);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = rng.uniform(-1.0, 1.0);
        b[i] = rng.uniform(-1.0, 1.0);
    }

    std::printf("element count: %zu, best of %d runs\n\n", n, reps);

    {
        const double ts = time_best_of(reps, [&] { k::serial::add(a.data(), b.data(), out_s.data(), n); });
        const double tp = time_best_of(reps, [&] { k::par::add(a.data(), b.data(), out_p.data(), n); });
        report("add", ts, tp, out_s == out_p);
    }
    {
        const double ts = time_best_of(reps, [&] { k::serial::mul(a.data(), b.data(), out_s.data(), n); });
        const double tp = time_best_of(reps, [&] { k::par::mul(a.data(), b.data(), out_p.data(), n); });
        report("mul", ts, tp, out_s == out_p);
    }
    {
        double rs = 0, rp = 0;
        const double ts = time_best_of(reps, [&] { rs = k::serial::dot(a.data(), b.data(), n); });
        const double tp = time_best_of(reps, [&] { rp = k::par::dot(a.data(), b.data(), n); });
        report("dot", ts, tp, rs == rp);
    }
    {
        const double ts = time_best_of(reps, [&] { k::serial::tanh_fwd(a.data(), out_s.data(), n); });
        const double tp = time_best_of(reps, [&] { k::par::tanh_fwd(a.data(), out_p.data(), n); });
        report("tanh", ts, tp, out_s == out_p);
    }
    {
        const double ts = time_best_of(reps, [&] { k::serial::leaky_relu(a.data(), 0.2, out_s.data(), n); });
        const double tp = time_best_of(reps, [&] { k::par::leaky_relu(a.data(), 0.2, out_p.data(), n); });
        report("leaky_relu", ts, tp, out_s == out_p);
    }
    {
        const std::size_t npix = n / 3;
        std::vector<double> rgb(npix * 3), lab_s(npix * 3), lab_p(npix * 3);
        for (auto& v : rgb) v = rng.uniform();
        const double ts = time_best_of(reps, [&] { k::serial::srgb_to_lab(rgb.data(), lab_s.data(), npix); });
        const double tp = time_best_of(reps, [&] { k::par::srgb_to_lab(rgb.data(), lab_p.data(), npix); });
        report("srgb_to_lab", ts, tp, lab_s == lab_p);
    }
    {
        const std::size_t m = 384, kk = 384, nn = 384;
        std::vector<double> A(m * kk), B(kk * nn), Cs(m * nn), Cp(m * nn);
        for (auto& v : A) v = rng.uniform(-1.0, 1.0);
        for (auto& v : B) v = rng.uniform(-1.0, 1.0);
        const double ts = time_best_of(reps, [&] { k::serial::matmul(A.data(), B.data(), Cs.data(), m, kk, nn); });
        const double tp = time_best_of(reps, [&] { k::par::matmul(A.data(), B.data(), Cp.data(), m, kk, nn); });
        report("matmul 384^3", ts, tp, Cs == Cp);
    }
    return 0;
}
