#pragma once

// Shared test utilities: central finite-difference gradient checking and an
// independent scalar sRGB->LAB oracle (long-double arithmetic, written
// directly from the published reference formulas; kept separate from the
// library code path on purpose).

#include <algorithm>
#include <cmath>
#include <functional>

#include "tdgem/autodiff.hpp"
#include "tdgem/tensor.hpp"

namespace testsup {

using BuildFn = std::function<tdgem::ad::Var(tdgem::ad::Graph&, tdgem::ad::Var)>;

inline double eval_scalar(const tdgem::Tensor& x, const BuildFn& build) {
    tdgem::ad::Graph g;
    tdgem::ad::Var xv = g.input(x);
    tdgem::ad::Var out = build(g, xv);
    return g.val(out)[0];
}

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t probes = 0;
};

// Central finite differences vs the tape gradient at random coordinates.
inline GradCheckResult check_gradient(const tdgem::Tensor& x0, const BuildFn& build,
                                      tdgem::Rng& rng, int nprobes = 10,
                                      double h = 1e-6) {
    tdgem::ad::Graph g;
    tdgem::ad::Var xv = g.input(x0);
    tdgem::ad::Var loss = build(g, xv);
    g.backward(loss);
    const tdgem::Tensor analytic = g.grad(xv);

    GradCheckResult res;
    for (int p = 0; p < nprobes; ++p) {
        const std::size_t idx = rng.index(x0.size());
        tdgem::Tensor xp = x0, xm = x0;
        xp[idx] += h;
        xm[idx] -= h;
        const double fd = (eval_scalar(xp, build) - eval_scalar(xm, build)) / (2.0 * h);
        const double an = analytic[idx];
        const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-6});
        res.max_rel_err = std::max(res.max_rel_err, std::fabs(fd - an) / denom);
        ++res.probes;
    }
    return res;
}

// Independent LAB oracle (IEC 61966-2-1 companding, D65, CIE 1976 formulas).
inline void lab_oracle(double r, double g, double b, long double out[3]) {
    auto lin = [](long double c) -> long double {
        return c <= 0.04045L ? c / 12.92L : powl((c + 0.055L) / 1.055L, 2.4L);
    };
    const long double rl = lin(r), gl = lin(g), bl = lin(b);
    const long double m[9] = {0.4124564L, 0.3575761L, 0.1804375L,
                              0.2126729L, 0.7151522L, 0.0721750L,
                              0.0193339L, 0.1191920L, 0.9503041L};
    const long double xn = m[0] + m[1] + m[2];
    const long double yn = m[3] + m[4] + m[5];
    const long double zn = m[6] + m[7] + m[8];
    const long double x = (m[0] * rl + m[1] * gl + m[2] * bl) / xn;
    const long double y = (m[3] * rl + m[4] * gl + m[5] * bl) / yn;
    const long double z = (m[6] * rl + m[7] * gl + m[8] * bl) / zn;
    const long double delta = 6.0L / 29.0L;
    auto f = [delta](long double t) -> long double {
        return t > delta * delta * delta ? cbrtl(t)
                                         : t / (3.0L * delta * delta) + 4.0L / 29.0L;
    };
    out[0] = 116.0L * f(y) - 16.0L;
    out[1] = 500.0L * (f(x) - f(y));
    out[2] = 200.0L * (f(y) - f(z));
}

}  // namespace testsup
