#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "tdgem/autodiff.hpp"

using namespace tdgem;
using testsup::check_gradient;

namespace {
constexpr double kTol = 1e-4;
}

TEST_CASE("arithmetic composite gradcheck") {
    Rng rng(21);
    Tensor x = rng.normal_tensor({4, 3}, 1.0);
    auto build = [](ad::Graph& g, ad::Var xv) {
        ad::Var c = g.constant(Tensor::full({4, 3}, 0.7));
        ad::Var y = ad::add(ad::mul(xv, xv), ad::scale(ad::sub(xv, c), -1.3));
        return ad::sum(ad::add_scalar(y, 0.25));
    };
    CHECK(check_gradient(x, build, rng).max_rel_err < kTol);
}

TEST_CASE("matmul and affine gradcheck") {
    Rng rng(22);
    Tensor x = rng.normal_tensor({3, 4}, 1.0);
    Tensor b = rng.normal_tensor({4, 2}, 1.0);
    auto build = [&](ad::Graph& g, ad::Var xv) {
        return ad::sum(ad::matmul(xv, g.constant(b)));
    };
    CHECK(check_gradient(x, build, rng).max_rel_err < kTol);

    // gradient w.r.t. the right operand
    auto build_rhs = [&](ad::Graph& g, ad::Var bv) {
        return ad::sum(ad::mul(ad::matmul(g.constant(x), bv),
                               ad::matmul(g.constant(x), bv)));
    };
    CHECK(check_gradient(b, build_rhs, rng).max_rel_err < kTol);

    Tensor w = rng.normal_tensor({5, 4}, 1.0);
    Tensor bias = rng.normal_tensor({5}, 1.0);
    auto build_aff_x = [&](ad::Graph& g, ad::Var xv) {
        return ad::sum(ad::affine_rows(xv, g.constant(w), g.constant(bias)));
    };
    CHECK(check_gradient(x, build_aff_x, rng).max_rel_err < kTol);
    auto build_aff_w = [&](ad::Graph& g, ad::Var wv) {
        ad::Var out = ad::affine_rows(g.constant(x), wv, g.constant(bias));
        return ad::dot(out, out);
    };
    CHECK(check_gradient(w, build_aff_w, rng).max_rel_err < kTol);
    auto build_aff_b = [&](ad::Graph& g, ad::Var bv) {
        ad::Var out = ad::affine_rows(g.constant(x), g.constant(w), bv);
        return ad::dot(out, out);
    };
    CHECK(check_gradient(bias, build_aff_b, rng).max_rel_err < kTol);
}

TEST_CASE("reduction and scalar op gradcheck") {
    Rng rng(23);
    Tensor x = rng.normal_tensor({7}, 1.0);
    Tensor y = rng.normal_tensor({7}, 1.0);

    auto build_mean = [](ad::Graph& g, ad::Var xv) { (void)g; return ad::mean(xv); };
    CHECK(check_gradient(x, build_mean, rng).max_rel_err < kTol);

    auto build_dot = [&](ad::Graph& g, ad::Var xv) {
        return ad::dot(xv, g.constant(y));
    };
    CHECK(check_gradient(x, build_dot, rng).max_rel_err < kTol);

    auto build_norm = [](ad::Graph& g, ad::Var xv) { (void)g; return ad::l2norm(xv); };
    CHECK(check_gradient(x, build_norm, rng).max_rel_err < kTol);

    auto build_div = [&](ad::Graph&, ad::Var xv) {
        ad::Var num = ad::sum(xv);
        ad::Var den = ad::add_scalar(ad::dot(xv, xv), 3.0);
        return ad::div_s(num, den);
    };
    CHECK(check_gradient(x, build_div, rng).max_rel_err < kTol);

    auto build_scalar_t = [&](ad::Graph&, ad::Var xv) {
        ad::Var s = ad::add_scalar(ad::mean(xv), 2.0);
        return ad::sum(ad::mul_scalar_t(ad::mul(xv, xv), s));
    };
    CHECK(check_gradient(x, build_scalar_t, rng).max_rel_err < kTol);

    auto build_div_t = [&](ad::Graph&, ad::Var xv) {
        ad::Var s = ad::add_scalar(ad::dot(xv, xv), 1.0);
        return ad::sum(ad::div_scalar_t(xv, s));
    };
    CHECK(check_gradient(x, build_div_t, rng).max_rel_err < kTol);
}

TEST_CASE("nonlinearity gradcheck away from kinks") {
    Rng rng(24);
    Tensor x({6}, {0.9, -0.7, 1.3, -2.1, 0.4, -0.2});
    auto build_lrelu = [](ad::Graph& g, ad::Var xv) {
        (void)g;
        return ad::sum(ad::leaky_relu(xv, 0.2));
    };
    CHECK(check_gradient(x, build_lrelu, rng).max_rel_err < kTol);

    auto build_tanh = [](ad::Graph& g, ad::Var xv) {
        (void)g;
        return ad::sum(ad::mul(ad::tanh_t(xv), ad::tanh_t(xv)));
    };
    CHECK(check_gradient(x, build_tanh, rng).max_rel_err < kTol);

    auto build_abs = [](ad::Graph& g, ad::Var xv) {
        (void)g;
        return ad::sum(ad::abs_t(xv));
    };
    CHECK(check_gradient(x, build_abs, rng).max_rel_err < kTol);
}

TEST_CASE("shape plumbing gradcheck") {
    Rng rng(25);
    Tensor x = rng.normal_tensor({6, 4}, 1.0);
    auto build = [](ad::Graph&, ad::Var xv) {
        ad::Var top = ad::slice_rows(xv, 0, 2);
        ad::Var mid = ad::slice_rows(xv, 2, 5);
        ad::Var bot = ad::slice_rows(xv, 5, 6);
        ad::Var cat = ad::concat_rows({bot, top, mid});
        ad::Var flat = ad::reshape(cat, {24});
        return ad::dot(flat, flat);
    };
    CHECK(check_gradient(x, build, rng).max_rel_err < kTol);
}

TEST_CASE("slice/concat round trip reproduces the identity permutation") {
    Rng rng(26);
    Tensor x = rng.normal_tensor({18, 5}, 1.0);
    ad::Graph g;
    ad::Var xv = g.constant(x);
    ad::Var cat = ad::concat_rows({ad::slice_rows(xv, 0, 4), ad::slice_rows(xv, 4, 8),
                                   ad::slice_rows(xv, 8, 18)});
    const Tensor& out = g.val(cat);
    REQUIRE(out.same_shape(x));
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(out[i] == x[i]);
}

TEST_CASE("row-broadcast op gradcheck") {
    Rng rng(27);
    Tensor a = rng.normal_tensor({5, 3}, 1.0);
    Tensor v = rng.normal_tensor({3}, 1.0);
    auto build_a = [&](ad::Graph& g, ad::Var av) {
        ad::Var out = ad::add_rowvec(ad::mul_rowvec(av, g.constant(v)), g.constant(v));
        return ad::dot(out, out);
    };
    CHECK(check_gradient(a, build_a, rng).max_rel_err < kTol);
    auto build_v = [&](ad::Graph& g, ad::Var vv) {
        ad::Var out = ad::add_rowvec(ad::mul_rowvec(g.constant(a), vv), vv);
        return ad::dot(out, out);
    };
    CHECK(check_gradient(v, build_v, rng).max_rel_err < kTol);
}

TEST_CASE("normalization op gradcheck") {
    // all probes weight the output with a fixed random tensor: a plain
    // norm-of-output probe is nearly invariant for these ops and drowns the
    // finite differences in roundoff
    Rng rng(28);
    Tensor x = rng.normal_tensor({4, 6}, 1.0);
    Tensor cw = rng.normal_tensor({4, 6}, 1.0);

    auto build_pix = [&](ad::Graph& g, ad::Var xv) {
        ad::Var out = ad::pixelnorm_rows(xv, 1e-8);
        return ad::dot(out, g.constant(cw));
    };
    CHECK(check_gradient(x, build_pix, rng).max_rel_err < kTol);

    auto build_rownorm = [&](ad::Graph& g, ad::Var xv) {
        ad::Var out = ad::rownorm_meanstd(xv, 1e-8);
        return ad::add(ad::dot(out, g.constant(cw)),
                       ad::dot(ad::mul(out, out), g.constant(cw)));
    };
    CHECK(check_gradient(x, build_rownorm, rng).max_rel_err < kTol);

    Tensor v = rng.normal_tensor({9}, 1.0);
    Tensor vw = rng.normal_tensor({9}, 1.0);
    auto build_ln = [&](ad::Graph& g, ad::Var xv) {
        ad::Var out = ad::layernorm_vec(xv, 1e-5);
        return ad::dot(out, g.constant(vw));
    };
    CHECK(check_gradient(v, build_ln, rng).max_rel_err < kTol);

    auto build_nv = [&](ad::Graph& g, ad::Var xv) {
        ad::Var out = ad::normalize_vec(xv, 1e-12);
        return ad::dot(out, g.constant(vw));
    };
    CHECK(check_gradient(v, build_nv, rng).max_rel_err < kTol);
}

TEST_CASE("rownorm handles a constant row without NaNs") {
    Tensor x = Tensor::full({2, 5}, 3.25);
    ad::Graph g;
    ad::Var xv = g.input(x);
    ad::Var out = ad::rownorm_meanstd(xv, 1e-8);
    for (std::size_t i = 0; i < g.val(out).size(); ++i) CHECK(g.val(out)[i] == 0.0);
    g.backward(ad::sum(out));
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::isfinite(g.grad(xv)[i]));
}

TEST_CASE("imaging op gradcheck") {
    Rng rng(29);
    const std::size_t h = 4, w = 4;
    Tensor img = rng.uniform_tensor({h, w, 3}, -0.8, 0.8);  // in-gamut SIGNED_UNIT

    auto build_unit = [](ad::Graph& g, ad::Var xv) {
        (void)g;
        ad::Var u = ad::signed_to_unit(xv);
        return ad::dot(u, u);
    };
    CHECK(check_gradient(img, build_unit, rng).max_rel_err < kTol);

    Tensor unit_img = rng.uniform_tensor({h, w, 3}, 0.15, 0.85);
    auto build_lab = [](ad::Graph& g, ad::Var xv) {
        (void)g;
        ad::Var lab = ad::srgb_to_lab(xv);
        return ad::mean(ad::mul(lab, lab));
    };
    CHECK(check_gradient(unit_img, build_lab, rng).max_rel_err < kTol);

    Tensor mask({h, w});
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = (i % 3 == 0) ? 1.0 : 0.25;
    auto build_mmc = [&](ad::Graph& g, ad::Var xv) {
        (void)g;
        ad::Var m = ad::masked_mean_channels(xv, mask);
        return ad::dot(m, m);
    };
    CHECK(check_gradient(unit_img, build_mmc, rng).max_rel_err < kTol);

    auto build_cmr = [&](ad::Graph& g, ad::Var xv) {
        (void)g;
        ad::Var m = ad::channel_mean_rows(xv, h, w, 1, 3);
        return ad::dot(m, m);
    };
    CHECK(check_gradient(unit_img, build_cmr, rng).max_rel_err < kTol);

    auto build_maskmul = [&](ad::Graph& g, ad::Var xv) {
        (void)g;
        ad::Var m = ad::mul_mask_bcast(xv, mask);
        return ad::l2norm(m);
    };
    CHECK(check_gradient(unit_img, build_maskmul, rng).max_rel_err < kTol);

    auto build_pool = [&](ad::Graph& g, ad::Var xv) {
        (void)g;
        ad::Var p = ad::avgpool2d(xv, h, w, 2, 2);
        return ad::dot(p, p);
    };
    CHECK(check_gradient(unit_img, build_pool, rng).max_rel_err < kTol);
}

TEST_CASE("composite ops: mse and cosine") {
    Rng rng(30);
    Tensor a = rng.normal_tensor({8}, 1.0);
    Tensor b = rng.normal_tensor({8}, 1.0);

    auto build_mse = [&](ad::Graph& g, ad::Var av) {
        return ad::mse(av, g.constant(b));
    };
    CHECK(check_gradient(a, build_mse, rng).max_rel_err < kTol);

    auto build_cos = [&](ad::Graph& g, ad::Var av) {
        return ad::cosine_similarity(av, g.constant(b));
    };
    CHECK(check_gradient(a, build_cos, rng).max_rel_err < kTol);

    // cosine value sanity
    ad::Graph g;
    ad::Var av = g.constant(a);
    CHECK(g.val(ad::cosine_similarity(av, av))[0] == doctest::Approx(1.0));
}

TEST_CASE("backward requires a scalar root") {
    ad::Graph g;
    ad::Var x = g.input(Tensor::full({3}, 1.0));
    CHECK_THROWS_AS(g.backward(x), TdgemError);
}

TEST_CASE("straight-through clamp passes gradient at gamut edges") {
    Tensor x({2}, {1.5, -1.5});  // clamps to 1 and 0
    ad::Graph g;
    ad::Var xv = g.input(x);
    ad::Var u = ad::signed_to_unit(xv);
    CHECK(g.val(u)[0] == 1.0);
    CHECK(g.val(u)[1] == 0.0);
    g.backward(ad::sum(u));
    CHECK(g.grad(xv)[0] == 0.5);
    CHECK(g.grad(xv)[1] == 0.5);
}
