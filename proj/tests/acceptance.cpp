// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion. Exits nonzero if any check
// fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "support.hpp"
#include "tdgem/backends.hpp"
#include "tdgem/inversion.hpp"
#include "tdgem/io.hpp"
#include "tdgem/latent_opt.hpp"
#include "tdgem/losses.hpp"
#include "tdgem/manifest.hpp"
#include "tdgem/mapper.hpp"
#include "tdgem/metrics.hpp"
#include "tdgem/training.hpp"

using namespace tdgem;
namespace fs = std::filesystem;

namespace {

struct Checker {
    std::vector<std::string> failures;
    void require(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
    void require_near(double got, double want, double tol, const std::string& what) {
        if (!(std::fabs(got - want) <= tol)) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%s (got %.9g, want %.9g, tol %.1g)",
                          what.c_str(), got, want, tol);
            failures.push_back(buf);
        }
    }
};

struct Criterion {
    int id;
    std::string name;
    double time_limit_s;
    std::function<void(Checker&)> run;
};

double elapsed_s(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ImageBuffer solid_unit(double r, double g, double b, std::size_t side = 16) {
    ImageBuffer img = make_image(side, side, RangeTag::Unit);
    for (std::size_t p = 0; p < side * side; ++p) {
        img.pixels[3 * p] = r;
        img.pixels[3 * p + 1] = g;
        img.pixels[3 * p + 2] = b;
    }
    return img;
}

// the toy garment fixture shared by the training criterion: codes clustered
// around the inversion of a yellow band on a dark background
training::LatentDataset garment_dataset(const Backends& b, const ToyStackConfig& tc) {
    ImageBuffer target = make_image(tc.height, tc.width, RangeTag::SignedUnit);
    for (std::size_t r = 0; r < tc.height; ++r)
        for (std::size_t c = 0; c < tc.width; ++c) {
            const bool inband = c >= tc.width / 8 && c < 7 * tc.width / 8;
            double* px = target.pixels.data() + (r * tc.width + c) * 3;
            px[0] = inband ? 0.9 : -0.9;
            px[1] = inband ? 0.9 : -0.9;
            px[2] = -0.9;
        }
    inversion::FallbackConfig fc;
    fc.steps = 300;
    fc.learning_rate = 0.05;
    const Tensor center =
        inversion::encode_pivot_fallback(target, *b.generator, fc).values;

    Rng rng(1400);
    std::vector<training::DatasetItem> items;
    for (int i = 0; i < 25; ++i) {
        Tensor code = center;
        for (std::size_t j = 0; j < code.size(); ++j) code[j] += 0.01 * rng.normal();
        items.push_back({"garment" + std::to_string(i),
                         LatentCode{code, SpaceTag::WPlus}});
    }
    return training::split_dataset(std::move(items), 0.8, 11);  // 20 train / 5 test
}

// reference modulation MLP, written independently of the library path
std::vector<double> ref_mlp(const mapper::ModulationMLP& mlp, const Tensor& e) {
    const std::size_t dim = mlp.b1.size();
    std::vector<double> h(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t j = 0; j < e.size(); ++j) h[i] += mlp.w1.at(i, j) * e[j];
        h[i] += mlp.b1[i];
    }
    double mu = 0.0;
    for (double v : h) mu += v;
    mu /= (double)dim;
    double var = 0.0;
    for (double v : h) var += (v - mu) * (v - mu);
    var /= (double)dim;
    const double t = std::sqrt(var + 1e-5);
    for (double& v : h) v = (v - mu) / t;
    for (double& v : h) v = v > 0 ? v : 0.2 * v;
    std::vector<double> out(mlp.b2.size(), 0.0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        for (std::size_t j = 0; j < dim; ++j) out[i] += mlp.w2.at(i, j) * h[j];
        out[i] += mlp.b2[i];
    }
    return out;
}

mapper::ModulationLayerParams random_mod_params(std::size_t dim, std::size_t embed,
                                                Rng& rng) {
    mapper::ModulationLayerParams p;
    for (mapper::ModulationMLP* m : {&p.gamma, &p.beta}) {
        m->w1 = rng.normal_tensor({dim, embed}, 0.5);
        m->b1 = rng.normal_tensor({dim}, 0.2);
        m->w2 = rng.normal_tensor({dim, dim}, 0.5);
        m->b2 = rng.normal_tensor({dim}, 0.2);
    }
    return p;
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(TDGEM_CLI_PATH) + " " + args + " > " +
                            log.string() + " 2>&1";
    return WEXITSTATUS(std::system(cmd.c_str()));
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    return std::string((std::istreambuf_iterator<char>(f)),
                       std::istreambuf_iterator<char>());
}

// ---------------------------------------------------------------------------

void criterion_loss_identity(Checker& ck) {
    ToyStackConfig tc;
    Backends b = make_toy_backends(tc);
    Rng rng(201);

    const Tensor e = rng.normal_tensor({8}, 1.0);
    ck.require_near(losses::clip_loss(e, e), 0.0, 1e-9, "clip on equal embeddings");

    const ImageBuffer img{rng.uniform_tensor({16, 16, 3}, -0.9, 0.9),
                          RangeTag::SignedUnit};
    ck.require_near(losses::id_loss(img, img, *b.identity), 0.0, 1e-9,
                    "id on identical images");
    ck.require_near(losses::color_loss(img, img, *b.parser), 0.0, 1e-9,
                    "color on identical images");
    ck.require_near(losses::background_loss(img, img, *b.parser), 0.0, 1e-9,
                    "background on identical images");

    const LatentCode zero{Tensor({tc.layers, tc.dim}), SpaceTag::WPlus};
    ck.require_near(losses::norm_loss(zero), 0.0, 1e-9, "norm on zero residual");
    ck.require_near(losses::pti_loss(img, img, *b.perceptual, 1.0), 0.0, 1e-9,
                    "pti on perfect reconstruction");
}

void criterion_gradients(Checker& ck) {
    ToyStackConfig tc;
    Backends b = make_toy_backends(tc);
    Rng rng(202);
    constexpr double kTol = 1e-4;
    constexpr int kProbes = 10;

    {
        Tensor emb = rng.normal_tensor({8}, 1.0);
        Tensor anchor = rng.normal_tensor({8}, 1.0);
        auto build = [&](ad::Graph& g, ad::Var xv) {
            return losses::clip_loss_node(g, xv, g.constant(anchor));
        };
        ck.require(testsup::check_gradient(emb, build, rng, kProbes).max_rel_err < kTol,
                   "clip loss gradient");
    }
    {
        Tensor orig = rng.uniform_tensor({16, 16, 3}, -0.8, 0.8);
        Tensor edit = rng.uniform_tensor({16, 16, 3}, -0.8, 0.8);
        auto build = [&](ad::Graph& g, ad::Var xv) {
            ad::Var fo = b.identity->features(g, g.constant(orig), RangeTag::SignedUnit);
            ad::Var fe = b.identity->features(g, xv, RangeTag::SignedUnit);
            return ad::mse(fo, fe);
        };
        ck.require(testsup::check_gradient(edit, build, rng, kProbes).max_rel_err < kTol,
                   "id loss gradient");
    }
    {
        Tensor residual = rng.normal_tensor({tc.layers, tc.dim}, 0.5);
        auto build = [](ad::Graph& g, ad::Var xv) {
            (void)g;
            return ad::l2norm(xv);
        };
        ck.require(
            testsup::check_gradient(residual, build, rng, kProbes).max_rel_err < kTol,
            "norm loss gradient");
    }
    {
        Tensor orig = rng.uniform_tensor({16, 16, 3}, -0.8, 0.8);
        Tensor edit = rng.uniform_tensor({16, 16, 3}, -0.8, 0.8);
        const ImageBuffer orig_img{orig, RangeTag::SignedUnit};
        const RegionMask mo = b.parser->parse(orig_img);
        const Tensor mean_o = colorspace::masked_mean_lab(orig_img, mo);
        auto build_color = [&](ad::Graph& g, ad::Var xv) {
            const RegionMask me =
                b.parser->parse(ImageBuffer{g.val(xv), RangeTag::SignedUnit});
            ad::Var mm = colorspace::masked_mean_lab_node(g, xv, RangeTag::SignedUnit, me);
            return ad::sum(ad::abs_t(ad::sub(mm, g.constant(mean_o))));
        };
        ck.require(
            testsup::check_gradient(edit, build_color, rng, kProbes).max_rel_err < kTol,
            "color loss gradient");

        auto build_bg = [&](ad::Graph& g, ad::Var xv) {
            const RegionMask me =
                b.parser->parse(ImageBuffer{g.val(xv), RangeTag::SignedUnit});
            const RegionMask bg = mask_background(mo, me);
            return ad::l2norm(ad::mul_mask_bcast(ad::sub(xv, g.constant(orig)), bg.mask));
        };
        ck.require(
            testsup::check_gradient(edit, build_bg, rng, kProbes).max_rel_err < kTol,
            "background loss gradient");

        auto build_pti = [&](ad::Graph& g, ad::Var xv) {
            return losses::pti_loss_node(g, g.constant(orig), xv, RangeTag::SignedUnit,
                                         *b.perceptual, 1.0);
        };
        ck.require(
            testsup::check_gradient(edit, build_pti, rng, kProbes).max_rel_err < kTol,
            "pti loss gradient");
    }
    {
        mapper::ModulationLayerParams p = random_mod_params(6, 4, rng);
        const Tensor y0 = rng.normal_tensor({3, 6}, 1.0);
        const Tensor e0 = rng.normal_tensor({4}, 1.0);
        Tensor wy = rng.normal_tensor({3, 6}, 1.0);
        auto emit = [&](ad::Graph& g, ad::Var yv, ad::Var ev) {
            return mapper::modulate(g, yv, ev, g.constant(p.gamma.w1),
                                    g.constant(p.gamma.b1), g.constant(p.gamma.w2),
                                    g.constant(p.gamma.b2), g.constant(p.beta.w1),
                                    g.constant(p.beta.b1), g.constant(p.beta.w2),
                                    g.constant(p.beta.b2), mapper::kModulationEps);
        };
        auto build_y = [&](ad::Graph& g, ad::Var yv) {
            return ad::dot(emit(g, yv, g.constant(e0)), g.constant(wy));
        };
        ck.require(testsup::check_gradient(y0, build_y, rng, kProbes).max_rel_err < kTol,
                   "modulation gradient w.r.t. features");
        auto build_e = [&](ad::Graph& g, ad::Var ev) {
            return ad::dot(emit(g, g.constant(y0), ev), g.constant(wy));
        };
        ck.require(testsup::check_gradient(e0, build_e, rng, kProbes).max_rel_err < kTol,
                   "modulation gradient w.r.t. embedding");
    }
}

void criterion_colorspace(Checker& ck) {
    double lab[3];
    const double white[3] = {1, 1, 1};
    colorspace::srgb_to_lab_pixel(white, lab);
    ck.require_near(lab[0], 100.0, 1e-6, "white L*");
    ck.require_near(lab[1], 0.0, 1e-6, "white a*");
    ck.require_near(lab[2], 0.0, 1e-6, "white b*");

    const double black[3] = {0, 0, 0};
    colorspace::srgb_to_lab_pixel(black, lab);
    ck.require_near(lab[0], 0.0, 1e-6, "black L*");
    ck.require_near(lab[1], 0.0, 1e-6, "black a*");
    ck.require_near(lab[2], 0.0, 1e-6, "black b*");

    const double red[3] = {1, 0, 0};
    colorspace::srgb_to_lab_pixel(red, lab);
    ck.require_near(lab[0], 53.24, 0.05, "red L*");
    ck.require_near(lab[1], 80.09, 0.05, "red a*");
    ck.require_near(lab[2], 67.20, 0.05, "red b*");
    long double oracle[3];
    testsup::lab_oracle(1.0, 0.0, 0.0, oracle);
    for (int c = 0; c < 3; ++c)
        ck.require(std::fabs(lab[c] - (double)oracle[c]) < 1e-9,
                   "red channel vs independent oracle");

    double prev = -1.0;
    bool monotone = true;
    for (int i = 0; i < 100; ++i) {
        const double g = i / 99.0;
        const double rgb[3] = {g, g, g};
        colorspace::srgb_to_lab_pixel(rgb, lab);
        if (lab[0] <= prev) monotone = false;
        prev = lab[0];
    }
    ck.require(monotone, "gray-axis L* monotone over 100 levels");
}

void criterion_modulation(Checker& ck) {
    Rng rng(204);
    {
        mapper::ModulationLayerParams p = random_mod_params(6, 4, rng);
        p.gamma.w2 = Tensor({6, 6});
        p.gamma.b2 = Tensor({6});
        p.beta.w2 = Tensor({6, 6});
        p.beta.b2 = Tensor({6});
        const Tensor y = rng.normal_tensor({3, 6}, 1.0);
        const Tensor e = rng.normal_tensor({4}, 1.0);
        const Tensor out = mapper::modulate(y, e, p);
        bool all_ones = true;
        for (std::size_t i = 0; i < out.size(); ++i)
            if (out[i] != 1.0) all_ones = false;
        ck.require(all_ones, "zeroed nets give the exact all-ones tensor");
    }
    {
        mapper::ModulationLayerParams p = random_mod_params(5, 3, rng);
        const Tensor y = Tensor::full({1, 5}, 2.75);
        const Tensor e = rng.normal_tensor({3}, 1.0);
        const Tensor out = mapper::modulate(y, e, p);
        const std::vector<double> beta = ref_mlp(p.beta, e);
        for (std::size_t j = 0; j < 5; ++j)
            ck.require_near(out[j], 1.0 + beta[j], 1e-9,
                            "constant input returns 1 + f_beta(e)");
    }
    for (int trial = 0; trial < 3; ++trial) {
        mapper::ModulationLayerParams p = random_mod_params(16, 6, rng);
        const Tensor y = rng.normal_tensor({8, 16}, 1.3);
        const Tensor e = rng.normal_tensor({6}, 1.0);
        const Tensor out = mapper::modulate(y, e, p);
        // entrywise oracle
        const std::vector<double> gamma = ref_mlp(p.gamma, e);
        const std::vector<double> beta = ref_mlp(p.beta, e);
        for (std::size_t r = 0; r < 8; ++r) {
            double mu = 0.0;
            for (std::size_t j = 0; j < 16; ++j) mu += y.at(r, j);
            mu /= 16.0;
            double var = 0.0;
            for (std::size_t j = 0; j < 16; ++j)
                var += (y.at(r, j) - mu) * (y.at(r, j) - mu);
            var /= 16.0;
            const double sigma = std::sqrt(var);
            for (std::size_t j = 0; j < 16; ++j) {
                const double want = 1.0 + gamma[j] * (y.at(r, j) - mu) /
                                              (sigma + mapper::kModulationEps) +
                                    beta[j];
                if (std::fabs(out.at(r, j) - want) > 1e-6) {
                    ck.require(false, "entrywise oracle equality on random 8x16 case");
                    return;
                }
            }
        }
    }
}

void criterion_mapper_locality(Checker& ck) {
    Rng rng(205);
    const LatentPartition part = make_partition(6, 2, 4);

    // zero-initialized final affines: exact zero residual
    mapper::TdGemMapper zero_m(part, 8, 4, true, 11);
    TextCondition cond;
    cond.shape_prompt = "a long sleeve";
    cond.shape_embedding = rng.normal_tensor({4}, 1.0);
    cond.color_prompt = "blue";
    cond.color_embedding = rng.normal_tensor({4}, 1.0);
    const LatentCode w{rng.normal_tensor({6, 8}, 1.0), SpaceTag::WPlus};
    const LatentCode res0 = zero_m.forward_code(w, cond);
    bool exact_zero = true;
    for (std::size_t i = 0; i < res0.values.size(); ++i)
        if (res0.values[i] != 0.0) exact_zero = false;
    ck.require(exact_zero, "zero-initialized final affines give zero residual");

    // color locality
    mapper::TdGemMapper m(part, 8, 4, true, 11);
    m.randomize_all(99);
    TextCondition cond2 = cond;
    cond2.color_embedding = rng.normal_tensor({4}, 1.0);
    const LatentCode r1 = m.forward_code(w, cond);
    const LatentCode r2 = m.forward_code(w, cond2);
    bool coarse_medium_same = true;
    for (std::size_t row = 0; row < 4; ++row)
        for (std::size_t col = 0; col < 8; ++col)
            if (r1.values.at(row, col) != r2.values.at(row, col))
                coarse_medium_same = false;
    ck.require(coarse_medium_same,
               "color embedding change leaves coarse/medium bit-identical");
    double fine_diff = 0.0;
    for (std::size_t row = 4; row < 6; ++row)
        for (std::size_t col = 0; col < 8; ++col)
            fine_diff += std::fabs(r1.values.at(row, col) - r2.values.at(row, col));
    ck.require(fine_diff > 1e-6, "color embedding reaches the fine slice");

    // ablation: id term contributes exactly zero
    ToyStackConfig tc;
    Backends b = make_toy_backends(tc);
    const TextCondition toy_cond = make_condition(*b.encoder, "blue");
    LossWeights weights{1.0, 1.0, 5.0, 0.0, 0.0};
    Tensor residual = rng.normal_tensor({tc.layers, tc.dim}, 0.05);
    const LatentCode wc{rng.normal_tensor({tc.layers, tc.dim}, 0.5), SpaceTag::WPlus};

    ad::Graph g_off, g_ref;
    ad::Var off_res = g_off.input(residual);
    const losses::TdgemLossGraph off = losses::total_loss_tdgem_graph(
        g_off, g_off.constant(wc.values), off_res, toy_cond, weights, false, b);
    ck.require(off.report.term("id") == 0.0, "use_id_loss=false reports id = 0");
    LossWeights no_id = weights;
    no_id.id = 0.0;
    ad::Var ref_res = g_ref.input(residual);
    const losses::TdgemLossGraph ref = losses::total_loss_tdgem_graph(
        g_ref, g_ref.constant(wc.values), ref_res, toy_cond, no_id, true, b);
    ck.require(off.report.total == ref.report.total,
               "use_id_loss=false total equals the id-free objective");
    g_off.backward(off.total);
    g_ref.backward(ref.total);
    bool grads_equal = true;
    for (std::size_t i = 0; i < residual.size(); ++i)
        if (g_off.grad(off_res)[i] != g_ref.grad(ref_res)[i]) grads_equal = false;
    ck.require(grads_equal, "use_id_loss=false gradients carry no id pathway");

    // ablation: inject_fine=false decouples the fine slice from all text
    mapper::TdGemMapper no_fine(part, 8, 4, false, 11);
    no_fine.randomize_all(99);
    TextCondition c3 = cond;
    c3.shape_embedding = rng.normal_tensor({4}, 1.0);
    c3.color_embedding = rng.normal_tensor({4}, 1.0);
    const LatentCode f1 = no_fine.forward_code(w, cond);
    const LatentCode f2 = no_fine.forward_code(w, c3);
    bool fine_same = true;
    for (std::size_t row = 4; row < 6; ++row)
        for (std::size_t col = 0; col < 8; ++col)
            if (f1.values.at(row, col) != f2.values.at(row, col)) fine_same = false;
    ck.require(fine_same, "inject_fine=false gives a text-independent fine slice");
}

void criterion_table1(Checker& ck) {
    const losses::TermValues terms{0.5, 0.2, 0.1, 2.0, 0.3};
    const losses::LossReport sleeve =
        losses::combine_tdgem_terms(terms, LossWeights::sleeve_defaults());
    ck.require_near(sleeve.total, 0.90, 1e-9, "sleeve-row weighted sum");

    const losses::LossReport color =
        losses::combine_tdgem_terms(terms, LossWeights::color_defaults());
    // Stated expectation is 1.81; the color coefficient row (1, 1, 1, 5e-3, 1)
    // applied to these terms sums to 1.11. Known discrepancy, reported as-is.
    ck.require_near(color.total, 1.81, 1e-9,
                    "color-row weighted sum as stated (the weighted sum evaluates to " +
                        std::to_string(color.total) + "; known discrepancy)");
}

void criterion_latent_optimizer(Checker& ck) {
    ToyStackConfig tc;
    Backends b = make_toy_backends(tc);
    const LatentCode w{Tensor({tc.layers, tc.dim}), SpaceTag::WPlus};  // gray emitter
    LossWeights weights{1.0, 0.02, 0.0, 0.0, 0.0};
    latent_opt::OptimizeConfig cfg;
    cfg.max_steps = 200;
    cfg.learning_rate = 0.1;

    const latent_opt::OptimizeResult run1 =
        latent_opt::optimize_latent(w, "blue", weights, b, cfg);
    double min_clip = 1e300;
    for (const auto& rep : run1.history) min_clip = std::min(min_clip, rep.term("clip"));
    ck.require(min_clip < 0.05, "clip term drops below 0.05 within 200 steps (reached " +
                                    std::to_string(min_clip) + ")");

    auto fg_blue = [&](const LatentCode& code) {
        const ImageBuffer img = b.generator->synthesize_image(code);
        const RegionMask mask = b.parser->parse(img);
        double s = 0.0, n = 0.0;
        for (std::size_t p = 0; p < mask.mask.size(); ++p) {
            if (mask.mask[p] <= 0.5) continue;
            s += 0.5 * (img.pixels[3 * p + 2] + 1.0);
            n += 1.0;
        }
        return s / n;
    };
    ck.require(fg_blue(run1.edited_code) > fg_blue(w),
               "foreground mean blue strictly increases");

    const latent_opt::OptimizeResult run2 =
        latent_opt::optimize_latent(w, "blue", weights, b, cfg);
    bool identical = true;
    for (std::size_t i = 0; i < run1.edited_code.values.size(); ++i)
        if (run1.edited_code.values[i] != run2.edited_code.values[i]) identical = false;
    ck.require(identical, "two runs are bit-identical");
}

void criterion_training(Checker& ck) {
    ToyStackConfig tc;
    Backends b = make_toy_backends(tc);
    const TextCondition cond = make_condition(*b.encoder, "blue");
    const training::LatentDataset ds = garment_dataset(b, tc);

    auto eval_heldout = [&](const mapper::TdGemMapper& m) {
        double clip_sum = 0.0, bg_sum = 0.0;
        for (std::size_t i = 0; i < ds.test_size(); ++i) {
            const auto& item = ds.test_item(i);
            const auto out = training::apply_edit(m, item.code, cond, *b.generator);
            const ImageBuffer orig = b.generator->synthesize_image(item.code);
            clip_sum += losses::clip_loss(b.encoder->encode_image_tensor(out.image),
                                          cond.shape_embedding);
            bg_sum += losses::background_loss(orig, out.image, *b.parser);
        }
        return std::pair{clip_sum / (double)ds.test_size(),
                         bg_sum / (double)ds.test_size()};
    };

    auto train_run = [&](double bg_weight, mapper::TdGemMapper& m) {
        EditConfig cfg;
        cfg.partition = default_partition(tc.layers);
        cfg.weights = LossWeights{1.0, 0.02, 0.0, 0.0, bg_weight};
        cfg.use_id_loss = false;
        cfg.learning_rate = 0.12;
        cfg.max_steps = 300;
        cfg.seed = 5;
        m.kick_output_affines(1e-2, cfg.seed ^ 0xabcd);
        training::train_tdgem_mapper(m, ds, cond, cfg, b, nullptr,
                                     training::LrSchedule::Cosine);
    };

    const mapper::TdGemMapper untrained(default_partition(tc.layers), tc.dim,
                                        tc.embed_dim, true, 5);
    const auto [clip_before, bg_before] = eval_heldout(untrained);

    mapper::TdGemMapper trained(default_partition(tc.layers), tc.dim, tc.embed_dim,
                                true, 5);
    train_run(1.0, trained);
    const auto [clip_after, bg_after] = eval_heldout(trained);

    mapper::TdGemMapper control(default_partition(tc.layers), tc.dim, tc.embed_dim,
                                true, 5);
    train_run(0.0, control);
    const auto [control_clip, control_bg] = eval_heldout(control);
    (void)control_clip;

    char msg[160];
    std::snprintf(msg, sizeof(msg),
                  "held-out clip drops >= 50%% (%.4f -> %.4f, %.1f%%)", clip_before,
                  clip_after, 100.0 * (1.0 - clip_after / clip_before));
    ck.require(clip_after <= 0.5 * clip_before, msg);
    std::snprintf(msg, sizeof(msg),
                  "held-out background loss %.4f <= 0.05 x control %.4f", bg_after,
                  control_bg);
    ck.require(bg_after <= 0.05 * control_bg, msg);
}

void criterion_pti(Checker& ck) {
    ToyStackConfig tc;
    Backends b = make_toy_backends(tc);
    Rng rng(209);
    const LatentCode pivot{rng.normal_tensor({tc.layers, tc.dim}, 0.8), SpaceTag::WPlus};

    // perturbed target, representable by construction
    auto twin = toy_generator(tc.layers, tc.dim, tc.height, tc.width, tc.seed * 1000 + 1);
    for (Tensor* p : twin->parameters())
        for (std::size_t i = 0; i < p->size(); ++i) (*p)[i] += 0.08 * rng.normal();
    const ImageBuffer x = twin->synthesize_image(pivot);

    auto pixel_mse = [](const ImageBuffer& a, const ImageBuffer& c) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.pixels.size(); ++i) {
            const double d = a.pixels[i] - c.pixels[i];
            s += d * d;
        }
        return s / (double)a.pixels.size();
    };

    const double initial = pixel_mse(x, b.generator->synthesize_image(pivot));
    inversion::PtiConfig cfg;
    cfg.max_steps = 500;
    cfg.tolerance = 0.0;
    inversion::pti_tune(x, pivot, b.generator, *b.perceptual, cfg);
    const double final_mse = pixel_mse(x, b.generator->synthesize_image(pivot));
    char msg[160];
    std::snprintf(msg, sizeof(msg), "pixel MSE %.6f <= 10%% of initial %.6f", final_mse,
                  initial);
    ck.require(final_mse <= 0.1 * initial, msg);

    // tolerance stop on the already-perfect pivot
    Backends b2 = make_toy_backends(tc);
    const ImageBuffer perfect = b2.generator->synthesize_image(pivot);
    inversion::PtiConfig cfg2;
    const inversion::InversionResult res =
        inversion::pti_tune(perfect, pivot, b2.generator, *b2.perceptual, cfg2);
    ck.require(res.converged && res.steps_used == 1,
               "tolerance stop fires on step 1 for the perfect pivot");

    // max_steps = 0: bit-identical parameters
    Backends b3 = make_toy_backends(tc);
    std::vector<Tensor> before;
    for (Tensor* p : b3.generator->parameters()) before.push_back(*p);
    inversion::PtiConfig cfg3;
    cfg3.max_steps = 0;
    inversion::pti_tune(perfect, pivot, b3.generator, *b3.perceptual, cfg3);
    bool untouched = true;
    auto params = b3.generator->parameters();
    for (std::size_t i = 0; i < params.size(); ++i)
        for (std::size_t j = 0; j < params[i]->size(); ++j)
            if ((*params[i])[j] != before[i][j]) untouched = false;
    ck.require(untouched, "max_steps = 0 leaves parameters bit-identical");
}

void criterion_metrics(Checker& ck) {
    ToyStackConfig tc;
    Backends b = make_toy_backends(tc);
    Rng rng(210);

    const ImageBuffer img{rng.uniform_tensor({16, 16, 3}, 0.0, 1.0), RangeTag::Unit};
    ck.require_near(metrics::ssim(img, img), 1.0, 1e-12, "identity SSIM is 1");
    ck.require(metrics::psnr(img, img) == metrics::kPsnrCapDb, "identity PSNR at cap");
    const RegionMask full{Tensor::full({16, 16}, 1.0)};
    ck.require_near(metrics::acd(img, img, full), 0.0, 1e-12, "identity ACD is 0");
    std::vector<Tensor> feats;
    for (int i = 0; i < 16; ++i) feats.push_back(rng.normal_tensor({6}, 1.0));
    ck.require(metrics::fid(feats, feats) <= 1e-6, "identity FID <= 1e-6");

    // synthetic Gaussian closed form at 5000 samples
    const double shift[4] = {0.8, -0.5, 0.3, 1.1};
    double shift_sq = 0.0;
    for (double s : shift) shift_sq += s * s;
    // antithetic pairs: the empirical means hit the targets exactly, so the
    // check isolates the covariance part of the estimator
    std::vector<Tensor> set_a, set_b;
    Rng rng2(211);
    for (int i = 0; i < 2500; ++i) {
        const Tensor ga = rng2.normal_tensor({4}, 1.0);
        Tensor ga_neg({4});
        for (int c = 0; c < 4; ++c) ga_neg[c] = -ga[c];
        set_a.push_back(ga);
        set_a.push_back(ga_neg);
        const Tensor gb = rng2.normal_tensor({4}, 1.0);
        Tensor fb1({4}), fb2({4});
        for (int c = 0; c < 4; ++c) {
            fb1[c] = gb[c] + shift[c];
            fb2[c] = -gb[c] + shift[c];
        }
        set_b.push_back(fb1);
        set_b.push_back(fb2);
    }
    const double got = metrics::fid(set_a, set_b);
    char msg[160];
    std::snprintf(msg, sizeof(msg), "Gaussian FID %.4f within 2%% of %.4f", got,
                  shift_sq);
    ck.require(std::fabs(got - shift_sq) <= 0.02 * shift_sq, msg);

    // evaluate-folder aggregation equals per-pair means
    std::vector<std::pair<ImageBuffer, ImageBuffer>> pairs;
    for (int i = 0; i < 6; ++i)
        pairs.push_back({ImageBuffer{rng.uniform_tensor({16, 16, 3}, 0.0, 1.0),
                                     RangeTag::Unit},
                         ImageBuffer{rng.uniform_tensor({16, 16, 3}, 0.0, 1.0),
                                     RangeTag::Unit}});
    const metrics::MetricReport agg = metrics::evaluate_folder(
        pairs, {}, *b.parser, metrics::Region::Foreground, *b.identity);
    double mean_psnr = 0, mean_ssim = 0, mean_acd = 0;
    for (const auto& [orig, edited] : pairs) {
        const RegionMask fg =
            mask_union(b.parser->parse(orig), b.parser->parse(edited));
        mean_psnr += metrics::psnr(orig, edited, &fg);
        mean_ssim += metrics::ssim(orig, edited, &fg);
        mean_acd += metrics::acd(orig, edited, fg);
    }
    mean_psnr /= (double)pairs.size();
    mean_ssim /= (double)pairs.size();
    mean_acd /= (double)pairs.size();
    ck.require(std::fabs(agg.psnr - mean_psnr) <= 1e-9, "PSNR aggregation to 1e-9");
    ck.require(std::fabs(agg.ssim - mean_ssim) <= 1e-9, "SSIM aggregation to 1e-9");
    ck.require(std::fabs(agg.acd - mean_acd) <= 1e-9, "ACD aggregation to 1e-9");

    // identity evaluate-folder
    std::vector<std::pair<ImageBuffer, ImageBuffer>> ident;
    for (int i = 0; i < 3; ++i) {
        const ImageBuffer im{rng.uniform_tensor({16, 16, 3}, 0.0, 1.0), RangeTag::Unit};
        ident.push_back({im, im});
    }
    const metrics::MetricReport rep = metrics::evaluate_folder(
        ident, {}, *b.parser, metrics::Region::Full, *b.identity);
    ck.require(rep.ssim == 1.0 && rep.psnr == metrics::kPsnrCapDb && rep.acd == 0.0 &&
                   rep.fid <= 1e-6,
               "identity folder evaluation");
}

void criterion_cli(Checker& ck) {
    const fs::path ws = fs::temp_directory_path() / "tdgem_acceptance_cli";
    fs::remove_all(ws);
    fs::create_directories(ws);

    // toy input image, written by the library itself: no downloads anywhere
    {
        ToyStackConfig tc;
        Backends b = make_toy_backends(tc);
        Rng rng(321);
        const LatentCode code{rng.normal_tensor({tc.layers, tc.dim}, 0.6),
                              SpaceTag::WPlus};
        io::write_png(ws / "input.png", b.generator->synthesize_image(code));
        fs::create_directories(ws / "ds");
        for (int i = 0; i < 8; ++i) {
            const LatentCode c2{rng.normal_tensor({tc.layers, tc.dim}, 0.5),
                                SpaceTag::WPlus};
            io::write_latent(ws / "ds" / ("code" + std::to_string(i) + ".latent"), c2, 1);
        }
    }

    auto files_match = [&](const fs::path& a, const fs::path& b) {
        return slurp(a) == slurp(b);
    };

    // invert twice: byte-identical artifacts
    ck.require(run_cli("invert --image " + (ws / "input.png").string() + " --out " +
                           (ws / "inv").string() + " --steps 60 --seed 3",
                       ws / "log_inv.txt") == 0,
               "invert exits 0");
    ck.require(run_cli("invert --image " + (ws / "input.png").string() + " --out " +
                           (ws / "inv_b").string() + " --steps 60 --seed 3",
                       ws / "log_inv_b.txt") == 0,
               "invert rerun exits 0");
    for (const char* f : {"pivot.latent", "generator.ckpt", "history.csv",
                          "reconstruction.png"})
        ck.require(files_match(ws / "inv" / f, ws / "inv_b" / f),
                   std::string("invert reproducible: ") + f);

    // optimize + replay from its manifest
    ck.require(run_cli("optimize --latent " + (ws / "inv" / "pivot.latent").string() +
                           " --text blue --out " + (ws / "opt").string() +
                           " --steps 30 --generator checkpoint:" +
                           (ws / "inv" / "generator.ckpt").string(),
                       ws / "log_opt.txt") == 0,
               "optimize exits 0");
    ck.require(run_cli("replay --manifest " + (ws / "opt" / "manifest.json").string() +
                           " --out " + (ws / "opt_r").string(),
                       ws / "log_opt_r.txt") == 0,
               "optimize replay exits 0");
    for (const char* f : {"edited.latent", "edited.png", "history.csv"})
        ck.require(files_match(ws / "opt" / f, ws / "opt_r" / f),
                   std::string("optimize replay reproducible: ") + f);

    // train-mapper + replay
    ck.require(run_cli("train-mapper --dataset " + (ws / "ds").string() +
                           " --text blue --out " + (ws / "tr").string() +
                           " --steps 25 --lr 0.05 --split-ratio 0.75 --no-id-loss "
                           "--seed 4",
                       ws / "log_tr.txt") == 0,
               "train-mapper exits 0");
    ck.require(run_cli("replay --manifest " + (ws / "tr" / "manifest.json").string() +
                           " --out " + (ws / "tr_r").string(),
                       ws / "log_tr_r.txt") == 0,
               "train-mapper replay exits 0");
    for (const char* f : {"mapper.ckpt", "log.csv"})
        ck.require(files_match(ws / "tr" / f, ws / "tr_r" / f),
                   std::string("train replay reproducible: ") + f);

    // edit + replay
    ck.require(run_cli("edit --latent " + (ws / "inv" / "pivot.latent").string() +
                           " --text blue --mapper " +
                           (ws / "tr" / "mapper.ckpt").string() + " --out " +
                           (ws / "ed").string(),
                       ws / "log_ed.txt") == 0,
               "edit exits 0");
    ck.require(run_cli("replay --manifest " + (ws / "ed" / "manifest.json").string() +
                           " --out " + (ws / "ed_r").string(),
                       ws / "log_ed_r.txt") == 0,
               "edit replay exits 0");
    for (const char* f : {"edited.png", "edited.latent"})
        ck.require(files_match(ws / "ed" / f, ws / "ed_r" / f),
                   std::string("edit replay reproducible: ") + f);

    // evaluate + replay
    fs::create_directories(ws / "ev" / "orig");
    fs::create_directories(ws / "ev" / "edit");
    fs::copy_file(ws / "inv" / "reconstruction.png", ws / "ev" / "orig" / "a.png");
    fs::copy_file(ws / "ed" / "edited.png", ws / "ev" / "edit" / "a.png");
    fs::copy_file(ws / "input.png", ws / "ev" / "orig" / "b.png");
    fs::copy_file(ws / "input.png", ws / "ev" / "edit" / "b.png");
    ck.require(run_cli("evaluate --orig " + (ws / "ev" / "orig").string() +
                           " --edited " + (ws / "ev" / "edit").string() +
                           " --region foreground --out " +
                           (ws / "ev" / "report.json").string(),
                       ws / "log_ev.txt") == 0,
               "evaluate exits 0");
    ck.require(run_cli("replay --manifest " + (ws / "ev" / "manifest.json").string() +
                           " --out " + (ws / "ev2_report.json").string(),
                       ws / "log_ev_r.txt") == 0,
               "evaluate replay exits 0");
    ck.require(files_match(ws / "ev" / "report.json", ws / "ev2_report.json"),
               "evaluate report reproducible");

    fs::remove_all(ws);
}

}  // namespace

int main() {
    std::vector<Criterion> criteria = {
        {1, "loss identity suite", 10.0, criterion_loss_identity},
        {2, "gradient suite", 120.0, criterion_gradients},
        {3, "colorspace reference", 60.0, criterion_colorspace},
        {4, "modulation layer semantics", 60.0, criterion_modulation},
        {5, "mapper locality and ablations", 60.0, criterion_mapper_locality},
        {6, "coefficient-table weighting", 60.0, criterion_table1},
        {7, "toy latent optimizer", 60.0, criterion_latent_optimizer},
        {8, "toy mapper training", 300.0, criterion_training},
        {9, "toy generator fine-tuning", 300.0, criterion_pti},
        {10, "metric suite", 300.0, criterion_metrics},
        {11, "cli determinism", 300.0, criterion_cli},
    };

    int failures = 0;
    for (const Criterion& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Checker ck;
        try {
            c.run(ck);
        } catch (const std::exception& e) {
            ck.failures.push_back(std::string("exception: ") + e.what());
        }
        const double secs = elapsed_s(t0);
        if (secs > c.time_limit_s)
            ck.failures.push_back("exceeded time limit of " +
                                  std::to_string(c.time_limit_s) + " s");
        if (ck.failures.empty()) {
            std::printf("[PASS] %2d. %-32s (%.2f s)\n", c.id, c.name.c_str(), secs);
        } else {
            ++failures;
            std::printf("[FAIL] %2d. %-32s (%.2f s)\n", c.id, c.name.c_str(), secs);
            for (const std::string& f : ck.failures)
                std::printf("         - %s\n", f.c_str());
        }
    }
    if (failures > 0)
        std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    else
        std::printf("all %zu criteria passed\n", criteria.size());
    return failures == 0 ? 0 : 1;
}
