#include "tdgem/inversion.hpp"

#include <cmath>

#include "tdgem/losses.hpp"
#include "tdgem/optim.hpp"

namespace tdgem::inversion {

InversionResult pti_tune(const ImageBuffer& x, const LatentCode& pivot,
                         std::shared_ptr<GeneratorBackend> generator,
                         const PerceptualDistanceBackend& lpips, const PtiConfig& cfg) {
    if (!generator) throw TdgemError("pti_tune: no generator attached");
    if (pivot.layers() != generator->layers() || pivot.dim() != generator->dim())
        throw TdgemError("pti_tune: pivot dimensions do not match the generator");
    if (x.height() != generator->height() || x.width() != generator->width())
        throw TdgemError("pti_tune: target image size does not match the generator");
    if (cfg.max_steps < 0) throw TdgemError("pti_tune: max_steps must be >= 0");
    if (x.range_tag != RangeTag::SignedUnit)
        throw TdgemError("pti_tune: target image must be in SIGNED_UNIT range");

    InversionResult result;
    result.pivot = pivot;
    result.tuned_generator = generator;
    if (cfg.max_steps == 0) return result;

    optim::Adam adam(generator->parameters(), cfg.learning_rate);

    auto eval_loss = [&](ad::Graph& g, std::vector<ad::Var>* params) {
        ad::Var code = g.constant(pivot.values);
        ad::Var recon = generator->synthesize(g, code, params);
        ad::Var target = g.constant(x.pixels);
        return losses::pti_loss_node(g, target, recon, RangeTag::SignedUnit, lpips,
                                     cfg.lambda2);
    };

    for (int step = 1; step <= cfg.max_steps; ++step) {
        ad::Graph g;
        std::vector<ad::Var> params;
        ad::Var loss = eval_loss(g, &params);
        const double pre = g.val(loss)[0];
        if (!std::isfinite(pre))
            throw TdgemError("pti_tune: non-finite loss at step " + std::to_string(step));
        result.history.push_back(pre);
        g.backward(loss);
        std::vector<const Tensor*> grads;
        for (ad::Var p : params) grads.push_back(&g.grad(p));
        adam.step(grads);
        result.steps_used = step;

        ad::Graph g2;
        ad::Var post_loss = eval_loss(g2, nullptr);
        const double post = g2.val(post_loss)[0];
        if (!std::isfinite(post))
            throw TdgemError("pti_tune: non-finite loss after step " +
                             std::to_string(step));
        if (std::fabs(pre - post) < cfg.tolerance) {
            result.converged = true;
            break;
        }
    }
    return result;
}

LatentCode encode_pivot(const ImageBuffer& x, const EncoderAdapter* encoder) {
    (void)x;
    if (!encoder)
        throw TdgemError(
            "encode_pivot: no pretrained encoder attached; use "
            "encode_pivot_fallback (direct latent optimization) instead");
    LatentCode code = encoder->encode(x);
    code.validate();
    return code;
}

LatentCode encode_pivot_fallback(const ImageBuffer& x, const GeneratorBackend& generator,
                                 const FallbackConfig& cfg) {
    if (x.height() != generator.height() || x.width() != generator.width())
        throw TdgemError("encode_pivot_fallback: image size does not match generator");
    if (cfg.steps <= 0) throw TdgemError("encode_pivot_fallback: steps must be > 0");

    Tensor code({generator.layers(), generator.dim()});
    optim::Adam adam({&code}, cfg.learning_rate);
    const Tensor target = x.range_tag == RangeTag::SignedUnit
                              ? x.pixels
                              : [&] {
                                    // generator output is SIGNED_UNIT
                                    Tensor t = x.pixels;
                                    for (std::size_t i = 0; i < t.size(); ++i)
                                        t[i] = 2.0 * t[i] - 1.0;
                                    return t;
                                }();

    for (int step = 0; step < cfg.steps; ++step) {
        ad::Graph g;
        ad::Var c = g.input(code);
        ad::Var recon = generator.synthesize(g, c);
        ad::Var loss = ad::mse(recon, g.constant(target));
        if (!std::isfinite(g.val(loss)[0]))
            throw TdgemError("encode_pivot_fallback: non-finite loss");
        g.backward(loss);
        adam.step({&g.grad(c)});
    }
    return LatentCode{code, SpaceTag::WPlus};
}

}  // namespace tdgem::inversion
