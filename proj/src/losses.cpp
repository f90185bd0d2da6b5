#include "tdgem/losses.hpp"

#include <cmath>

#include "tdgem/kernels.hpp"

namespace tdgem::losses {

namespace {

void check_same_image_shape(const ImageBuffer& a, const ImageBuffer& b, const char* op) {
    if (!a.pixels.same_shape(b.pixels))
        throw TdgemError(std::string(op) + ": image shapes differ");
    if (a.range_tag != b.range_tag)
        throw TdgemError(std::string(op) + ": image range tags differ");
}

}  // namespace

ad::Var clip_loss_node(ad::Graph& g, ad::Var image_embedding, ad::Var text_embedding) {
    (void)g;
    ad::Var cos = ad::cosine_similarity(image_embedding, text_embedding);
    return ad::add_scalar(ad::scale(cos, -1.0), 1.0);
}

double clip_loss(const Tensor& image_embedding, const Tensor& text_embedding) {
    if (image_embedding.size() != text_embedding.size())
        throw TdgemError("clip_loss: embedding dimensions differ");
    ad::Graph g;
    ad::Var v = clip_loss_node(g, g.constant(image_embedding), g.constant(text_embedding));
    return g.val(v)[0];
}

double id_loss(const ImageBuffer& orig, const ImageBuffer& edited,
               const IdentityFeatureBackend& trunk) {
    check_same_image_shape(orig, edited, "id_loss");
    ad::Graph g;
    ad::Var fa = trunk.features(g, g.constant(orig.pixels), orig.range_tag);
    ad::Var fb = trunk.features(g, g.constant(edited.pixels), edited.range_tag);
    return g.val(ad::mse(fa, fb))[0];
}

double norm_loss(const LatentCode& residual) {
    if (!residual.values.all_finite()) throw TdgemError("norm_loss: non-finite residual");
    return std::sqrt(kernels::dot(residual.values.data(), residual.values.data(),
                                  residual.values.size()));
}

double color_loss(const ImageBuffer& orig, const ImageBuffer& edited,
                  const ParserBackend& parser) {
    check_same_image_shape(orig, edited, "color_loss");
    const Tensor mo = colorspace::masked_mean_lab(orig, parser.parse(orig));
    const Tensor me = colorspace::masked_mean_lab(edited, parser.parse(edited));
    double l1 = 0.0;
    for (std::size_t c = 0; c < 3; ++c) l1 += std::fabs(me[c] - mo[c]);
    return l1;
}

double background_loss(const ImageBuffer& orig, const ImageBuffer& edited,
                       const ParserBackend& parser) {
    check_same_image_shape(orig, edited, "background_loss");
    const RegionMask bg = mask_background(parser.parse(orig), parser.parse(edited));
    double sq = 0.0;
    for (std::size_t p = 0; p < bg.mask.size(); ++p) {
        const double m = bg.mask[p];
        if (m == 0.0) continue;
        for (std::size_t c = 0; c < 3; ++c) {
            const double d = (edited.pixels[3 * p + c] - orig.pixels[3 * p + c]) * m;
            sq += d * d;
        }
    }
    return std::sqrt(sq);
}

ad::Var pti_loss_node(ad::Graph& g, ad::Var x, ad::Var recon, RangeTag range,
                      const PerceptualDistanceBackend& lpips, double lambda2) {
    if (!g.val(x).same_shape(g.val(recon)))
        throw TdgemError("pti_loss: image shapes differ");
    if (lambda2 < 0.0) throw TdgemError("pti_loss: lambda2 must be >= 0");
    ad::Var perceptual = lpips.distance(g, x, recon, range);
    if (lambda2 == 0.0) return perceptual;
    return ad::add(perceptual, ad::scale(ad::mse(x, recon), lambda2));
}

double pti_loss(const ImageBuffer& x, const ImageBuffer& recon,
                const PerceptualDistanceBackend& lpips, double lambda2) {
    check_same_image_shape(x, recon, "pti_loss");
    ad::Graph g;
    ad::Var v = pti_loss_node(g, g.constant(x.pixels), g.constant(recon.pixels),
                              x.range_tag, lpips, lambda2);
    return g.val(v)[0];
}

LossReport combine_tdgem_terms(const TermValues& t, const LossWeights& w) {
    w.validate();
    LossReport r;
    r.terms["clip"] = t.clip;
    r.terms["norm"] = t.norm;
    r.terms["id"] = t.id;
    r.terms["color"] = t.color;
    r.terms["bg"] = t.bg;
    r.total = w.clip * t.clip + w.l2 * t.norm + w.id * t.id + w.color * t.color +
              w.bg * t.bg;
    return r;
}

// ---------------------------------------------------------------------------

TdgemLossGraph total_loss_tdgem_graph(ad::Graph& g, ad::Var w, ad::Var residual,
                                      const TextCondition& cond,
                                      const LossWeights& weights, bool use_id_loss,
                                      const Backends& backends) {
    cond.validate();
    weights.validate();
    if (!backends.generator || !backends.encoder || !backends.parser ||
        !backends.identity)
        throw TdgemError("total_loss_tdgem: generator/encoder/parser/identity backends "
                         "must all be attached");

    TdgemLossGraph out;
    ad::Var w_edit = ad::add(w, residual);
    out.original_image = backends.generator->synthesize(g, w);
    out.edited_image = backends.generator->synthesize(g, w_edit);

    const ImageBuffer orig_img{g.val(out.original_image), RangeTag::SignedUnit};
    const ImageBuffer edit_img{g.val(out.edited_image), RangeTag::SignedUnit};

    std::vector<ad::Var> weighted;

    if (weights.clip > 0.0) {
        ad::Var emb = backends.encoder->encode_image(g, out.edited_image,
                                                     RangeTag::SignedUnit);
        ad::Var clip = clip_loss_node(g, emb, g.constant(cond.shape_embedding));
        if (cond.color_embedding) {
            ad::Var clip_color =
                clip_loss_node(g, emb, g.constant(*cond.color_embedding));
            clip = ad::scale(ad::add(clip, clip_color), 0.5);
        }
        out.clip = clip;
        weighted.push_back(ad::scale(clip, weights.clip));
    }

    if (weights.l2 > 0.0) {
        out.norm = ad::l2norm(residual);
        weighted.push_back(ad::scale(out.norm, weights.l2));
    }

    if (use_id_loss && weights.id > 0.0) {
        ad::Var fo = backends.identity->features(g, out.original_image,
                                                 RangeTag::SignedUnit);
        ad::Var fe = backends.identity->features(g, out.edited_image,
                                                 RangeTag::SignedUnit);
        out.id = ad::mse(fo, fe);
        weighted.push_back(ad::scale(out.id, weights.id));
    }

    // parses are recomputed each call and held constant in the backward pass
    out.original_mask = backends.parser->parse(orig_img);
    out.edited_mask = backends.parser->parse(edit_img);

    if (weights.color > 0.0) {
        ad::Var mo = colorspace::masked_mean_lab_node(g, out.original_image,
                                                      RangeTag::SignedUnit,
                                                      out.original_mask);
        ad::Var me = colorspace::masked_mean_lab_node(g, out.edited_image,
                                                      RangeTag::SignedUnit,
                                                      out.edited_mask);
        out.color = ad::sum(ad::abs_t(ad::sub(me, mo)));
        weighted.push_back(ad::scale(out.color, weights.color));
    }

    if (weights.bg > 0.0) {
        const RegionMask bg_mask = mask_background(out.original_mask, out.edited_mask);
        ad::Var diff = ad::sub(out.edited_image, out.original_image);
        out.bg = ad::l2norm(ad::mul_mask_bcast(diff, bg_mask.mask));
        weighted.push_back(ad::scale(out.bg, weights.bg));
    }

    if (weighted.empty()) {
        out.total = g.constant(Tensor::scalar(0.0));
    } else {
        out.total = weighted[0];
        for (std::size_t i = 1; i < weighted.size(); ++i)
            out.total = ad::add(out.total, weighted[i]);
    }

    auto term_value = [&](ad::Var v) { return v.valid() ? g.val(v)[0] : 0.0; };
    out.report.terms["clip"] = term_value(out.clip);
    out.report.terms["norm"] = term_value(out.norm);
    out.report.terms["id"] = term_value(out.id);
    out.report.terms["color"] = term_value(out.color);
    out.report.terms["bg"] = term_value(out.bg);
    out.report.total = g.val(out.total)[0];
    if (!std::isfinite(out.report.total))
        throw TdgemError("total_loss_tdgem: non-finite loss");
    return out;
}

LossReport total_loss_tdgem(const LatentCode& w, const LatentCode& residual,
                            const TextCondition& cond, const LossWeights& weights,
                            bool use_id_loss, const Backends& backends) {
    if (!w.values.same_shape(residual.values))
        throw TdgemError("total_loss_tdgem: code and residual shapes differ");
    ad::Graph g;
    const TdgemLossGraph lg =
        total_loss_tdgem_graph(g, g.constant(w.values), g.constant(residual.values),
                               cond, weights, use_id_loss, backends);
    return lg.report;
}

LatentOptLossGraph total_loss_latent_optimizer_graph(ad::Graph& g, ad::Var w,
                                                     ad::Var delta,
                                                     const Tensor& text_embedding,
                                                     const LossWeights& weights,
                                                     const Backends& backends) {
    weights.validate();
    if (!backends.generator || !backends.encoder || !backends.identity)
        throw TdgemError("total_loss_latent_optimizer: generator/encoder/identity "
                         "backends must be attached");

    LatentOptLossGraph out;
    ad::Var w_edit = ad::add(w, delta);
    out.edited_image = backends.generator->synthesize(g, w_edit);

    std::vector<ad::Var> weighted;
    if (weights.clip > 0.0) {
        ad::Var emb = backends.encoder->encode_image(g, out.edited_image,
                                                     RangeTag::SignedUnit);
        out.clip = clip_loss_node(g, emb, g.constant(text_embedding));
        weighted.push_back(ad::scale(out.clip, weights.clip));
    }
    if (weights.l2 > 0.0) {
        out.norm = ad::l2norm(delta);
        weighted.push_back(ad::scale(out.norm, weights.l2));
    }
    if (weights.id > 0.0) {
        ad::Var orig_image = backends.generator->synthesize(g, w);
        ad::Var fo = backends.identity->features(g, orig_image, RangeTag::SignedUnit);
        ad::Var fe = backends.identity->features(g, out.edited_image,
                                                 RangeTag::SignedUnit);
        out.id = ad::mse(fo, fe);
        weighted.push_back(ad::scale(out.id, weights.id));
    }

    if (weighted.empty()) {
        out.total = g.constant(Tensor::scalar(0.0));
    } else {
        out.total = weighted[0];
        for (std::size_t i = 1; i < weighted.size(); ++i)
            out.total = ad::add(out.total, weighted[i]);
    }

    auto term_value = [&](ad::Var v) { return v.valid() ? g.val(v)[0] : 0.0; };
    out.report.terms["clip"] = term_value(out.clip);
    out.report.terms["norm"] = term_value(out.norm);
    out.report.terms["id"] = term_value(out.id);
    out.report.total = g.val(out.total)[0];
    if (!std::isfinite(out.report.total))
        throw TdgemError("total_loss_latent_optimizer: non-finite loss");
    return out;
}

LossReport total_loss_latent_optimizer(const LatentCode& w, const LatentCode& delta,
                                       const Tensor& text_embedding,
                                       const LossWeights& weights,
                                       const Backends& backends) {
    if (!w.values.same_shape(delta.values))
        throw TdgemError("total_loss_latent_optimizer: code and delta shapes differ");
    ad::Graph g;
    const LatentOptLossGraph lg = total_loss_latent_optimizer_graph(
        g, g.constant(w.values), g.constant(delta.values), text_embedding, weights,
        backends);
    return lg.report;
}

}  // namespace tdgem::losses
