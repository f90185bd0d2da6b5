#pragma once

// Differentiable loss terms of the editing objectives and their weighted
// totals: the CLIP guidance loss, residual norm, identity feature MSE, the
// LAB-space color loss, the masked background loss, and the inversion
// (perceptual + pixel MSE) loss.

#include <map>
#include <string>

#include "tdgem/backends.hpp"
#include "tdgem/colorspace.hpp"
#include "tdgem/core.hpp"

namespace tdgem::losses {

struct LossReport {
    double total = 0.0;
    std::map<std::string, double> terms;

    double term(const std::string& name) const {
        const auto it = terms.find(name);
        return it == terms.end() ? 0.0 : it->second;
    }
};

// one minus cosine similarity, in [0, 2]
double clip_loss(const Tensor& image_embedding, const Tensor& text_embedding);
ad::Var clip_loss_node(ad::Graph& g, ad::Var image_embedding, ad::Var text_embedding);

// mean squared error between the feature vectors of the two images
double id_loss(const ImageBuffer& orig, const ImageBuffer& edited,
               const IdentityFeatureBackend& trunk);

// Euclidean norm of the flattened residual
double norm_loss(const LatentCode& residual);

// L1 distance between the foreground-mean LAB colors of the two images
double color_loss(const ImageBuffer& orig, const ImageBuffer& edited,
                  const ParserBackend& parser);

// L2 norm of the pixel difference restricted to the joint background
double background_loss(const ImageBuffer& orig, const ImageBuffer& edited,
                       const ParserBackend& parser);

// perceptual distance + lambda2 * pixel MSE
double pti_loss(const ImageBuffer& x, const ImageBuffer& recon,
                const PerceptualDistanceBackend& lpips, double lambda2);
ad::Var pti_loss_node(ad::Graph& g, ad::Var x, ad::Var recon, RangeTag range,
                      const PerceptualDistanceBackend& lpips, double lambda2);

// Weighted-total assembly, exposed separately so the Table-1 weighting can be
// exercised on synthetic term vectors.
struct TermValues {
    double clip = 0.0;
    double norm = 0.0;
    double id = 0.0;
    double color = 0.0;
    double bg = 0.0;
};
LossReport combine_tdgem_terms(const TermValues& terms, const LossWeights& weights);

// Graph handles for the full objectives. Inactive terms (zero weight, or the
// identity term with use_id_loss = false) have invalid Vars and report 0.
struct TdgemLossGraph {
    ad::Var total;
    ad::Var clip, norm, id, color, bg;
    ad::Var original_image, edited_image;
    RegionMask original_mask, edited_mask;
    LossReport report;
};

TdgemLossGraph total_loss_tdgem_graph(ad::Graph& g, ad::Var w, ad::Var residual,
                                      const TextCondition& cond,
                                      const LossWeights& weights, bool use_id_loss,
                                      const Backends& backends);

LossReport total_loss_tdgem(const LatentCode& w, const LatentCode& residual,
                            const TextCondition& cond, const LossWeights& weights,
                            bool use_id_loss, const Backends& backends);

struct LatentOptLossGraph {
    ad::Var total;
    ad::Var clip, norm, id;
    ad::Var edited_image;
    LossReport report;
};

LatentOptLossGraph total_loss_latent_optimizer_graph(ad::Graph& g, ad::Var w,
                                                     ad::Var delta,
                                                     const Tensor& text_embedding,
                                                     const LossWeights& weights,
                                                     const Backends& backends);

LossReport total_loss_latent_optimizer(const LatentCode& w, const LatentCode& delta,
                                       const Tensor& text_embedding,
                                       const LossWeights& weights,
                                       const Backends& backends);

}  // namespace tdgem::losses
