#pragma once

// Per-image latent optimization baseline: gradient descent on the residual
// under clip + norm + identity losses, returning the best-loss iterate.

#include <string>
#include <vector>

#include "tdgem/backends.hpp"
#include "tdgem/core.hpp"
#include "tdgem/losses.hpp"

namespace tdgem::latent_opt {

struct OptimizeConfig {
    int max_steps = 200;
    double learning_rate = 0.1;
};

struct OptimizeResult {
    LatentCode edited_code;                   // w + best delta
    LatentCode best_delta;
    std::vector<losses::LossReport> history;  // iterates 0..max_steps
    int best_step = 0;
};

// Weight defaults for this baseline: clip 1, l2 1, id 20 (the id coefficient
// is deliberately large for identity preservation).
LossWeights latent_opt_default_weights();

OptimizeResult optimize_latent(const LatentCode& w, const std::string& prompt,
                               const LossWeights& weights, const Backends& backends,
                               const OptimizeConfig& cfg);

}  // namespace tdgem::latent_opt
