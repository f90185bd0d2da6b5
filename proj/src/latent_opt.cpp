#include "tdgem/latent_opt.hpp"

#include <cmath>

#include "tdgem/optim.hpp"

namespace tdgem::latent_opt {

LossWeights latent_opt_default_weights() {
    LossWeights w;
    w.clip = 1.0;
    w.l2 = 1.0;
    w.id = 20.0;
    w.color = 0.0;
    w.bg = 0.0;
    return w;
}

OptimizeResult optimize_latent(const LatentCode& w, const std::string& prompt,
                               const LossWeights& weights, const Backends& backends,
                               const OptimizeConfig& cfg) {
    w.validate();
    if (!backends.generator || !backends.encoder)
        throw TdgemError("optimize_latent: generator and encoder backends required");
    if (cfg.max_steps <= 0) throw TdgemError("optimize_latent: max_steps must be > 0");
    if (w.layers() != backends.generator->layers() ||
        w.dim() != backends.generator->dim())
        throw TdgemError("optimize_latent: code dimensions do not match the generator");

    const Tensor text = backends.encoder->encode_text(prompt);

    Tensor delta({w.layers(), w.dim()});
    optim::Adam adam({&delta}, cfg.learning_rate);

    OptimizeResult result;
    Tensor best_delta = delta;
    double best_total = 0.0;
    bool have_best = false;

    auto evaluate = [&](bool with_grads) -> losses::LossReport {
        ad::Graph g;
        ad::Var wv = g.constant(w.values);
        ad::Var dv = with_grads ? g.input(delta) : g.constant(delta);
        losses::LatentOptLossGraph lg =
            losses::total_loss_latent_optimizer_graph(g, wv, dv, text, weights, backends);
        if (!std::isfinite(lg.report.total))
            throw TdgemError("optimize_latent: non-finite loss at step " +
                             std::to_string(result.history.size()));
        if (with_grads) {
            g.backward(lg.total);
            adam.step({&g.grad(dv)});
        }
        return lg.report;
    };

    for (int step = 0; step < cfg.max_steps; ++step) {
        const Tensor delta_snapshot = delta;  // evaluate() also updates
        losses::LossReport report = evaluate(true);
        result.history.push_back(report);
        if (!have_best || report.total < best_total) {
            best_total = report.total;
            best_delta = delta_snapshot;
            result.best_step = step;
            have_best = true;
        }
    }
    // final iterate
    losses::LossReport final_report = evaluate(false);
    result.history.push_back(final_report);
    if (final_report.total < best_total) {
        best_total = final_report.total;
        best_delta = delta;
        result.best_step = cfg.max_steps;
    }

    result.best_delta = LatentCode{best_delta, w.space_tag};
    Tensor edited = w.values;
    for (std::size_t i = 0; i < edited.size(); ++i) edited[i] += best_delta[i];
    result.edited_code = LatentCode{edited, w.space_tag};
    return result;
}

}  // namespace tdgem::latent_opt
