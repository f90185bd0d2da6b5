#include "tdgem/training.hpp"

#include <cmath>

#include "tdgem/optim.hpp"

namespace tdgem::training {

LatentDataset split_dataset(std::vector<DatasetItem> items, double ratio,
                            std::uint64_t seed) {
    if (items.empty()) throw TdgemError("split_dataset: empty dataset");
    if (!(ratio > 0.0 && ratio < 1.0))
        throw TdgemError("split_dataset: ratio must lie strictly between 0 and 1");
    const std::size_t n = items.size();
    const auto n_train = (std::size_t)std::llround(ratio * (double)n);
    Rng rng(seed ^ 0x53504c54ull);
    const std::vector<std::size_t> perm = rng.permutation(n);
    LatentDataset ds;
    ds.items = std::move(items);
    ds.train_indices.assign(perm.begin(), perm.begin() + (long)n_train);
    ds.test_indices.assign(perm.begin() + (long)n_train, perm.end());
    return ds;
}

namespace {

// Shared training loop; `forward` binds the mapper parameters into the graph
// and returns the residual node.
template <typename ForwardFn>
TrainResult run_training(std::vector<Tensor*> params, ForwardFn&& forward,
                         const LatentDataset& dataset, const TextCondition& cond,
                         const EditConfig& cfg, const Backends& backends,
                         const CheckpointSink& sink, LrSchedule schedule) {
    TrainResult result;
    if (cfg.max_steps == 0) return result;
    if (cfg.max_steps < 0) throw TdgemError("train_mapper: max_steps must be >= 0");
    if (dataset.train_size() == 0) throw TdgemError("train_mapper: empty train split");
    if (!backends.generator) throw TdgemError("train_mapper: no generator attached");

    optim::Adam adam(params, cfg.learning_rate);
    const std::size_t n = dataset.train_size();

    std::vector<std::size_t> order;
    std::size_t epoch = 0;
    auto reshuffle = [&]() {
        Rng rng(cfg.seed ^ (0x45504f43ull + epoch * 0x9e3779b97f4a7c15ull));
        order = rng.permutation(n);
    };
    reshuffle();

    bool have_best = false;
    for (int step = 1; step <= cfg.max_steps; ++step) {
        const std::size_t pos = (std::size_t)(step - 1) % n;
        if (pos == 0 && step > 1) {
            ++epoch;
            reshuffle();
        }
        const DatasetItem& item = dataset.train_item(order[pos]);

        ad::Graph g;
        std::vector<ad::Var> param_nodes;
        ad::Var wv = g.constant(item.code.values);
        losses::TdgemLossGraph lg;
        try {
            ad::Var residual = forward(g, wv, &param_nodes);
            lg = losses::total_loss_tdgem_graph(g, wv, residual, cond, cfg.weights,
                                                cfg.use_id_loss, backends);
            if (!std::isfinite(lg.report.total))
                throw TdgemError("non-finite loss");
        } catch (const TdgemError& e) {
            throw TdgemError("train_mapper: step " + std::to_string(step) +
                             " on sample '" + item.id + "': " + e.what());
        }
        g.backward(lg.total);
        std::vector<const Tensor*> grads;
        grads.reserve(param_nodes.size());
        for (ad::Var p : param_nodes) grads.push_back(&g.grad(p));
        if (schedule == LrSchedule::Cosine) {
            constexpr double kPi = 3.14159265358979323846;
            const double floor = 0.025;
            adam.set_learning_rate(
                cfg.learning_rate *
                (floor + (1.0 - floor) * 0.5 *
                             (1.0 + std::cos(kPi * (step - 1) / cfg.max_steps))));
        }
        adam.step(grads);

        for (const auto& [name, value] : lg.report.terms)
            result.log.push_back({step, name, value});
        result.log.push_back({step, "total", lg.report.total});
        result.steps = step;
        result.final_total = lg.report.total;

        const bool is_best = !have_best || lg.report.total < result.best_total;
        if (is_best) {
            result.best_total = lg.report.total;
            result.best_step = step;
            have_best = true;
        }
        if (sink && (is_best || step % kCheckpointEvery == 0 || step == cfg.max_steps))
            sink(step, is_best);
    }
    return result;
}

}  // namespace

TrainResult train_tdgem_mapper(mapper::TdGemMapper& m, const LatentDataset& dataset,
                               const TextCondition& cond, const EditConfig& cfg,
                               const Backends& backends, const CheckpointSink& sink,
                               LrSchedule schedule) {
    if (m.inject_fine() != cfg.inject_fine)
        throw TdgemError("train_tdgem_mapper: mapper inject_fine disagrees with config");
    return run_training(
        m.parameters(),
        [&](ad::Graph& g, ad::Var wv, std::vector<ad::Var>* params) {
            return m.forward(g, wv, cond, params);
        },
        dataset, cond, cfg, backends, sink, schedule);
}

TrainResult train_styleclip_mapper(mapper::StyleClipMapper& m,
                                   const LatentDataset& dataset,
                                   const TextCondition& cond, const EditConfig& cfg,
                                   const Backends& backends, const CheckpointSink& sink,
                                   LrSchedule schedule) {
    // the baseline objective has no color/background terms
    EditConfig base = cfg;
    base.weights.color = 0.0;
    base.weights.bg = 0.0;
    return run_training(
        m.parameters(),
        [&](ad::Graph& g, ad::Var wv, std::vector<ad::Var>* params) {
            return m.forward(g, wv, params);
        },
        dataset, cond, base, backends, sink, schedule);
}

EditOutput apply_edit(const mapper::TdGemMapper& m, const LatentCode& w,
                      const TextCondition& cond, const GeneratorBackend& gen) {
    m.validate_against(gen);
    if (w.layers() != gen.layers() || w.dim() != gen.dim())
        throw TdgemError("apply_edit: code dimensions do not match the generator");
    const LatentCode residual = m.forward_code(w, cond);
    Tensor edited = w.values;
    for (std::size_t i = 0; i < edited.size(); ++i) edited[i] += residual.values[i];
    EditOutput out{ImageBuffer{}, LatentCode{edited, w.space_tag}};
    out.image = gen.synthesize_image(out.edited_code);
    return out;
}

EditOutput apply_edit(const mapper::StyleClipMapper& m, const LatentCode& w,
                      const GeneratorBackend& gen) {
    m.validate_against(gen);
    if (w.layers() != gen.layers() || w.dim() != gen.dim())
        throw TdgemError("apply_edit: code dimensions do not match the generator");
    const LatentCode residual = m.forward_code(w);
    Tensor edited = w.values;
    for (std::size_t i = 0; i < edited.size(); ++i) edited[i] += residual.values[i];
    EditOutput out{ImageBuffer{}, LatentCode{edited, w.space_tag}};
    out.image = gen.synthesize_image(out.edited_code);
    return out;
}

ImageBuffer blend_preserved_regions(const ImageBuffer& orig, const ImageBuffer& edited,
                                    const RegionMask& preserve_mask) {
    if (!orig.pixels.same_shape(edited.pixels))
        throw TdgemError("blend_preserved_regions: image shapes differ");
    if (orig.range_tag != edited.range_tag)
        throw TdgemError("blend_preserved_regions: range tags differ");
    if (orig.height() != preserve_mask.height() || orig.width() != preserve_mask.width())
        throw TdgemError("blend_preserved_regions: mask shape does not match images");
    ImageBuffer out = edited;
    for (std::size_t p = 0; p < preserve_mask.mask.size(); ++p) {
        const double m = preserve_mask.mask[p];
        if (m == 0.0) continue;
        for (std::size_t c = 0; c < 3; ++c)
            out.pixels[3 * p + c] =
                m * orig.pixels[3 * p + c] + (1.0 - m) * edited.pixels[3 * p + c];
    }
    return out;
}

}  // namespace tdgem::training
