#pragma once

// Mapper training over a latent-code dataset with the weighted editing loss,
// plus dataset splitting and the editing/blending application helpers.

#include <functional>
#include <string>
#include <vector>

#include "tdgem/backends.hpp"
#include "tdgem/core.hpp"
#include "tdgem/losses.hpp"
#include "tdgem/mapper.hpp"

namespace tdgem::training {

struct DatasetItem {
    std::string id;
    LatentCode code;
};

struct LatentDataset {
    std::vector<DatasetItem> items;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;

    std::size_t train_size() const { return train_indices.size(); }
    std::size_t test_size() const { return test_indices.size(); }
    const DatasetItem& train_item(std::size_t i) const { return items[train_indices[i]]; }
    const DatasetItem& test_item(std::size_t i) const { return items[test_indices[i]]; }
};

// Deterministic shuffled split; train share is round(ratio * n).
LatentDataset split_dataset(std::vector<DatasetItem> items, double ratio,
                            std::uint64_t seed);

struct TrainLogRow {
    int step;
    std::string term;
    double value;
};

struct TrainResult {
    std::vector<TrainLogRow> log;
    int steps = 0;
    int best_step = 0;
    double best_total = 0.0;
    double final_total = 0.0;
};

// Called on checkpoint cadence (every checkpoint_every steps) and whenever a
// new best-loss iterate appears.
using CheckpointSink = std::function<void(int step, bool is_best)>;

inline constexpr int kCheckpointEvery = 5000;

enum class LrSchedule { Constant, Cosine };

// Batch-size-1 training loop: per step forward the mapper on one latent code,
// assemble the weighted loss, update with Adam. Deterministic given
// (cfg.seed, dataset order, cfg). cfg.max_steps == 0 is a no-op with an
// empty log. A non-finite loss aborts, naming the offending sample.
TrainResult train_tdgem_mapper(mapper::TdGemMapper& m, const LatentDataset& dataset,
                               const TextCondition& cond, const EditConfig& cfg,
                               const Backends& backends,
                               const CheckpointSink& sink = nullptr,
                               LrSchedule schedule = LrSchedule::Constant);

// Same loop for the per-prompt baseline mapper (loss terms: clip, norm, id).
TrainResult train_styleclip_mapper(mapper::StyleClipMapper& m,
                                   const LatentDataset& dataset,
                                   const TextCondition& cond, const EditConfig& cfg,
                                   const Backends& backends,
                                   const CheckpointSink& sink = nullptr,
                                   LrSchedule schedule = LrSchedule::Constant);

struct EditOutput {
    ImageBuffer image;
    LatentCode edited_code;
};

EditOutput apply_edit(const mapper::TdGemMapper& m, const LatentCode& w,
                      const TextCondition& cond, const GeneratorBackend& gen);
EditOutput apply_edit(const mapper::StyleClipMapper& m, const LatentCode& w,
                      const GeneratorBackend& gen);

// preserve_mask * orig + (1 - preserve_mask) * edited, per pixel
ImageBuffer blend_preserved_regions(const ImageBuffer& orig, const ImageBuffer& edited,
                                    const RegionMask& preserve_mask);

}  // namespace tdgem::training
