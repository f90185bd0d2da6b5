#pragma once

// nlohmann-json adapters for the config types (checkpoints, manifests).

#include <json.hpp>

#include "tdgem/core.hpp"

namespace tdgem {

inline void to_json(nlohmann::json& j, const LatentPartition& p) {
    j = nlohmann::json{{"layers", p.layers},
                       {"coarse_end", p.coarse_end},
                       {"medium_end", p.medium_end}};
}

inline void from_json(const nlohmann::json& j, LatentPartition& p) {
    p.layers = j.at("layers").get<std::size_t>();
    p.coarse_end = j.at("coarse_end").get<std::size_t>();
    p.medium_end = j.at("medium_end").get<std::size_t>();
}

inline void to_json(nlohmann::json& j, const LossWeights& w) {
    j = nlohmann::json{{"clip", w.clip},
                       {"l2", w.l2},
                       {"id", w.id},
                       {"color", w.color},
                       {"bg", w.bg}};
}

inline void from_json(const nlohmann::json& j, LossWeights& w) {
    w.clip = j.at("clip").get<double>();
    w.l2 = j.at("l2").get<double>();
    w.id = j.at("id").get<double>();
    w.color = j.at("color").get<double>();
    w.bg = j.at("bg").get<double>();
}

inline void to_json(nlohmann::json& j, const EditConfig& c) {
    j = nlohmann::json{{"partition", c.partition},
                       {"weights", c.weights},
                       {"inject_fine", c.inject_fine},
                       {"use_id_loss", c.use_id_loss},
                       {"learning_rate", c.learning_rate},
                       {"max_steps", c.max_steps},
                       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, EditConfig& c) {
    c.partition = j.at("partition").get<LatentPartition>();
    c.weights = j.at("weights").get<LossWeights>();
    c.inject_fine = j.at("inject_fine").get<bool>();
    c.use_id_loss = j.at("use_id_loss").get<bool>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.max_steps = j.at("max_steps").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
}

}  // namespace tdgem
