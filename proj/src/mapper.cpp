#include "tdgem/mapper.hpp"

#include <cmath>

#include "tdgem/json_conv.hpp"
#include "tdgem/serialize.hpp"

namespace tdgem::mapper {

using nlohmann::json;

namespace {

constexpr double kLayerNormEps = 1e-5;

// affine -> layer norm -> leaky ReLU -> affine, all on a single vector
ad::Var mlp_forward(ad::Graph& g, ad::Var e, ad::Var w1, ad::Var b1, ad::Var w2,
                    ad::Var b2) {
    const std::size_t embed = g.val(e).size();
    const std::size_t dim = g.val(b1).size();
    ad::Var h = ad::affine_rows(ad::reshape(e, {1, embed}), w1, b1);
    h = ad::layernorm_vec(ad::reshape(h, {dim}), kLayerNormEps);
    h = ad::leaky_relu(h, kLeakySlope);
    h = ad::affine_rows(ad::reshape(h, {1, dim}), w2, b2);
    return ad::reshape(h, {g.val(b2).size()});
}

void init_mlp(ModulationMLP& mlp, std::size_t dim, std::size_t embed, Rng& rng) {
    mlp.w1 = rng.normal_tensor({dim, embed}, 1.0 / std::sqrt((double)embed));
    mlp.b1 = Tensor({dim});
    mlp.w2 = rng.normal_tensor({dim, dim}, 1.0 / std::sqrt((double)dim));
    mlp.b2 = Tensor({dim});
}

}  // namespace

ad::Var modulate(ad::Graph& g, ad::Var y, ad::Var e, ad::Var gw1, ad::Var gb1,
                 ad::Var gw2, ad::Var gb2, ad::Var bw1, ad::Var bb1, ad::Var bw2,
                 ad::Var bb2, double eps) {
    if (eps <= 0.0) throw TdgemError("modulate: eps must be > 0");
    const bool is_vector = g.val(y).rank() == 1;
    ad::Var rows = is_vector ? ad::reshape(y, {1, g.val(y).size()}) : y;
    ad::Var normalized = ad::rownorm_meanstd(rows, eps);
    ad::Var gamma = mlp_forward(g, e, gw1, gb1, gw2, gb2);
    ad::Var beta = mlp_forward(g, e, bw1, bb1, bw2, bb2);
    ad::Var out = ad::add_scalar(
        ad::add_rowvec(ad::mul_rowvec(normalized, gamma), beta), 1.0);
    return is_vector ? ad::reshape(out, {g.val(y).size()}) : out;
}

Tensor modulate(const Tensor& y, const Tensor& e, const ModulationLayerParams& p,
                double eps) {
    ad::Graph g;
    ad::Var out = modulate(g, g.constant(y), g.constant(e), g.constant(p.gamma.w1),
                           g.constant(p.gamma.b1), g.constant(p.gamma.w2),
                           g.constant(p.gamma.b2), g.constant(p.beta.w1),
                           g.constant(p.beta.b1), g.constant(p.beta.w2),
                           g.constant(p.beta.b2), eps);
    return g.val(out);
}

// ---------------------------------------------------------------------------
// TdGemMapper

TdGemMapper::TdGemMapper(LatentPartition partition, std::size_t dim,
                         std::size_t embed_dim, bool inject_fine, std::uint64_t seed)
    : partition_(make_partition(partition.layers, partition.coarse_end,
                                partition.medium_end)),
      dim_(dim),
      embed_dim_(embed_dim),
      inject_fine_(inject_fine) {
    if (dim == 0 || embed_dim == 0) throw TdgemError("TdGemMapper: zero dimension");
    Rng rng(seed ^ 0x4d415031ull);
    for (auto& sub : subs_) {
        for (auto& blk : sub.blocks) {
            blk.w = rng.normal_tensor({dim_, dim_}, 1.0 / std::sqrt((double)dim_));
            blk.b = Tensor({dim_});
            init_mlp(blk.mod.gamma, dim_, embed_dim_, rng);
            init_mlp(blk.mod.beta, dim_, embed_dim_, rng);
        }
        sub.w_out = Tensor({dim_, dim_});
        sub.b_out = Tensor({dim_});
    }
}

std::vector<Tensor*> TdGemMapper::parameters() {
    std::vector<Tensor*> out;
    for (auto& sub : subs_) {
        for (auto& blk : sub.blocks) {
            out.push_back(&blk.w);
            out.push_back(&blk.b);
            for (ModulationMLP* mlp : {&blk.mod.gamma, &blk.mod.beta}) {
                out.push_back(&mlp->w1);
                out.push_back(&mlp->b1);
                out.push_back(&mlp->w2);
                out.push_back(&mlp->b2);
            }
        }
        out.push_back(&sub.w_out);
        out.push_back(&sub.b_out);
    }
    return out;
}

std::vector<const Tensor*> TdGemMapper::parameters() const {
    auto mut = const_cast<TdGemMapper*>(this)->parameters();
    return {mut.begin(), mut.end()};
}

void TdGemMapper::randomize_all(std::uint64_t seed) {
    Rng rng(seed ^ 0x4d415032ull);
    for (Tensor* t : parameters()) {
        const double fan_in =
            t->rank() == 2 ? (double)t->cols() : (double)t->size();
        *t = rng.normal_tensor(t->shape(), 1.0 / std::sqrt(fan_in));
    }
}

void TdGemMapper::kick_output_affines(double scale, std::uint64_t seed) {
    Rng rng(seed ^ 0x4d415033ull);
    for (auto& sub : subs_) {
        sub.w_out = rng.normal_tensor(sub.w_out.shape(), scale);
        sub.b_out = rng.normal_tensor(sub.b_out.shape(), scale);
    }
}

ad::Var TdGemMapper::forward_sub(ad::Graph& g, const SubMapper& sub, ad::Var slice,
                                 const std::array<ad::Var, kBlocksPerSubMapper>& embeds,
                                 std::vector<ad::Var>* param_nodes,
                                 std::size_t& cursor) const {
    auto bind = [&](const Tensor& t) {
        if (!param_nodes) return g.constant(t);
        ad::Var v = (*param_nodes)[cursor];
        ++cursor;
        return v;
    };
    ad::Var x = slice;
    for (std::size_t k = 0; k < kBlocksPerSubMapper; ++k) {
        const ModulatedBlock& blk = sub.blocks[k];
        ad::Var w = bind(blk.w), b = bind(blk.b);
        ad::Var gw1 = bind(blk.mod.gamma.w1), gb1 = bind(blk.mod.gamma.b1);
        ad::Var gw2 = bind(blk.mod.gamma.w2), gb2 = bind(blk.mod.gamma.b2);
        ad::Var bw1 = bind(blk.mod.beta.w1), bb1 = bind(blk.mod.beta.b1);
        ad::Var bw2 = bind(blk.mod.beta.w2), bb2 = bind(blk.mod.beta.b2);

        x = ad::pixelnorm_rows(x, kModulationEps);
        ad::Var y = ad::affine_rows(x, w, b);
        y = modulate(g, y, embeds[k], gw1, gb1, gw2, gb2, bw1, bb1, bw2, bb2,
                     kModulationEps);
        x = ad::leaky_relu(y, kLeakySlope);
    }
    ad::Var w_out = bind(sub.w_out), b_out = bind(sub.b_out);
    return ad::affine_rows(x, w_out, b_out);
}

ad::Var TdGemMapper::forward(ad::Graph& g, ad::Var w, const TextCondition& cond,
                             std::vector<ad::Var>* param_nodes) const {
    cond.validate();
    const Tensor& tw = g.val(w);
    if (tw.rank() != 2 || tw.rows() != partition_.layers || tw.cols() != dim_)
        throw TdgemError("TdGemMapper: code shape does not match partition/dim");
    if (cond.shape_embedding.size() != embed_dim_)
        throw TdgemError("TdGemMapper: shape embedding dimension mismatch");
    if (cond.color_embedding && cond.color_embedding->size() != embed_dim_)
        throw TdgemError("TdGemMapper: color embedding dimension mismatch");

    if (param_nodes) {
        param_nodes->clear();
        for (const Tensor* t : parameters()) param_nodes->push_back(g.input(*t));
    }

    ad::Var shape_e = g.constant(cond.shape_embedding);
    // neutral (zero) embedding: the modulation still runs but carries no text
    ad::Var neutral = g.constant(Tensor({embed_dim_}));
    ad::Var color_e = cond.color_embedding ? g.constant(*cond.color_embedding)
                                           : shape_e;

    std::array<ad::Var, kBlocksPerSubMapper> shape_all;
    shape_all.fill(shape_e);
    std::array<ad::Var, kBlocksPerSubMapper> fine_embeds;
    if (!inject_fine_) {
        fine_embeds.fill(neutral);
    } else {
        fine_embeds.fill(shape_e);
        if (cond.color_embedding)
            for (std::size_t k = kColorBlockStart; k < kBlocksPerSubMapper; ++k)
                fine_embeds[k] = color_e;
    }

    std::size_t cursor = 0;
    ad::Var coarse = forward_sub(g, subs_[0],
                                 ad::slice_rows(w, 0, partition_.coarse_end),
                                 shape_all, param_nodes, cursor);
    ad::Var medium = forward_sub(
        g, subs_[1], ad::slice_rows(w, partition_.coarse_end, partition_.medium_end),
        shape_all, param_nodes, cursor);
    ad::Var fine = forward_sub(g, subs_[2],
                               ad::slice_rows(w, partition_.medium_end,
                                              partition_.layers),
                               fine_embeds, param_nodes, cursor);
    return ad::concat_rows({coarse, medium, fine});
}

LatentCode TdGemMapper::forward_code(const LatentCode& w, const TextCondition& cond) const {
    ad::Graph g;
    ad::Var res = forward(g, g.constant(w.values), cond);
    return LatentCode{g.val(res), w.space_tag};
}

void TdGemMapper::validate_against(const GeneratorBackend& gen) const {
    if (partition_.layers != gen.layers() || dim_ != gen.dim())
        throw TdgemError("mapper/generator mismatch: mapper is (" +
                         std::to_string(partition_.layers) + ", " + std::to_string(dim_) +
                         "), generator is (" + std::to_string(gen.layers()) + ", " +
                         std::to_string(gen.dim()) + ")");
}

void TdGemMapper::save_checkpoint(const std::filesystem::path& path,
                                  const EditConfig& cfg) const {
    json header;
    header["kind"] = "tdgem";
    header["dim"] = dim_;
    header["embed_dim"] = embed_dim_;
    header["partition"] = partition_;
    header["inject_fine"] = inject_fine_;
    header["edit_config"] = cfg;
    serialize::write_blob(path, "TDGMMAP1", header.dump(), parameters());
}

TdGemMapper::Loaded TdGemMapper::load_checkpoint(const std::filesystem::path& path) {
    serialize::Blob blob = serialize::read_blob(path, "TDGMMAP1");
    json header = json::parse(blob.header_json);
    if (header.at("kind").get<std::string>() != "tdgem")
        throw TdgemError(path.string() + ": not a tdgem mapper checkpoint");
    Loaded out;
    out.config = header.at("edit_config").get<EditConfig>();
    out.mapper = std::make_unique<TdGemMapper>(
        header.at("partition").get<LatentPartition>(),
        header.at("dim").get<std::size_t>(), header.at("embed_dim").get<std::size_t>(),
        header.at("inject_fine").get<bool>(), 0);
    std::size_t off = 0;
    for (Tensor* t : out.mapper->parameters()) {
        if (off + t->size() > blob.payload.size())
            throw TdgemError(path.string() + ": checkpoint payload too short");
        std::copy(blob.payload.begin() + off, blob.payload.begin() + off + t->size(),
                  t->data());
        off += t->size();
    }
    if (off != blob.payload.size())
        throw TdgemError(path.string() + ": checkpoint payload size mismatch");
    return out;
}

// ---------------------------------------------------------------------------
// StyleClipMapper

StyleClipMapper::StyleClipMapper(LatentPartition partition, std::size_t dim,
                                 std::uint64_t seed)
    : partition_(make_partition(partition.layers, partition.coarse_end,
                                partition.medium_end)),
      dim_(dim) {
    if (dim == 0) throw TdgemError("StyleClipMapper: zero dimension");
    Rng rng(seed ^ 0x53435031ull);
    for (auto& sub : subs_) {
        for (auto& blk : sub.blocks) {
            blk.w = rng.normal_tensor({dim_, dim_}, 1.0 / std::sqrt((double)dim_));
            blk.b = Tensor({dim_});
        }
        sub.w_out = Tensor({dim_, dim_});
        sub.b_out = Tensor({dim_});
    }
}

std::vector<Tensor*> StyleClipMapper::parameters() {
    std::vector<Tensor*> out;
    for (auto& sub : subs_) {
        for (auto& blk : sub.blocks) {
            out.push_back(&blk.w);
            out.push_back(&blk.b);
        }
        out.push_back(&sub.w_out);
        out.push_back(&sub.b_out);
    }
    return out;
}

void StyleClipMapper::randomize_all(std::uint64_t seed) {
    Rng rng(seed ^ 0x53435032ull);
    for (Tensor* t : parameters()) {
        const double fan_in =
            t->rank() == 2 ? (double)t->cols() : (double)t->size();
        *t = rng.normal_tensor(t->shape(), 1.0 / std::sqrt(fan_in));
    }
}

ad::Var StyleClipMapper::forward_sub(ad::Graph& g, const SubMapper& sub, ad::Var slice,
                                     std::vector<ad::Var>* param_nodes,
                                     std::size_t& cursor) const {
    auto bind = [&](const Tensor& t) {
        if (!param_nodes) return g.constant(t);
        ad::Var v = (*param_nodes)[cursor];
        ++cursor;
        return v;
    };
    ad::Var x = slice;
    for (const PlainBlock& blk : sub.blocks) {
        ad::Var w = bind(blk.w), b = bind(blk.b);
        x = ad::pixelnorm_rows(x, kModulationEps);
        x = ad::leaky_relu(ad::affine_rows(x, w, b), kLeakySlope);
    }
    ad::Var w_out = bind(sub.w_out), b_out = bind(sub.b_out);
    return ad::affine_rows(x, w_out, b_out);
}

ad::Var StyleClipMapper::forward(ad::Graph& g, ad::Var w,
                                 std::vector<ad::Var>* param_nodes) const {
    const Tensor& tw = g.val(w);
    if (tw.rank() != 2 || tw.rows() != partition_.layers || tw.cols() != dim_)
        throw TdgemError("StyleClipMapper: code shape does not match partition/dim");
    if (param_nodes) {
        param_nodes->clear();
        for (const Tensor* t : const_cast<StyleClipMapper*>(this)->parameters())
            param_nodes->push_back(g.input(*t));
    }
    std::size_t cursor = 0;
    ad::Var coarse = forward_sub(g, subs_[0],
                                 ad::slice_rows(w, 0, partition_.coarse_end),
                                 param_nodes, cursor);
    ad::Var medium = forward_sub(
        g, subs_[1], ad::slice_rows(w, partition_.coarse_end, partition_.medium_end),
        param_nodes, cursor);
    ad::Var fine = forward_sub(g, subs_[2],
                               ad::slice_rows(w, partition_.medium_end,
                                              partition_.layers),
                               param_nodes, cursor);
    return ad::concat_rows({coarse, medium, fine});
}

LatentCode StyleClipMapper::forward_code(const LatentCode& w) const {
    ad::Graph g;
    ad::Var res = forward(g, g.constant(w.values));
    return LatentCode{g.val(res), w.space_tag};
}

void StyleClipMapper::validate_against(const GeneratorBackend& gen) const {
    if (partition_.layers != gen.layers() || dim_ != gen.dim())
        throw TdgemError("mapper/generator mismatch");
}

void StyleClipMapper::save_checkpoint(const std::filesystem::path& path,
                                      const EditConfig& cfg) const {
    json header;
    header["kind"] = "styleclip";
    header["dim"] = dim_;
    header["partition"] = partition_;
    header["edit_config"] = cfg;
    const auto mut = const_cast<StyleClipMapper*>(this)->parameters();
    serialize::write_blob(path, "TDGMMAP1", header.dump(),
                          std::vector<const Tensor*>(mut.begin(), mut.end()));
}

StyleClipMapper::Loaded StyleClipMapper::load_checkpoint(
    const std::filesystem::path& path) {
    serialize::Blob blob = serialize::read_blob(path, "TDGMMAP1");
    json header = json::parse(blob.header_json);
    if (header.at("kind").get<std::string>() != "styleclip")
        throw TdgemError(path.string() + ": not a styleclip mapper checkpoint");
    Loaded out;
    out.config = header.at("edit_config").get<EditConfig>();
    out.mapper = std::make_unique<StyleClipMapper>(
        header.at("partition").get<LatentPartition>(),
        header.at("dim").get<std::size_t>(), 0);
    std::size_t off = 0;
    for (Tensor* t : out.mapper->parameters()) {
        if (off + t->size() > blob.payload.size())
            throw TdgemError(path.string() + ": checkpoint payload too short");
        std::copy(blob.payload.begin() + off, blob.payload.begin() + off + t->size(),
                  t->data());
        off += t->size();
    }
    if (off != blob.payload.size())
        throw TdgemError(path.string() + ": checkpoint payload size mismatch");
    return out;
}

std::string checkpoint_kind(const std::filesystem::path& path) {
    serialize::Blob blob = serialize::read_blob(path, "TDGMMAP1");
    return json::parse(blob.header_json).at("kind").get<std::string>();
}

}  // namespace tdgem::mapper
