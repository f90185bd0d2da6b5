#pragma once

// The text-conditioned residual mappers. A mapper turns a latent code into a
// residual over the same (L, D) grid, processing the coarse/medium/fine layer
// clusters with separate sub-mappers. Layers inside a cluster share weights,
// so the parameter count is independent of L.
//
// TdGemMapper: five modulated blocks per sub-mapper; shape conditioning goes
// to every sub-mapper, color conditioning (when present) to the late blocks
// of the fine one.
// StyleClipMapper: the same cluster structure without text modulation (one
// mapper is trained per prompt).

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "tdgem/autodiff.hpp"
#include "tdgem/backends.hpp"
#include "tdgem/core.hpp"

namespace tdgem::mapper {

inline constexpr double kModulationEps = 1e-8;
inline constexpr double kLeakySlope = 0.2;
inline constexpr std::size_t kBlocksPerSubMapper = 5;
// blocks [kColorBlockStart, 5) of the fine sub-mapper take the color
// embedding when a color prompt is present
inline constexpr std::size_t kColorBlockStart = 3;

// affine -> layer norm -> leaky ReLU(0.2) -> affine, from embed dim E to
// feature dim D
struct ModulationMLP {
    Tensor w1, b1;  // (D, E), (D)
    Tensor w2, b2;  // (D, D), (D)
};

struct ModulationLayerParams {
    ModulationMLP gamma;
    ModulationMLP beta;
};

// y' = 1 + f_gamma(e) * (y - mu_y) / (sigma_y + eps) + f_beta(e), statistics
// taken over the feature dimension per row.
ad::Var modulate(ad::Graph& g, ad::Var y, ad::Var e, ad::Var gw1, ad::Var gb1,
                 ad::Var gw2, ad::Var gb2, ad::Var bw1, ad::Var bb1, ad::Var bw2,
                 ad::Var bb2, double eps);
Tensor modulate(const Tensor& y, const Tensor& e, const ModulationLayerParams& params,
                double eps = kModulationEps);

struct ModulatedBlock {
    Tensor w, b;  // (D, D), (D)
    ModulationLayerParams mod;
};

struct PlainBlock {
    Tensor w, b;  // (D, D), (D)
};

class TdGemMapper {
public:
    TdGemMapper(LatentPartition partition, std::size_t dim, std::size_t embed_dim,
                bool inject_fine, std::uint64_t seed);

    const LatentPartition& partition() const { return partition_; }
    std::size_t dim() const { return dim_; }
    std::size_t embed_dim() const { return embed_dim_; }
    bool inject_fine() const { return inject_fine_; }
    void set_inject_fine(bool on) { inject_fine_ = on; }

    // Residual node of shape (L, D). With param_nodes given, the mapper
    // weights become differentiable leaves (training); otherwise constants.
    ad::Var forward(ad::Graph& g, ad::Var w, const TextCondition& cond,
                    std::vector<ad::Var>* param_nodes = nullptr) const;
    LatentCode forward_code(const LatentCode& w, const TextCondition& cond) const;

    // Stable parameter order, shared by the optimizer and the checkpoints.
    std::vector<Tensor*> parameters();
    std::vector<const Tensor*> parameters() const;

    // Re-initializes every weight randomly (the default construction zeroes
    // the final affines so the untrained mapper is the identity edit).
    void randomize_all(std::uint64_t seed);

    // Puts `scale`-sized noise on the final affines only. The norm-based
    // background penalty is nondifferentiable at the exact identity and can
    // trap training there; a small kick keeps the start an identity edit for
    // practical purposes while restoring a usable gradient.
    void kick_output_affines(double scale, std::uint64_t seed);

    void save_checkpoint(const std::filesystem::path& path, const EditConfig& cfg) const;
    struct Loaded {
        std::unique_ptr<TdGemMapper> mapper;
        EditConfig config;
    };
    static Loaded load_checkpoint(const std::filesystem::path& path);

    void validate_against(const GeneratorBackend& gen) const;

private:
    struct SubMapper {
        std::array<ModulatedBlock, kBlocksPerSubMapper> blocks;
        Tensor w_out, b_out;  // zero-initialized: identity edit at init
    };

    ad::Var forward_sub(ad::Graph& g, const SubMapper& sub, ad::Var slice,
                        const std::array<ad::Var, kBlocksPerSubMapper>& embeds,
                        std::vector<ad::Var>* param_nodes, std::size_t& cursor) const;

    LatentPartition partition_;
    std::size_t dim_, embed_dim_;
    bool inject_fine_;
    std::array<SubMapper, 3> subs_;  // coarse, medium, fine
};

class StyleClipMapper {
public:
    StyleClipMapper(LatentPartition partition, std::size_t dim, std::uint64_t seed);

    const LatentPartition& partition() const { return partition_; }
    std::size_t dim() const { return dim_; }

    ad::Var forward(ad::Graph& g, ad::Var w,
                    std::vector<ad::Var>* param_nodes = nullptr) const;
    LatentCode forward_code(const LatentCode& w) const;

    std::vector<Tensor*> parameters();
    void randomize_all(std::uint64_t seed);

    void save_checkpoint(const std::filesystem::path& path, const EditConfig& cfg) const;
    struct Loaded {
        std::unique_ptr<StyleClipMapper> mapper;
        EditConfig config;
    };
    static Loaded load_checkpoint(const std::filesystem::path& path);

    void validate_against(const GeneratorBackend& gen) const;

private:
    struct SubMapper {
        std::array<PlainBlock, kBlocksPerSubMapper> blocks;
        Tensor w_out, b_out;
    };

    ad::Var forward_sub(ad::Graph& g, const SubMapper& sub, ad::Var slice,
                        std::vector<ad::Var>* param_nodes, std::size_t& cursor) const;

    LatentPartition partition_;
    std::size_t dim_;
    std::array<SubMapper, 3> subs_;
};

// Checkpoint kind probe ("tdgem" or "styleclip") without loading parameters.
std::string checkpoint_kind(const std::filesystem::path& path);

}  // namespace tdgem::mapper
