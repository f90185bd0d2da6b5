#pragma once

// Pluggable model interfaces the editing pipelines are written against:
// generator, joint text/image encoder, human parser, identity feature trunk,
// perceptual distance. The toy implementations are small, seeded, fully
// differentiable stand-ins so the whole algorithmic core runs offline; real
// checkpoint adapters must satisfy the same contracts (the contract tests run
// against the interface, not the implementation).

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tdgem/autodiff.hpp"
#include "tdgem/core.hpp"

namespace tdgem {

class GeneratorBackend {
public:
    virtual ~GeneratorBackend() = default;
    virtual std::size_t layers() const = 0;
    virtual std::size_t dim() const = 0;
    virtual std::size_t height() const = 0;
    virtual std::size_t width() const = 0;
    virtual std::string identifier() const = 0;

    // Differentiable decode of a (L, D) code node into a (H, W, 3) image node
    // in SIGNED_UNIT range. When param_nodes is non-null the generator weights
    // are inserted as differentiable leaves (for PTI) and reported there, in
    // the same order as parameters().
    virtual ad::Var synthesize(ad::Graph& g, ad::Var code,
                               std::vector<ad::Var>* param_nodes = nullptr) const = 0;

    // Mutable weights, used by generator fine-tuning.
    virtual std::vector<Tensor*> parameters() = 0;

    ImageBuffer synthesize_image(const LatentCode& code) const;
};

class JointEncoderBackend {
public:
    virtual ~JointEncoderBackend() = default;
    virtual std::size_t embed_dim() const = 0;
    virtual std::string identifier() const = 0;

    // Prompt -> anchor vector; unknown prompts raise TdgemError.
    virtual Tensor encode_text(const std::string& prompt) const = 0;
    // Differentiable image embedding; `range` declares the range of `image`.
    virtual ad::Var encode_image(ad::Graph& g, ad::Var image, RangeTag range) const = 0;

    Tensor encode_image_tensor(const ImageBuffer& img) const;
};

class ParserBackend {
public:
    virtual ~ParserBackend() = default;
    virtual std::string identifier() const = 0;
    // Foreground indicator, same H x W as the input. Not differentiable: the
    // parse is a constant during loss backpropagation.
    virtual RegionMask parse(const ImageBuffer& img) const = 0;
};

class IdentityFeatureBackend {
public:
    virtual ~IdentityFeatureBackend() = default;
    virtual std::string identifier() const = 0;
    virtual ad::Var features(ad::Graph& g, ad::Var image, RangeTag range) const = 0;

    Tensor features_tensor(const ImageBuffer& img) const;
};

class PerceptualDistanceBackend {
public:
    virtual ~PerceptualDistanceBackend() = default;
    virtual std::string identifier() const = 0;
    // Nonnegative scalar node; zero for identical inputs, symmetric.
    virtual ad::Var distance(ad::Graph& g, ad::Var a, ad::Var b, RangeTag range) const = 0;

    double distance_value(const ImageBuffer& a, const ImageBuffer& b) const;
};

struct Backends {
    std::shared_ptr<GeneratorBackend> generator;
    std::shared_ptr<JointEncoderBackend> encoder;
    std::shared_ptr<ParserBackend> parser;
    std::shared_ptr<IdentityFeatureBackend> identity;
    std::shared_ptr<PerceptualDistanceBackend> perceptual;
};

// ---------------------------------------------------------------------------
// toy stack

// Small decoder: two tanh affine stages followed by a spatial basis expansion
// (constant + vertical ramp + seeded low-frequency cosines) and a final tanh
// into SIGNED_UNIT range. A zero code decodes to mid-gray.
class ToyGenerator final : public GeneratorBackend {
public:
    ToyGenerator(std::size_t layers, std::size_t dim, std::size_t height,
                 std::size_t width, std::uint64_t seed);

    std::size_t layers() const override { return layers_; }
    std::size_t dim() const override { return dim_; }
    std::size_t height() const override { return height_; }
    std::size_t width() const override { return width_; }
    std::string identifier() const override;

    ad::Var synthesize(ad::Graph& g, ad::Var code,
                       std::vector<ad::Var>* param_nodes = nullptr) const override;
    std::vector<Tensor*> parameters() override;

    std::uint64_t seed() const { return seed_; }
    void save_checkpoint(const std::filesystem::path& path) const;
    static std::unique_ptr<ToyGenerator> load_checkpoint(const std::filesystem::path& path);

private:
    std::size_t layers_, dim_, height_, width_;
    std::uint64_t seed_;
    std::size_t hidden_, nbasis_;
    Tensor w1_, b1_, w2_, b2_;  // trainable
    Tensor basis_;              // (H*W, nbasis), fixed
};

std::shared_ptr<ToyGenerator> toy_generator(std::size_t layers, std::size_t dim,
                                            std::size_t height, std::size_t width,
                                            std::uint64_t seed);

// Embeds mean RGB plus the upper-half/lower-half mean difference through a
// fixed random projection, normalized. Text anchors are the same embedding of
// canonical prompt images, so an image that satisfies a prompt scores a high
// cosine against it.
class ToyJointEncoder final : public JointEncoderBackend {
public:
    ToyJointEncoder(std::size_t embed_dim, std::uint64_t seed);

    std::size_t embed_dim() const override { return embed_dim_; }
    std::string identifier() const override;
    Tensor encode_text(const std::string& prompt) const override;
    ad::Var encode_image(ad::Graph& g, ad::Var image, RangeTag range) const override;

    static std::vector<std::string> vocabulary();

private:
    std::size_t embed_dim_;
    std::uint64_t seed_;
    Tensor projection_;  // (E, 6)
};

std::shared_ptr<ToyJointEncoder> toy_joint_encoder(std::size_t embed_dim,
                                                   std::uint64_t seed);

// Foreground = configured fractional rectangle, or luminance above a
// threshold. Rectangle bounds are fractions of the image so one parser works
// across image sizes.
class ToyParser final : public ParserBackend {
public:
    static std::shared_ptr<ToyParser> rectangle(double row0, double row1, double col0,
                                                double col1);
    static std::shared_ptr<ToyParser> luminance(double threshold);

    std::string identifier() const override;
    RegionMask parse(const ImageBuffer& img) const override;

private:
    ToyParser() = default;
    bool rect_mode_ = true;
    double r0_ = 0, r1_ = 1, c0_ = 0, c1_ = 1;
    double threshold_ = 0.5;
};

// Fixed random projection of the average-pooled image through tanh. The pool
// target adapts to the image size; weights per size are derived
// deterministically from the seed.
class ToyIdentityTrunk final : public IdentityFeatureBackend {
public:
    ToyIdentityTrunk(std::size_t feature_dim, std::uint64_t seed);
    std::string identifier() const override;
    std::size_t feature_dim() const { return feature_dim_; }
    ad::Var features(ad::Graph& g, ad::Var image, RangeTag range) const override;

private:
    const Tensor& weight_for(std::size_t flat_dim) const;
    std::size_t feature_dim_;
    std::uint64_t seed_;
    mutable std::map<std::size_t, Tensor> cache_;
};

// Mean squared difference of fixed random filter responses on a pooled copy
// of each image.
class ToyPerceptualDistance final : public PerceptualDistanceBackend {
public:
    explicit ToyPerceptualDistance(std::uint64_t seed, std::size_t filters = 24);
    std::string identifier() const override;
    ad::Var distance(ad::Graph& g, ad::Var a, ad::Var b, RangeTag range) const override;

private:
    const Tensor& weight_for(std::size_t flat_dim) const;
    std::size_t filters_;
    std::uint64_t seed_;
    mutable std::map<std::size_t, Tensor> cache_;
};

struct ToyStackConfig {
    std::size_t layers = 6;
    std::size_t dim = 8;
    std::size_t height = 16;
    std::size_t width = 16;
    std::size_t embed_dim = 8;
    std::size_t feature_dim = 8;
    std::uint64_t seed = 7;
    // default foreground: the centered garment band of the toy generator
    double rect_row0 = 0.0, rect_row1 = 1.0, rect_col0 = 0.125, rect_col1 = 0.875;
};

Backends make_toy_backends(const ToyStackConfig& cfg);

// Helpers shared by the image-consuming backends.
ad::Var image_as_unit(ad::Graph& g, ad::Var image, RangeTag range);
std::size_t adaptive_pool_factor(std::size_t height, std::size_t width);

// Builds a TextCondition by embedding the prompts with the given encoder.
TextCondition make_condition(const JointEncoderBackend& enc, const std::string& shape_prompt,
                             const std::optional<std::string>& color_prompt = std::nullopt);

}  // namespace tdgem
