#pragma once

// GAN inversion: generator fine-tuning around a fixed pivot code (PTI) and
// pivot acquisition, either through an external encoder adapter or a direct
// latent-optimization fallback.

#include <memory>
#include <vector>

#include "tdgem/backends.hpp"
#include "tdgem/core.hpp"

namespace tdgem::inversion {

struct PtiConfig {
    int max_steps = 3500;
    double tolerance = 1e-4;     // stop when |loss_k - loss_{k-1}| falls below
    double learning_rate = 5e-4;
    double lambda2 = 1.0;        // pixel-MSE weight in the tuning loss
};

struct InversionResult {
    LatentCode pivot;
    std::shared_ptr<GeneratorBackend> tuned_generator;
    std::vector<double> history;  // pre-update loss per step
    int steps_used = 0;
    bool converged = false;
};

// Fine-tunes the generator weights in place (the pivot stays frozen) on
// perceptual + lambda2 * MSE against x. max_steps = 0 leaves the parameters
// bit-identical and the history empty. A non-finite loss aborts.
InversionResult pti_tune(const ImageBuffer& x, const LatentCode& pivot,
                         std::shared_ptr<GeneratorBackend> generator,
                         const PerceptualDistanceBackend& lpips, const PtiConfig& cfg);

// External encoder adapter (e4e-style). Not bundled: real checkpoints bring
// their own; tests stub it.
class EncoderAdapter {
public:
    virtual ~EncoderAdapter() = default;
    virtual std::string identifier() const = 0;
    virtual LatentCode encode(const ImageBuffer& x) const = 0;
};

// Throws when no adapter is attached, pointing at encode_pivot_fallback.
LatentCode encode_pivot(const ImageBuffer& x, const EncoderAdapter* encoder);

struct FallbackConfig {
    int steps = 200;
    double learning_rate = 0.05;
    std::uint64_t seed = 0;
};

// Direct latent optimization of the pixel MSE; the stand-in used when no
// pretrained encoder is available.
LatentCode encode_pivot_fallback(const ImageBuffer& x, const GeneratorBackend& generator,
                                 const FallbackConfig& cfg);

}  // namespace tdgem::inversion
