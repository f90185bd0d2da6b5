#include "tdgem/backends.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "tdgem/serialize.hpp"

namespace tdgem {

using nlohmann::json;

// ---------------------------------------------------------------------------
// interface conveniences

ImageBuffer GeneratorBackend::synthesize_image(const LatentCode& code) const {
    ad::Graph g;
    ad::Var img = synthesize(g, g.constant(code.values));
    ImageBuffer out{g.val(img), RangeTag::SignedUnit};
    return out;
}

Tensor JointEncoderBackend::encode_image_tensor(const ImageBuffer& img) const {
    ad::Graph g;
    ad::Var e = encode_image(g, g.constant(img.pixels), img.range_tag);
    return g.val(e);
}

Tensor IdentityFeatureBackend::features_tensor(const ImageBuffer& img) const {
    ad::Graph g;
    ad::Var f = features(g, g.constant(img.pixels), img.range_tag);
    return g.val(f);
}

double PerceptualDistanceBackend::distance_value(const ImageBuffer& a,
                                                 const ImageBuffer& b) const {
    if (a.range_tag != b.range_tag)
        throw TdgemError("perceptual distance: range tags differ");
    ad::Graph g;
    ad::Var d = distance(g, g.constant(a.pixels), g.constant(b.pixels), a.range_tag);
    return g.val(d)[0];
}

ad::Var image_as_unit(ad::Graph& g, ad::Var image, RangeTag range) {
    (void)g;
    return range == RangeTag::Unit ? image : ad::signed_to_unit(image);
}

std::size_t adaptive_pool_factor(std::size_t height, std::size_t width) {
    std::size_t f = 1;
    for (std::size_t cand = 2; cand <= 16; cand *= 2) {
        if (height % cand == 0 && width % cand == 0 && height / cand >= 4 &&
            width / cand >= 4)
            f = cand;
    }
    return f;
}

// ---------------------------------------------------------------------------
// toy generator

namespace {

constexpr double kOutputGain = 2.5;

// Gram-Schmidt over the rows; requires rows <= cols.
void orthonormalize_rows(Tensor& m) {
    const std::size_t rows = m.rows(), cols = m.cols();
    for (std::size_t i = 0; i < rows; ++i) {
        double* ri = m.data() + i * cols;
        for (std::size_t j = 0; j < i; ++j) {
            const double* rj = m.data() + j * cols;
            double proj = 0.0;
            for (std::size_t c = 0; c < cols; ++c) proj += ri[c] * rj[c];
            for (std::size_t c = 0; c < cols; ++c) ri[c] -= proj * rj[c];
        }
        double nrm = 0.0;
        for (std::size_t c = 0; c < cols; ++c) nrm += ri[c] * ri[c];
        nrm = std::sqrt(nrm);
        for (std::size_t c = 0; c < cols; ++c) ri[c] /= nrm;
    }
}

}  // namespace

ToyGenerator::ToyGenerator(std::size_t layers, std::size_t dim, std::size_t height,
                           std::size_t width, std::uint64_t seed)
    : layers_(layers), dim_(dim), height_(height), width_(width), seed_(seed) {
    if (layers < 3 || dim < 1 || height < 2 || width < 2)
        throw TdgemError("toy_generator: dims too small (need L>=3, D>=1, H,W>=2)");
    // hidden width must exceed the coefficient count (3 * nbasis) so every
    // spatial-coefficient direction is reachable from the latent space
    hidden_ = 32;
    nbasis_ = 8;
    Rng rng(seed ^ 0x67454e31ull);
    const std::size_t in = layers_ * dim_;
    // orthogonal rows keep latent directions cleanly mapped onto coefficient
    // channels, mirroring the approximate disentanglement of real style
    // spaces
    w1_ = rng.normal_tensor({hidden_, in}, 1.0);
    orthonormalize_rows(w1_);
    b1_ = Tensor({hidden_});
    w2_ = rng.normal_tensor({nbasis_ * 3, hidden_}, 1.0);
    orthonormalize_rows(w2_);
    for (std::size_t i = 0; i < w2_.size(); ++i) w2_[i] *= 0.6;
    b2_ = Tensor({nbasis_ * 3});

    // basis 0/3: edge and center column bands (the toy world's background
    // and garment regions; together they span solid colors), 1/2: vertical &
    // horizontal ramps, rest: seeded low-frequency cosines. The split bands
    // give the latent space a localized garment factor, the property the
    // editing pipelines rely on in the real generator.
    basis_ = Tensor({height_ * width_, nbasis_});
    for (std::size_t r = 0; r < height_; ++r) {
        for (std::size_t c = 0; c < width_; ++c) {
            const std::size_t p = r * width_ + c;
            const bool center = c >= width_ / 8 && c < 7 * width_ / 8;
            basis_.at(p, 0) = center ? 0.0 : 1.0;
            basis_.at(p, 1) = 2.0 * ((double)r / (double)(height_ - 1)) - 1.0;
            basis_.at(p, 2) = 2.0 * ((double)c / (double)(width_ - 1)) - 1.0;
            basis_.at(p, 3) = center ? 1.0 : 0.0;
        }
    }
    constexpr double kTau = 6.283185307179586;
    for (std::size_t k = 4; k < nbasis_; ++k) {
        const double fr = rng.uniform(0.5, 2.5);
        const double fc = rng.uniform(0.5, 2.5);
        const double phase = rng.uniform(0.0, kTau);
        for (std::size_t r = 0; r < height_; ++r)
            for (std::size_t c = 0; c < width_; ++c)
                basis_.at(r * width_ + c, k) =
                    std::cos(kTau * (fr * r / (double)height_ + fc * c / (double)width_) +
                             phase);
    }
}

std::string ToyGenerator::identifier() const {
    std::ostringstream os;
    os << "toy-generator(L=" << layers_ << ",D=" << dim_ << ",H=" << height_
       << ",W=" << width_ << ",seed=" << seed_ << ")";
    return os.str();
}

ad::Var ToyGenerator::synthesize(ad::Graph& g, ad::Var code,
                                 std::vector<ad::Var>* param_nodes) const {
    const Tensor& tc = g.val(code);
    if (tc.size() != layers_ * dim_)
        throw TdgemError("toy_generator: code size mismatch, expected (" +
                         std::to_string(layers_) + ", " + std::to_string(dim_) + ")");
    ad::Var w1, b1, w2, b2;
    if (param_nodes) {
        w1 = g.input(w1_);
        b1 = g.input(b1_);
        w2 = g.input(w2_);
        b2 = g.input(b2_);
        *param_nodes = {w1, b1, w2, b2};
    } else {
        w1 = g.constant(w1_);
        b1 = g.constant(b1_);
        w2 = g.constant(w2_);
        b2 = g.constant(b2_);
    }
    ad::Var x = ad::reshape(code, {1, layers_ * dim_});
    ad::Var h = ad::tanh_t(ad::affine_rows(x, w1, b1));
    ad::Var z = ad::affine_rows(h, w2, b2);                   // (1, 3K)
    ad::Var zmat = ad::reshape(z, {nbasis_, 3});
    ad::Var pre = ad::matmul(g.constant(basis_), zmat);       // (HW, 3)
    // output gain: near-saturated colors stay reachable with moderate z
    return ad::reshape(ad::tanh_t(ad::scale(pre, kOutputGain)),
                       {height_, width_, 3});
}

std::vector<Tensor*> ToyGenerator::parameters() { return {&w1_, &b1_, &w2_, &b2_}; }

void ToyGenerator::save_checkpoint(const std::filesystem::path& path) const {
    json header;
    header["kind"] = "toy-generator";
    header["layers"] = layers_;
    header["dim"] = dim_;
    header["height"] = height_;
    header["width"] = width_;
    header["seed"] = seed_;
    header["hidden"] = hidden_;
    header["nbasis"] = nbasis_;
    serialize::write_blob(path, "TDGMGEN1", header.dump(), {&w1_, &b1_, &w2_, &b2_});
}

std::unique_ptr<ToyGenerator> ToyGenerator::load_checkpoint(
    const std::filesystem::path& path) {
    serialize::Blob blob = serialize::read_blob(path, "TDGMGEN1");
    json header = json::parse(blob.header_json);
    auto gen = std::make_unique<ToyGenerator>(
        header.at("layers").get<std::size_t>(), header.at("dim").get<std::size_t>(),
        header.at("height").get<std::size_t>(), header.at("width").get<std::size_t>(),
        header.at("seed").get<std::uint64_t>());
    std::size_t off = 0;
    for (Tensor* t : gen->parameters()) {
        if (off + t->size() > blob.payload.size())
            throw TdgemError(path.string() + ": checkpoint payload too short");
        std::copy(blob.payload.begin() + off, blob.payload.begin() + off + t->size(),
                  t->data());
        off += t->size();
    }
    if (off != blob.payload.size())
        throw TdgemError(path.string() + ": checkpoint payload size mismatch");
    return gen;
}

std::shared_ptr<ToyGenerator> toy_generator(std::size_t layers, std::size_t dim,
                                            std::size_t height, std::size_t width,
                                            std::uint64_t seed) {
    return std::make_shared<ToyGenerator>(layers, dim, height, width, seed);
}

// ---------------------------------------------------------------------------
// toy joint encoder

namespace {

struct CanonicalImage {
    double top[3];
    double bottom[3];
};

// Prompt -> canonical 8x8 image in UNIT range. Solid colors for color
// prompts; sleeve prompts use a top/bottom brightness split that matches the
// encoder's upper-vs-lower feature.
const std::map<std::string, CanonicalImage>& canonical_images() {
    static const std::map<std::string, CanonicalImage> table = {
        {"red", {{1, 0, 0}, {1, 0, 0}}},
        {"green", {{0, 1, 0}, {0, 1, 0}}},
        {"blue", {{0, 0, 1}, {0, 0, 1}}},
        {"white", {{1, 1, 1}, {1, 1, 1}}},
        {"black", {{0, 0, 0}, {0, 0, 0}}},
        {"gray", {{0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}}},
        {"yellow", {{1, 1, 0}, {1, 1, 0}}},
        {"cyan", {{0, 1, 1}, {0, 1, 1}}},
        {"magenta", {{1, 0, 1}, {1, 0, 1}}},
        {"orange", {{1, 0.5, 0}, {1, 0.5, 0}}},
        {"a long sleeve", {{0.3, 0.3, 0.3}, {0.7, 0.7, 0.7}}},
        {"long sleeve", {{0.3, 0.3, 0.3}, {0.7, 0.7, 0.7}}},
        {"long sleeves", {{0.3, 0.3, 0.3}, {0.7, 0.7, 0.7}}},
        {"a short sleeve", {{0.7, 0.7, 0.7}, {0.3, 0.3, 0.3}}},
        {"short sleeve", {{0.7, 0.7, 0.7}, {0.3, 0.3, 0.3}}},
        {"short sleeves", {{0.7, 0.7, 0.7}, {0.3, 0.3, 0.3}}},
    };
    return table;
}

std::string normalize_prompt(const std::string& s) {
    std::string out;
    for (char c : s) out.push_back((char)std::tolower((unsigned char)c));
    const auto b = out.find_first_not_of(" \t");
    const auto e = out.find_last_not_of(" \t");
    if (b == std::string::npos) return "";
    return out.substr(b, e - b + 1);
}

}  // namespace

ToyJointEncoder::ToyJointEncoder(std::size_t embed_dim, std::uint64_t seed)
    : embed_dim_(embed_dim), seed_(seed) {
    if (embed_dim < 3) throw TdgemError("toy_joint_encoder: embed dim must be >= 3");
    Rng rng(seed ^ 0x454e4331ull);
    projection_ = rng.normal_tensor({embed_dim_, 6}, 1.0 / std::sqrt(6.0));
}

std::string ToyJointEncoder::identifier() const {
    std::ostringstream os;
    os << "toy-encoder(E=" << embed_dim_ << ",seed=" << seed_ << ")";
    return os.str();
}

std::vector<std::string> ToyJointEncoder::vocabulary() {
    std::vector<std::string> v;
    for (const auto& [k, _] : canonical_images()) v.push_back(k);
    return v;
}

ad::Var ToyJointEncoder::encode_image(ad::Graph& g, ad::Var image, RangeTag range) const {
    const auto& shape = g.val(image).shape();
    if (shape.size() != 3 || shape[2] != 3)
        throw TdgemError("toy_joint_encoder: expected a (H, W, 3) image");
    const std::size_t h = shape[0], w = shape[1];
    if (h < 2) throw TdgemError("toy_joint_encoder: image height must be >= 2");
    ad::Var unit = image_as_unit(g, image, range);
    ad::Var m = ad::channel_mean_rows(unit, h, w, 0, h);
    ad::Var upper = ad::channel_mean_rows(unit, h, w, 0, h / 2);
    ad::Var lower = ad::channel_mean_rows(unit, h, w, h / 2, h);
    ad::Var diff = ad::sub(upper, lower);
    ad::Var feats = ad::concat_rows({ad::reshape(m, {1, 3}), ad::reshape(diff, {1, 3})});
    ad::Var col = ad::reshape(feats, {6, 1});
    ad::Var proj = ad::matmul(g.constant(projection_), col);  // (E, 1)
    return ad::normalize_vec(ad::reshape(proj, {embed_dim_}), 1e-12);
}

Tensor ToyJointEncoder::encode_text(const std::string& prompt) const {
    const std::string key = normalize_prompt(prompt);
    const auto& table = canonical_images();
    const auto it = table.find(key);
    if (it == table.end()) {
        std::ostringstream os;
        os << "toy_joint_encoder: unknown prompt '" << prompt << "'; known prompts:";
        for (const auto& [k, _] : table) os << " '" << k << "'";
        throw TdgemError(os.str());
    }
    const CanonicalImage& ci = it->second;
    constexpr std::size_t side = 8;
    Tensor img({side, side, 3});
    for (std::size_t r = 0; r < side; ++r)
        for (std::size_t c = 0; c < side; ++c)
            for (std::size_t ch = 0; ch < 3; ++ch)
                img[(r * side + c) * 3 + ch] = r < side / 2 ? ci.top[ch] : ci.bottom[ch];
    ad::Graph g;
    ad::Var e = encode_image(g, g.constant(img), RangeTag::Unit);
    return g.val(e);
}

std::shared_ptr<ToyJointEncoder> toy_joint_encoder(std::size_t embed_dim,
                                                   std::uint64_t seed) {
    return std::make_shared<ToyJointEncoder>(embed_dim, seed);
}

// ---------------------------------------------------------------------------
// toy parser

std::shared_ptr<ToyParser> ToyParser::rectangle(double row0, double row1, double col0,
                                                double col1) {
    if (!(row0 <= row1 && col0 <= col1) || row0 < 0 || row1 > 1 || col0 < 0 || col1 > 1)
        throw TdgemError("toy_parser: rectangle fractions must satisfy 0<=lo<=hi<=1");
    auto p = std::shared_ptr<ToyParser>(new ToyParser());
    p->rect_mode_ = true;
    p->r0_ = row0;
    p->r1_ = row1;
    p->c0_ = col0;
    p->c1_ = col1;
    return p;
}

std::shared_ptr<ToyParser> ToyParser::luminance(double threshold) {
    auto p = std::shared_ptr<ToyParser>(new ToyParser());
    p->rect_mode_ = false;
    p->threshold_ = threshold;
    return p;
}

std::string ToyParser::identifier() const {
    std::ostringstream os;
    if (rect_mode_)
        os << "toy-parser(rect=" << r0_ << ":" << r1_ << "," << c0_ << ":" << c1_ << ")";
    else
        os << "toy-parser(luminance>" << threshold_ << ")";
    return os.str();
}

RegionMask ToyParser::parse(const ImageBuffer& img) const {
    const std::size_t h = img.height(), w = img.width();
    if (h == 0 || w == 0) throw TdgemError("toy_parser: empty image");
    RegionMask out{Tensor({h, w})};
    if (rect_mode_) {
        const auto lo_r = (std::size_t)std::llround(r0_ * (double)h);
        const auto hi_r = (std::size_t)std::llround(r1_ * (double)h);
        const auto lo_c = (std::size_t)std::llround(c0_ * (double)w);
        const auto hi_c = (std::size_t)std::llround(c1_ * (double)w);
        for (std::size_t r = lo_r; r < hi_r; ++r)
            for (std::size_t c = lo_c; c < hi_c; ++c) out.mask.at(r, c) = 1.0;
    } else {
        const ImageBuffer unit = to_unit_range(img);
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < w; ++c) {
                const double* px = unit.pixels.data() + (r * w + c) * 3;
                const double lum = (px[0] + px[1] + px[2]) / 3.0;
                out.mask.at(r, c) = lum > threshold_ ? 1.0 : 0.0;
            }
    }
    return out;
}

// ---------------------------------------------------------------------------
// toy identity trunk

ToyIdentityTrunk::ToyIdentityTrunk(std::size_t feature_dim, std::uint64_t seed)
    : feature_dim_(feature_dim), seed_(seed) {
    if (feature_dim == 0) throw TdgemError("toy_identity: feature dim must be > 0");
}

std::string ToyIdentityTrunk::identifier() const {
    std::ostringstream os;
    os << "toy-identity(F=" << feature_dim_ << ",seed=" << seed_ << ")";
    return os.str();
}

const Tensor& ToyIdentityTrunk::weight_for(std::size_t flat_dim) const {
    auto it = cache_.find(flat_dim);
    if (it == cache_.end()) {
        Rng rng(seed_ ^ (0x49445431ull + flat_dim * 0x9e3779b97f4a7c15ull));
        it = cache_
                 .emplace(flat_dim, rng.normal_tensor({feature_dim_, flat_dim},
                                                      1.0 / std::sqrt((double)flat_dim)))
                 .first;
    }
    return it->second;
}

ad::Var ToyIdentityTrunk::features(ad::Graph& g, ad::Var image, RangeTag range) const {
    const auto& shape = g.val(image).shape();
    if (shape.size() != 3 || shape[2] != 3)
        throw TdgemError("toy_identity: expected a (H, W, 3) image");
    const std::size_t h = shape[0], w = shape[1];
    const std::size_t f = adaptive_pool_factor(h, w);
    ad::Var unit = image_as_unit(g, image, range);
    ad::Var pooled = f > 1 ? ad::avgpool2d(unit, h, w, f, f) : unit;
    const std::size_t flat = g.val(pooled).size();
    ad::Var col = ad::reshape(pooled, {flat, 1});
    ad::Var proj = ad::matmul(g.constant(weight_for(flat)), col);
    return ad::tanh_t(ad::reshape(proj, {feature_dim_}));
}

// ---------------------------------------------------------------------------
// toy perceptual distance

ToyPerceptualDistance::ToyPerceptualDistance(std::uint64_t seed, std::size_t filters)
    : filters_(filters), seed_(seed) {
    if (filters == 0) throw TdgemError("toy_perceptual: filter count must be > 0");
}

std::string ToyPerceptualDistance::identifier() const {
    std::ostringstream os;
    os << "toy-perceptual(filters=" << filters_ << ",seed=" << seed_ << ")";
    return os.str();
}

const Tensor& ToyPerceptualDistance::weight_for(std::size_t flat_dim) const {
    auto it = cache_.find(flat_dim);
    if (it == cache_.end()) {
        Rng rng(seed_ ^ (0x4c504950ull + flat_dim * 0x9e3779b97f4a7c15ull));
        it = cache_
                 .emplace(flat_dim, rng.normal_tensor({filters_, flat_dim},
                                                      1.0 / std::sqrt((double)flat_dim)))
                 .first;
    }
    return it->second;
}

ad::Var ToyPerceptualDistance::distance(ad::Graph& g, ad::Var a, ad::Var b,
                                        RangeTag range) const {
    const auto& sa = g.val(a).shape();
    const auto& sb = g.val(b).shape();
    if (sa != sb) throw TdgemError("toy_perceptual: image shapes differ");
    if (sa.size() != 3 || sa[2] != 3)
        throw TdgemError("toy_perceptual: expected (H, W, 3) images");
    const std::size_t h = sa[0], w = sa[1];
    const std::size_t f = adaptive_pool_factor(h, w);
    auto embed = [&](ad::Var img) {
        ad::Var unit = image_as_unit(g, img, range);
        ad::Var pooled = f > 1 ? ad::avgpool2d(unit, h, w, f, f) : unit;
        const std::size_t flat = g.val(pooled).size();
        ad::Var col = ad::reshape(pooled, {flat, 1});
        ad::Var proj = ad::matmul(g.constant(weight_for(flat)), col);
        return ad::tanh_t(ad::reshape(proj, {filters_}));
    };
    return ad::mse(embed(a), embed(b));
}

// ---------------------------------------------------------------------------

Backends make_toy_backends(const ToyStackConfig& cfg) {
    Backends b;
    b.generator = toy_generator(cfg.layers, cfg.dim, cfg.height, cfg.width,
                                cfg.seed * 1000 + 1);
    b.encoder = toy_joint_encoder(cfg.embed_dim, cfg.seed * 1000 + 2);
    b.parser = ToyParser::rectangle(cfg.rect_row0, cfg.rect_row1, cfg.rect_col0,
                                    cfg.rect_col1);
    b.identity = std::make_shared<ToyIdentityTrunk>(cfg.feature_dim, cfg.seed * 1000 + 3);
    b.perceptual = std::make_shared<ToyPerceptualDistance>(cfg.seed * 1000 + 4);
    return b;
}

TextCondition make_condition(const JointEncoderBackend& enc, const std::string& shape_prompt,
                             const std::optional<std::string>& color_prompt) {
    TextCondition cond;
    cond.shape_prompt = shape_prompt;
    cond.shape_embedding = enc.encode_text(shape_prompt);
    if (color_prompt) {
        cond.color_prompt = *color_prompt;
        cond.color_embedding = enc.encode_text(*color_prompt);
    }
    cond.validate();
    return cond;
}

}  // namespace tdgem
