#include "tdgem/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "tdgem/kernels.hpp"

namespace tdgem {

std::string to_string(SpaceTag t) { return t == SpaceTag::W ? "w" : "wplus"; }

SpaceTag space_tag_from_string(const std::string& s) {
    if (s == "w") return SpaceTag::W;
    if (s == "wplus" || s == "w+") return SpaceTag::WPlus;
    throw TdgemError("unknown space tag: " + s);
}

void LatentCode::validate() const {
    if (values.rank() != 2) throw TdgemError("LatentCode: expected a (L, D) tensor");
    if (layers() < 3)
        throw TdgemError("LatentCode: need at least 3 layers for a coarse/medium/fine split");
    if (dim() < 1) throw TdgemError("LatentCode: layer dimension must be >= 1");
    if (!values.all_finite()) throw TdgemError("LatentCode: non-finite entries");
}

LatentCode make_latent(Tensor values, SpaceTag tag) {
    LatentCode c{std::move(values), tag};
    c.validate();
    return c;
}

LatentPartition make_partition(std::size_t layers, std::size_t coarse_end,
                               std::size_t medium_end) {
    if (!(coarse_end > 0 && coarse_end < medium_end && medium_end < layers)) {
        std::ostringstream os;
        os << "make_partition: need 0 < coarse_end < medium_end < layers, got ("
           << layers << ", " << coarse_end << ", " << medium_end << ")";
        throw TdgemError(os.str());
    }
    return LatentPartition{layers, coarse_end, medium_end};
}

LatentPartition default_partition(std::size_t layers) {
    if (layers >= 9) return make_partition(layers, 4, 8);
    if (layers < 3) throw TdgemError("default_partition: need at least 3 layers");
    return make_partition(layers, layers / 3, 2 * layers / 3);
}

void TextCondition::validate() const {
    if (shape_prompt.empty()) throw TdgemError("TextCondition: shape prompt missing");
    if (shape_embedding.size() == 0 || !shape_embedding.all_finite())
        throw TdgemError("TextCondition: shape embedding missing or non-finite");
    double s = kernels::dot(shape_embedding.data(), shape_embedding.data(),
                            shape_embedding.size());
    if (s <= 0.0) throw TdgemError("TextCondition: shape embedding is zero");
    if (color_prompt.has_value() != color_embedding.has_value())
        throw TdgemError("TextCondition: color prompt and embedding must come together");
    if (color_embedding) {
        if (!color_embedding->all_finite())
            throw TdgemError("TextCondition: color embedding non-finite");
        s = kernels::dot(color_embedding->data(), color_embedding->data(),
                         color_embedding->size());
        if (s <= 0.0) throw TdgemError("TextCondition: color embedding is zero");
    }
}

std::string to_string(RangeTag t) {
    return t == RangeTag::SignedUnit ? "signed_unit" : "unit";
}

void ImageBuffer::validate() const {
    if (pixels.rank() != 3 || pixels.shape()[2] != 3)
        throw TdgemError("ImageBuffer: expected a (H, W, 3) tensor");
    const double lo = range_tag == RangeTag::SignedUnit ? -1.0 : 0.0;
    constexpr double tol = 1e-5;
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        const double v = pixels[i];
        if (!std::isfinite(v) || v < lo - tol || v > 1.0 + tol)
            throw TdgemError("ImageBuffer: pixel outside declared range " +
                             to_string(range_tag));
    }
}

ImageBuffer make_image(std::size_t height, std::size_t width, RangeTag tag) {
    return ImageBuffer{Tensor({height, width, 3}), tag};
}

ImageBuffer to_unit_range(const ImageBuffer& img) {
    if (img.range_tag == RangeTag::Unit) return img;
    ImageBuffer out = img;
    out.range_tag = RangeTag::Unit;
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
        double u = 0.5 * (img.pixels[i] + 1.0);
        out.pixels[i] = std::clamp(u, 0.0, 1.0);
    }
    return out;
}

double RegionMask::coverage() const {
    return kernels::sum(mask.data(), mask.size());
}

void RegionMask::validate() const {
    if (mask.rank() != 2) throw TdgemError("RegionMask: expected a (H, W) tensor");
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (!(mask[i] >= 0.0 && mask[i] <= 1.0))
            throw TdgemError("RegionMask: values must lie in [0,1]");
}

namespace {

void check_mask_shapes(const RegionMask& a, const RegionMask& b, const char* op) {
    if (!a.mask.same_shape(b.mask))
        throw TdgemError(std::string(op) + ": mask shape mismatch");
}

}  // namespace

RegionMask mask_complement(const RegionMask& a) {
    RegionMask out{Tensor(a.mask.shape())};
    for (std::size_t i = 0; i < a.mask.size(); ++i) out.mask[i] = 1.0 - a.mask[i];
    return out;
}

RegionMask mask_union(const RegionMask& a, const RegionMask& b) {
    check_mask_shapes(a, b, "mask_union");
    RegionMask out{Tensor(a.mask.shape())};
    for (std::size_t i = 0; i < a.mask.size(); ++i)
        out.mask[i] = std::max(a.mask[i], b.mask[i]);
    return out;
}

RegionMask mask_intersection(const RegionMask& a, const RegionMask& b) {
    check_mask_shapes(a, b, "mask_intersection");
    RegionMask out{Tensor(a.mask.shape())};
    for (std::size_t i = 0; i < a.mask.size(); ++i)
        out.mask[i] = std::min(a.mask[i], b.mask[i]);
    return out;
}

RegionMask mask_background(const RegionMask& a, const RegionMask& b) {
    check_mask_shapes(a, b, "mask_background");
    RegionMask out{Tensor(a.mask.shape())};
    for (std::size_t i = 0; i < a.mask.size(); ++i)
        out.mask[i] = std::min(1.0 - a.mask[i], 1.0 - b.mask[i]);
    return out;
}

void LossWeights::validate() const {
    const double vals[] = {clip, l2, id, color, bg};
    for (double v : vals)
        if (!std::isfinite(v) || v < 0.0)
            throw TdgemError("LossWeights: coefficients must be finite and >= 0");
}

void EditConfig::validate() const {
    make_partition(partition.layers, partition.coarse_end, partition.medium_end);
    weights.validate();
    if (!(learning_rate > 0.0)) throw TdgemError("EditConfig: learning_rate must be > 0");
    if (max_steps <= 0) throw TdgemError("EditConfig: max_steps must be > 0");
}

// ---------------------------------------------------------------------------
// config file

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& s, const std::string& key) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw TdgemError("config: bad numeric value for " + key + ": '" + s + "'");
    }
}

bool parse_bool(const std::string& s, const std::string& key) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw TdgemError("config: bad boolean for " + key + ": '" + s + "'");
}

}  // namespace

std::string format_edit_config(const EditConfig& cfg) {
    std::ostringstream os;
    os << "[partition]\n";
    os << "layers = " << cfg.partition.layers << "\n";
    os << "coarse_end = " << cfg.partition.coarse_end << "\n";
    os << "medium_end = " << cfg.partition.medium_end << "\n";
    os << "\n[weights]\n";
    os << "clip = " << fmt_double(cfg.weights.clip) << "\n";
    os << "l2 = " << fmt_double(cfg.weights.l2) << "\n";
    os << "id = " << fmt_double(cfg.weights.id) << "\n";
    os << "color = " << fmt_double(cfg.weights.color) << "\n";
    os << "bg = " << fmt_double(cfg.weights.bg) << "\n";
    os << "\n[run]\n";
    os << "inject_fine = " << (cfg.inject_fine ? "true" : "false") << "\n";
    os << "use_id_loss = " << (cfg.use_id_loss ? "true" : "false") << "\n";
    os << "learning_rate = " << fmt_double(cfg.learning_rate) << "\n";
    os << "max_steps = " << cfg.max_steps << "\n";
    os << "seed = " << cfg.seed << "\n";
    return os.str();
}

EditConfig parse_edit_config(const std::string& text) {
    EditConfig cfg;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw TdgemError("config: malformed section header at line " +
                                 std::to_string(lineno));
            section = t.substr(1, t.size() - 2);
            if (section != "partition" && section != "weights" && section != "run")
                throw TdgemError("config: unknown section [" + section + "]");
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw TdgemError("config: expected key = value at line " +
                             std::to_string(lineno));
        const std::string key = trim(t.substr(0, eq));
        const std::string val = trim(t.substr(eq + 1));
        const std::string qual = section + "." + key;
        if (qual == "partition.layers")
            cfg.partition.layers = (std::size_t)parse_double(val, qual);
        else if (qual == "partition.coarse_end")
            cfg.partition.coarse_end = (std::size_t)parse_double(val, qual);
        else if (qual == "partition.medium_end")
            cfg.partition.medium_end = (std::size_t)parse_double(val, qual);
        else if (qual == "weights.clip")
            cfg.weights.clip = parse_double(val, qual);
        else if (qual == "weights.l2")
            cfg.weights.l2 = parse_double(val, qual);
        else if (qual == "weights.id")
            cfg.weights.id = parse_double(val, qual);
        else if (qual == "weights.color")
            cfg.weights.color = parse_double(val, qual);
        else if (qual == "weights.bg")
            cfg.weights.bg = parse_double(val, qual);
        else if (qual == "run.inject_fine")
            cfg.inject_fine = parse_bool(val, qual);
        else if (qual == "run.use_id_loss")
            cfg.use_id_loss = parse_bool(val, qual);
        else if (qual == "run.learning_rate")
            cfg.learning_rate = parse_double(val, qual);
        else if (qual == "run.max_steps")
            cfg.max_steps = (int)parse_double(val, qual);
        else if (qual == "run.seed")
            cfg.seed = (std::uint64_t)std::stoull(val);
        else
            throw TdgemError("config: unknown key '" + qual + "'");
    }
    cfg.validate();
    return cfg;
}

EditConfig load_edit_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw TdgemError("config: cannot open " + path.string());
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse_edit_config(buf.str());
}

void save_edit_config(const EditConfig& cfg, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw TdgemError("config: cannot write " + path.string());
    f << format_edit_config(cfg);
}

}  // namespace tdgem
