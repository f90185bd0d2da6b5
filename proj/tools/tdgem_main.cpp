// tdgem: text-driven garment editing toolkit.
//
// Subcommands: invert, optimize, train-mapper, edit, evaluate, replay. Every
// run writes its outputs plus a manifest.json into --out; replaying a
// manifest reproduces the outputs byte for byte on the toy stack. All
// commands run fully offline with the built-in toy backends.

#include <CLI11.hpp>

#include <omp.h>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "tdgem/backends.hpp"
#include "tdgem/core.hpp"
#include "tdgem/inversion.hpp"
#include "tdgem/io.hpp"
#include "tdgem/json_conv.hpp"
#include "tdgem/latent_opt.hpp"
#include "tdgem/manifest.hpp"
#include "tdgem/mapper.hpp"
#include "tdgem/metrics.hpp"
#include "tdgem/serialize.hpp"
#include "tdgem/training.hpp"

namespace fs = std::filesystem;
using namespace tdgem;
using Args = std::map<std::string, std::string>;

namespace {

std::string arg_or(const Args& a, const std::string& key, const std::string& fallback) {
    const auto it = a.find(key);
    return it == a.end() ? fallback : it->second;
}

double arg_num(const Args& a, const std::string& key, double fallback) {
    const auto it = a.find(key);
    return it == a.end() ? fallback : std::stod(it->second);
}

long arg_int(const Args& a, const std::string& key, long fallback) {
    const auto it = a.find(key);
    return it == a.end() ? fallback : std::stol(it->second);
}

bool arg_flag(const Args& a, const std::string& key) {
    return arg_or(a, key, "false") == "true";
}

fs::path resolve_checkpoint(const std::string& spec) {
    // "checkpoint:<path>"; relative paths fall back to TDGEM_CACHE_DIR
    const std::string path = spec.substr(std::string("checkpoint:").size());
    if (fs::exists(path)) return path;
    if (const char* cache = std::getenv("TDGEM_CACHE_DIR")) {
        const fs::path in_cache = fs::path(cache) / path;
        if (fs::exists(in_cache)) return in_cache;
    }
    throw TdgemError("checkpoint not found: " + path +
                     " (also looked under TDGEM_CACHE_DIR); pass --generator toy "
                     "to run with the bundled offline toy stack instead");
}

struct ResolvedBackends {
    Backends backends;
    ToyStackConfig toy;
};

ResolvedBackends make_backends(const Args& a) {
    ResolvedBackends r;
    r.toy.seed = (std::uint64_t)arg_int(a, "seed", 7);
    r.toy.layers = (std::size_t)arg_int(a, "toy-layers", 6);
    r.toy.dim = (std::size_t)arg_int(a, "toy-dim", 8);
    r.toy.height = (std::size_t)arg_int(a, "toy-size", 16);
    r.toy.width = r.toy.height;
    r.toy.embed_dim = (std::size_t)arg_int(a, "toy-embed", 8);
    r.toy.feature_dim = (std::size_t)arg_int(a, "toy-features", 8);
    r.backends = make_toy_backends(r.toy);

    const std::string gen = arg_or(a, "generator", "toy");
    if (gen.rfind("checkpoint:", 0) == 0) {
        r.backends.generator = ToyGenerator::load_checkpoint(resolve_checkpoint(gen));
    } else if (gen != "toy") {
        throw TdgemError("--generator must be 'toy' or 'checkpoint:<path>'; real "
                         "pretrained adapters are not bundled");
    }

    const std::string parser = arg_or(a, "parser", "toy");
    if (parser.rfind("luminance:", 0) == 0) {
        r.backends.parser = ToyParser::luminance(std::stod(parser.substr(10)));
    } else if (parser.rfind("rect:", 0) == 0) {
        double v[4];
        if (std::sscanf(parser.c_str(), "rect:%lf,%lf,%lf,%lf", &v[0], &v[1], &v[2],
                        &v[3]) != 4)
            throw TdgemError("--parser rect expects rect:r0,r1,c0,c1");
        r.backends.parser = ToyParser::rectangle(v[0], v[1], v[2], v[3]);
    } else if (parser != "toy") {
        throw TdgemError("--parser must be toy, rect:<r0,r1,c0,c1> or luminance:<t>");
    }
    return r;
}

std::vector<std::string> backend_ids(const Backends& b) {
    return {b.generator->identifier(), b.encoder->identifier(), b.parser->identifier(),
            b.identity->identifier(), b.perceptual->identifier()};
}

EditConfig config_from_args(const Args& a, std::size_t generator_layers) {
    EditConfig cfg;
    if (a.count("config")) cfg = load_edit_config(a.at("config"));
    else cfg.partition = default_partition(generator_layers);
    // explicit flags win over the config file
    if (a.count("lr")) cfg.learning_rate = std::stod(a.at("lr"));
    if (a.count("steps")) cfg.max_steps = (int)arg_int(a, "steps", cfg.max_steps);
    if (a.count("seed")) cfg.seed = (std::uint64_t)arg_int(a, "seed", 7);
    if (a.count("clip-weight")) cfg.weights.clip = std::stod(a.at("clip-weight"));
    if (a.count("l2-weight")) cfg.weights.l2 = std::stod(a.at("l2-weight"));
    if (a.count("id-weight")) cfg.weights.id = std::stod(a.at("id-weight"));
    if (a.count("color-weight")) cfg.weights.color = std::stod(a.at("color-weight"));
    if (a.count("bg-weight")) cfg.weights.bg = std::stod(a.at("bg-weight"));
    if (a.count("no-id-loss")) cfg.use_id_loss = !arg_flag(a, "no-id-loss");
    if (a.count("no-fine-injection")) cfg.inject_fine = !arg_flag(a, "no-fine-injection");
    return cfg;
}

ImageBuffer load_signed_image(const fs::path& path) {
    const ImageBuffer unit = io::read_png(path);
    ImageBuffer out = unit;
    out.range_tag = RangeTag::SignedUnit;
    for (std::size_t i = 0; i < out.pixels.size(); ++i)
        out.pixels[i] = 2.0 * out.pixels[i] - 1.0;
    return out;
}

void require_input(const fs::path& path, const char* what) {
    if (!fs::exists(path))
        throw TdgemError(std::string(what) + " not found: " + path.string());
}

RunManifest start_manifest(const std::string& command, const Args& args,
                           const EditConfig& cfg, const Backends& b) {
    RunManifest m;
    m.command = command;
    m.args = args;
    m.config = cfg;
    m.seed = cfg.seed;
    m.backend_ids = backend_ids(b);
    m.started_at = current_timestamp();
    return m;
}

// ---------------------------------------------------------------------------
// subcommands

void cmd_invert(const Args& args) {
    const fs::path image_path = args.at("image");
    const fs::path out_dir = args.at("out");
    require_input(image_path, "input image");
    fs::create_directories(out_dir);

    ResolvedBackends rb = make_backends(args);
    EditConfig cfg = config_from_args(args, rb.backends.generator->layers());
    cfg.learning_rate = arg_num(args, "lr", 5e-4);
    cfg.max_steps = (int)arg_int(args, "steps", 3500);
    RunManifest manifest = start_manifest("invert", args, cfg, rb.backends);

    const ImageBuffer x = load_signed_image(image_path);
    if (x.height() != rb.backends.generator->height() ||
        x.width() != rb.backends.generator->width())
        throw TdgemError("image is " + std::to_string(x.width()) + "x" +
                         std::to_string(x.height()) + " but the generator expects " +
                         std::to_string(rb.backends.generator->width()) + "x" +
                         std::to_string(rb.backends.generator->height()));

    inversion::FallbackConfig enc_cfg;
    enc_cfg.steps = (int)arg_int(args, "encoder-steps", 200);
    const LatentCode pivot =
        inversion::encode_pivot_fallback(x, *rb.backends.generator, enc_cfg);

    inversion::PtiConfig pti_cfg;
    pti_cfg.max_steps = cfg.max_steps;
    pti_cfg.learning_rate = cfg.learning_rate;
    pti_cfg.tolerance = arg_num(args, "tol", 1e-4);
    const inversion::InversionResult result = inversion::pti_tune(
        x, pivot, rb.backends.generator, *rb.backends.perceptual, pti_cfg);

    io::write_latent(out_dir / "pivot.latent", result.pivot, cfg.seed);
    auto* toy_gen = dynamic_cast<ToyGenerator*>(rb.backends.generator.get());
    if (toy_gen) toy_gen->save_checkpoint(out_dir / "generator.ckpt");
    std::vector<io::ScalarLogRow> rows;
    for (std::size_t k = 0; k < result.history.size(); ++k)
        rows.push_back({(int)k + 1, "pti", result.history[k]});
    io::write_scalar_log(out_dir / "history.csv", rows);
    io::write_png(out_dir / "reconstruction.png",
                  rb.backends.generator->synthesize_image(result.pivot));

    manifest.args["pivot_source"] = "direct-optimization-fallback";
    manifest.finished_at = current_timestamp();
    write_manifest(manifest, out_dir);
    std::cout << "invert: " << result.steps_used << " tuning steps"
              << (result.converged ? " (converged)" : "") << ", outputs in "
              << out_dir.string() << "\n";
}

void cmd_optimize(const Args& args) {
    const fs::path latent_path = args.at("latent");
    const fs::path out_dir = args.at("out");
    require_input(latent_path, "latent file");
    fs::create_directories(out_dir);

    ResolvedBackends rb = make_backends(args);
    EditConfig cfg = config_from_args(args, rb.backends.generator->layers());
    RunManifest manifest = start_manifest("optimize", args, cfg, rb.backends);

    const io::LatentFile lf = io::read_latent(latent_path);

    LossWeights weights = latent_opt::latent_opt_default_weights();
    if (args.count("clip-weight")) weights.clip = std::stod(args.at("clip-weight"));
    if (args.count("l2-weight")) weights.l2 = std::stod(args.at("l2-weight"));
    if (args.count("id-weight")) weights.id = std::stod(args.at("id-weight"));

    latent_opt::OptimizeConfig ocfg;
    ocfg.max_steps = (int)arg_int(args, "steps", 200);
    ocfg.learning_rate = arg_num(args, "lr", 0.1);
    const latent_opt::OptimizeResult result =
        latent_opt::optimize_latent(lf.code, args.at("text"), weights, rb.backends, ocfg);

    io::write_latent(out_dir / "edited.latent", result.edited_code, cfg.seed);
    io::write_png(out_dir / "edited.png",
                  rb.backends.generator->synthesize_image(result.edited_code));
    std::vector<io::ScalarLogRow> rows;
    for (std::size_t k = 0; k < result.history.size(); ++k) {
        for (const auto& [term, value] : result.history[k].terms)
            rows.push_back({(int)k, term, value});
        rows.push_back({(int)k, "total", result.history[k].total});
    }
    io::write_scalar_log(out_dir / "history.csv", rows);

    manifest.finished_at = current_timestamp();
    write_manifest(manifest, out_dir);
    std::cout << "optimize: best step " << result.best_step << ", total "
              << result.history[result.best_step].total << ", outputs in "
              << out_dir.string() << "\n";
}

void cmd_train_mapper(const Args& args) {
    const fs::path dataset_dir = args.at("dataset");
    const fs::path out_dir = args.at("out");
    require_input(dataset_dir, "dataset directory");
    fs::create_directories(out_dir);

    ResolvedBackends rb = make_backends(args);
    EditConfig cfg = config_from_args(args, rb.backends.generator->layers());
    RunManifest manifest = start_manifest("train-mapper", args, cfg, rb.backends);

    std::vector<training::DatasetItem> items;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dataset_dir))
        if (entry.path().extension() == ".latent") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files)
        items.push_back({f.stem().string(), io::read_latent(f).code});
    if (items.empty())
        throw TdgemError("no .latent files found in " + dataset_dir.string());

    const double ratio = arg_num(args, "split-ratio", 0.9);
    training::LatentDataset ds = training::split_dataset(std::move(items), ratio, cfg.seed);

    const TextCondition cond = make_condition(
        *rb.backends.encoder, args.at("text"),
        args.count("color") ? std::optional<std::string>(args.at("color")) : std::nullopt);

    const training::LrSchedule schedule = arg_flag(args, "lr-decay")
                                              ? training::LrSchedule::Cosine
                                              : training::LrSchedule::Constant;
    const double kick = arg_num(args, "kick", 0.0);
    const std::string arch = arg_or(args, "arch", "tdgem");

    training::TrainResult result;
    if (arch == "tdgem") {
        mapper::TdGemMapper m(cfg.partition, rb.backends.generator->dim(),
                              rb.backends.encoder->embed_dim(), cfg.inject_fine,
                              cfg.seed);
        if (kick > 0.0) m.kick_output_affines(kick, cfg.seed ^ 0xabcd);
        m.validate_against(*rb.backends.generator);
        result = training::train_tdgem_mapper(
            m, ds, cond, cfg, rb.backends,
            [&](int step, bool is_best) {
                if (is_best) m.save_checkpoint(out_dir / "mapper_best.ckpt", cfg);
                if (step % training::kCheckpointEvery == 0)
                    m.save_checkpoint(
                        out_dir / ("mapper_step" + std::to_string(step) + ".ckpt"), cfg);
            },
            schedule);
        m.save_checkpoint(out_dir / "mapper.ckpt", cfg);
    } else if (arch == "styleclip") {
        mapper::StyleClipMapper m(cfg.partition, rb.backends.generator->dim(), cfg.seed);
        m.validate_against(*rb.backends.generator);
        result = training::train_styleclip_mapper(
            m, ds, cond, cfg, rb.backends,
            [&](int step, bool is_best) {
                if (is_best) m.save_checkpoint(out_dir / "mapper_best.ckpt", cfg);
                if (step % training::kCheckpointEvery == 0)
                    m.save_checkpoint(
                        out_dir / ("mapper_step" + std::to_string(step) + ".ckpt"), cfg);
            },
            schedule);
        m.save_checkpoint(out_dir / "mapper.ckpt", cfg);
    } else {
        throw TdgemError("--arch must be tdgem or styleclip");
    }

    std::vector<io::ScalarLogRow> rows;
    for (const auto& row : result.log) rows.push_back({row.step, row.term, row.value});
    io::write_scalar_log(out_dir / "log.csv", rows);

    manifest.finished_at = current_timestamp();
    write_manifest(manifest, out_dir);
    std::cout << "train-mapper: " << result.steps << " steps, best total "
              << result.best_total << " at step " << result.best_step
              << ", outputs in " << out_dir.string() << "\n";
}

void cmd_edit(const Args& args) {
    const fs::path out_dir = args.at("out");
    fs::create_directories(out_dir);

    ResolvedBackends rb = make_backends(args);
    EditConfig cfg = config_from_args(args, rb.backends.generator->layers());
    RunManifest manifest = start_manifest("edit", args, cfg, rb.backends);

    const fs::path mapper_path = args.at("mapper");
    require_input(mapper_path, "mapper checkpoint");

    if (arg_flag(args, "dry-run")) {
        cfg.validate();
        mapper::checkpoint_kind(mapper_path);  // must at least be readable
        manifest.finished_at = current_timestamp();
        write_manifest(manifest, out_dir);
        std::cout << "edit: dry run ok, manifest written to " << out_dir.string() << "\n";
        return;
    }

    LatentCode w;
    if (args.count("latent")) {
        require_input(args.at("latent"), "latent file");
        w = io::read_latent(args.at("latent")).code;
    } else if (args.count("image")) {
        require_input(args.at("image"), "input image");
        const ImageBuffer x = load_signed_image(args.at("image"));
        inversion::FallbackConfig enc_cfg;
        enc_cfg.steps = (int)arg_int(args, "encoder-steps", 200);
        w = inversion::encode_pivot_fallback(x, *rb.backends.generator, enc_cfg);
        inversion::PtiConfig pti_cfg;
        pti_cfg.max_steps = (int)arg_int(args, "steps", 350);
        pti_cfg.learning_rate = arg_num(args, "lr", 5e-4);
        inversion::pti_tune(x, w, rb.backends.generator, *rb.backends.perceptual,
                            pti_cfg);
    } else {
        throw TdgemError("edit: pass --latent or --image");
    }

    const std::string kind = mapper::checkpoint_kind(mapper_path);
    training::EditOutput out;
    if (kind == "tdgem") {
        auto loaded = mapper::TdGemMapper::load_checkpoint(mapper_path);
        loaded.mapper->validate_against(*rb.backends.generator);
        const TextCondition cond = make_condition(
            *rb.backends.encoder, args.at("text"),
            args.count("color") ? std::optional<std::string>(args.at("color"))
                                : std::nullopt);
        out = training::apply_edit(*loaded.mapper, w, cond, *rb.backends.generator);
    } else {
        auto loaded = mapper::StyleClipMapper::load_checkpoint(mapper_path);
        loaded.mapper->validate_against(*rb.backends.generator);
        out = training::apply_edit(*loaded.mapper, w, *rb.backends.generator);
    }

    ImageBuffer final_image = out.image;
    if (args.count("preserve-mask")) {
        require_input(args.at("preserve-mask"), "preserve mask");
        const ImageBuffer mask_img = io::read_png(args.at("preserve-mask"));
        RegionMask preserve{Tensor({mask_img.height(), mask_img.width()})};
        for (std::size_t p = 0; p < preserve.mask.size(); ++p)
            preserve.mask[p] = (mask_img.pixels[3 * p] + mask_img.pixels[3 * p + 1] +
                                mask_img.pixels[3 * p + 2]) /
                               3.0;
        const ImageBuffer orig = rb.backends.generator->synthesize_image(w);
        final_image = training::blend_preserved_regions(orig, out.image, preserve);
    }

    io::write_png(out_dir / "edited.png", final_image);
    io::write_latent(out_dir / "edited.latent", out.edited_code, cfg.seed);
    manifest.finished_at = current_timestamp();
    write_manifest(manifest, out_dir);
    std::cout << "edit: outputs in " << out_dir.string() << "\n";
}

void cmd_evaluate(const Args& args) {
    const fs::path orig_dir = args.at("orig");
    const fs::path edited_dir = args.at("edited");
    const fs::path out_path = args.at("out");
    require_input(orig_dir, "original image directory");
    require_input(edited_dir, "edited image directory");

    if (args.count("jobs")) omp_set_num_threads((int)arg_int(args, "jobs", 1));

    ResolvedBackends rb = make_backends(args);
    EditConfig cfg = config_from_args(args, rb.backends.generator->layers());
    RunManifest manifest = start_manifest("evaluate", args, cfg, rb.backends);

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(orig_dir))
        if (entry.path().extension() == ".png") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw TdgemError("no .png files in " + orig_dir.string());

    std::vector<std::pair<ImageBuffer, ImageBuffer>> pairs;
    std::vector<std::string> ids;
    for (const auto& f : files) {
        const fs::path partner = edited_dir / f.filename();
        require_input(partner, "edited counterpart");
        pairs.push_back({io::read_png(f), io::read_png(partner)});
        ids.push_back(f.stem().string());
    }

    const metrics::Region region =
        metrics::region_from_string(arg_or(args, "region", "background"));
    const metrics::MetricReport report = metrics::evaluate_folder(
        pairs, ids, *rb.backends.parser, region, *rb.backends.identity);

    nlohmann::json j;
    j["fid"] = report.fid;
    j["ssim"] = report.ssim;
    j["psnr"] = report.psnr;
    j["acd"] = report.acd;
    j["region"] = metrics::region_name(report.region);
    j["n_images"] = report.n_images;
    serialize::write_file_bytes(out_path, j.dump(2) + "\n");

    const fs::path manifest_dir = out_path.parent_path().empty()
                                      ? fs::path(".")
                                      : out_path.parent_path();
    manifest.finished_at = current_timestamp();
    write_manifest(manifest, manifest_dir);
    std::cout << "evaluate: " << report.n_images << " pairs, region "
              << metrics::region_name(report.region) << ", report at "
              << out_path.string() << "\n";
}

void dispatch(const std::string& command, const Args& args) {
    if (command == "invert") cmd_invert(args);
    else if (command == "optimize") cmd_optimize(args);
    else if (command == "train-mapper") cmd_train_mapper(args);
    else if (command == "edit") cmd_edit(args);
    else if (command == "evaluate") cmd_evaluate(args);
    else throw TdgemError("unknown command in manifest: " + command);
}

void cmd_replay(const Args& args) {
    const fs::path manifest_path = args.at("manifest");
    require_input(manifest_path, "manifest");
    const RunManifest m = read_manifest(manifest_path);
    Args replay_args = m.args;
    if (args.count("out")) replay_args["out"] = args.at("out");
    dispatch(m.command, replay_args);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tdgem: text-driven garment editing toolkit"};
    app.require_subcommand(1);

    Args args;
    auto track = [&args](const std::string& key) {
        return [&args, key](const std::string& value) { args[key] = value; };
    };
    auto track_flag = [&args](const std::string& key) {
        return [&args, key](std::int64_t) { args[key] = "true"; };
    };

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option_function<std::string>("--generator", track("generator"),
                                              "toy | checkpoint:<path>");
        cmd->add_option_function<std::string>(
            "--parser", track("parser"), "toy | rect:<r0,r1,c0,c1> | luminance:<t>");
        cmd->add_option_function<std::string>("--seed", track("seed"), "random seed");
        cmd->add_option_function<std::string>("--toy-layers", track("toy-layers"),
                                              "toy generator layer count");
        cmd->add_option_function<std::string>("--toy-dim", track("toy-dim"),
                                              "toy latent dimension");
        cmd->add_option_function<std::string>("--toy-size", track("toy-size"),
                                              "toy image side length");
        cmd->add_option_function<std::string>("--toy-embed", track("toy-embed"),
                                              "toy embedding dimension");
        cmd->add_option_function<std::string>("--toy-features", track("toy-features"),
                                              "toy identity feature dimension");
        cmd->add_option_function<std::string>("--config", track("config"),
                                              "edit config file");
    };

    CLI::App* invert = app.add_subcommand("invert", "invert an image to a latent code");
    invert->add_option_function<std::string>("--image", track("image"), "input PNG")
        ->required();
    invert->add_option_function<std::string>("--out", track("out"), "output directory")
        ->required();
    invert->add_option_function<std::string>("--steps", track("steps"),
                                             "max tuning steps (default 3500)");
    invert->add_option_function<std::string>("--tol", track("tol"),
                                             "convergence tolerance (default 1e-4)");
    invert->add_option_function<std::string>("--lr", track("lr"),
                                             "tuning learning rate (default 5e-4)");
    invert->add_option_function<std::string>("--encoder-steps", track("encoder-steps"),
                                             "fallback encoder steps (default 200)");
    add_common(invert);

    CLI::App* optimize = app.add_subcommand("optimize", "latent-optimizer editing");
    optimize->add_option_function<std::string>("--latent", track("latent"), "latent file")
        ->required();
    optimize->add_option_function<std::string>("--text", track("text"), "prompt")
        ->required();
    optimize->add_option_function<std::string>("--out", track("out"), "output directory")
        ->required();
    optimize->add_option_function<std::string>("--steps", track("steps"),
                                               "optimization steps (default 200)");
    optimize->add_option_function<std::string>("--lr", track("lr"),
                                               "learning rate (default 0.1)");
    optimize->add_option_function<std::string>("--clip-weight", track("clip-weight"), "");
    optimize->add_option_function<std::string>("--l2-weight", track("l2-weight"), "");
    optimize->add_option_function<std::string>("--id-weight", track("id-weight"), "");
    add_common(optimize);

    CLI::App* train = app.add_subcommand("train-mapper", "train an editing mapper");
    train->add_option_function<std::string>("--dataset", track("dataset"),
                                            "directory of .latent files")
        ->required();
    train->add_option_function<std::string>("--text", track("text"), "shape prompt")
        ->required();
    train->add_option_function<std::string>("--color", track("color"), "color prompt");
    train->add_option_function<std::string>("--out", track("out"), "output directory")
        ->required();
    train->add_option_function<std::string>("--arch", track("arch"),
                                            "tdgem | styleclip (default tdgem)");
    train->add_option_function<std::string>("--steps", track("steps"), "training steps");
    train->add_option_function<std::string>("--lr", track("lr"), "learning rate");
    train->add_option_function<std::string>("--split-ratio", track("split-ratio"),
                                            "train share (default 0.9)");
    train->add_option_function<std::string>("--clip-weight", track("clip-weight"), "");
    train->add_option_function<std::string>("--l2-weight", track("l2-weight"), "");
    train->add_option_function<std::string>("--id-weight", track("id-weight"), "");
    train->add_option_function<std::string>("--color-weight", track("color-weight"), "");
    train->add_option_function<std::string>("--bg-weight", track("bg-weight"), "");
    train->add_option_function<std::string>("--kick", track("kick"),
                                            "output-affine init noise scale");
    train->add_flag_function("--lr-decay", track_flag("lr-decay"),
                             "cosine learning-rate decay");
    train->add_flag_function("--no-id-loss", track_flag("no-id-loss"),
                             "drop the identity loss term");
    train->add_flag_function("--no-fine-injection", track_flag("no-fine-injection"),
                             "ablate text injection into the fine sub-mapper");
    add_common(train);

    CLI::App* edit = app.add_subcommand("edit", "apply a trained mapper");
    edit->add_option_function<std::string>("--image", track("image"), "input PNG");
    edit->add_option_function<std::string>("--latent", track("latent"), "latent file");
    edit->add_option_function<std::string>("--text", track("text"), "shape prompt");
    edit->add_option_function<std::string>("--color", track("color"), "color prompt");
    edit->add_option_function<std::string>("--mapper", track("mapper"),
                                           "mapper checkpoint")
        ->required();
    edit->add_option_function<std::string>("--out", track("out"), "output directory")
        ->required();
    edit->add_option_function<std::string>("--preserve-mask", track("preserve-mask"),
                                           "PNG mask of regions to keep from the "
                                           "original");
    edit->add_option_function<std::string>("--encoder-steps", track("encoder-steps"), "");
    edit->add_option_function<std::string>("--steps", track("steps"),
                                           "tuning steps when inverting an image");
    edit->add_option_function<std::string>("--lr", track("lr"), "");
    edit->add_flag_function("--dry-run", track_flag("dry-run"),
                            "validate configuration and write the manifest only");
    add_common(edit);

    CLI::App* evaluate = app.add_subcommand("evaluate", "region-restricted metrics");
    evaluate->add_option_function<std::string>("--orig", track("orig"),
                                               "directory of original PNGs")
        ->required();
    evaluate->add_option_function<std::string>("--edited", track("edited"),
                                               "directory of edited PNGs")
        ->required();
    evaluate
        ->add_option_function<std::string>("--region", track("region"),
                                           "background | foreground | full")
        ->required();
    evaluate->add_option_function<std::string>("--out", track("out"), "report JSON path")
        ->required();
    evaluate->add_option_function<std::string>("--jobs", track("jobs"),
                                               "worker thread budget");
    add_common(evaluate);

    CLI::App* replay = app.add_subcommand("replay", "re-run a recorded manifest");
    replay->add_option_function<std::string>("--manifest", track("manifest"),
                                             "manifest.json to replay")
        ->required();
    replay->add_option_function<std::string>("--out", track("out"),
                                             "override output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (invert->parsed()) cmd_invert(args);
        else if (optimize->parsed()) cmd_optimize(args);
        else if (train->parsed()) cmd_train_mapper(args);
        else if (edit->parsed()) cmd_edit(args);
        else if (evaluate->parsed()) cmd_evaluate(args);
        else if (replay->parsed()) cmd_replay(args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
