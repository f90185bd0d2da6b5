#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "support.hpp"
#include "tdgem/core.hpp"

using namespace tdgem;

TEST_CASE("make_partition accepts the documented splits") {
    const LatentPartition p = make_partition(18, 4, 8);
    CHECK(p.coarse_size() == 4);
    CHECK(p.medium_size() == 4);
    CHECK(p.fine_size() == 10);

    const LatentPartition minimal = make_partition(3, 1, 2);
    CHECK(minimal.coarse_size() == 1);
    CHECK(minimal.medium_size() == 1);
    CHECK(minimal.fine_size() == 1);
}

TEST_CASE("make_partition rejects non-monotone or out-of-range indices") {
    CHECK_THROWS_AS(make_partition(18, 8, 4), TdgemError);
    CHECK_THROWS_AS(make_partition(18, 0, 8), TdgemError);
    CHECK_THROWS_AS(make_partition(18, 4, 18), TdgemError);
    CHECK_THROWS_AS(make_partition(18, 4, 4), TdgemError);
}

TEST_CASE("partition slices cover all layers disjointly") {
    Rng rng(41);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t layers = 3 + rng.index(30);
        const std::size_t coarse = 1 + rng.index(layers - 2);
        const std::size_t medium = coarse + 1 + rng.index(layers - coarse - 1);
        const LatentPartition p = make_partition(layers, coarse, medium);
        CHECK(p.coarse_size() + p.medium_size() + p.fine_size() == layers);
        CHECK(p.coarse_end <= p.medium_end);
        CHECK(p.medium_end <= p.layers);
    }
}

TEST_CASE("default partition follows the 18-layer convention when it fits") {
    const LatentPartition big = default_partition(18);
    CHECK(big.coarse_end == 4);
    CHECK(big.medium_end == 8);
    const LatentPartition small = default_partition(6);
    CHECK(small.coarse_end == 2);
    CHECK(small.medium_end == 4);
}

TEST_CASE("mask_background endpoint cases") {
    RegionMask ones{Tensor::full({4, 4}, 1.0)};
    RegionMask zeros{Tensor({4, 4})};

    const RegionMask empty_bg = mask_background(ones, ones);
    for (std::size_t i = 0; i < empty_bg.mask.size(); ++i) CHECK(empty_bg.mask[i] == 0.0);

    const RegionMask full_bg = mask_background(zeros, zeros);
    for (std::size_t i = 0; i < full_bg.mask.size(); ++i) CHECK(full_bg.mask[i] == 1.0);
}

TEST_CASE("mask_background equals the per-pixel complement-of-union oracle") {
    Rng rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        RegionMask a{Tensor({4, 4})}, b{Tensor({4, 4})};
        for (std::size_t i = 0; i < 16; ++i) {
            a.mask[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
            b.mask[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
        }
        const RegionMask bg = mask_background(a, b);
        const RegionMask un = mask_union(a, b);
        for (std::size_t i = 0; i < 16; ++i) {
            const double expect = (a.mask[i] == 0.0 && b.mask[i] == 0.0) ? 1.0 : 0.0;
            CHECK(bg.mask[i] == expect);
            // complement of the union, and bg + union == 1 for binary masks
            CHECK(bg.mask[i] == 1.0 - un.mask[i]);
        }
    }
}

TEST_CASE("soft mask algebra: idempotence and complement involution") {
    Rng rng(43);
    RegionMask a{Tensor({3, 5})}, b{Tensor({3, 5})};
    for (std::size_t i = 0; i < a.mask.size(); ++i) {
        a.mask[i] = rng.uniform();
        b.mask[i] = rng.uniform();
    }
    const RegionMask uu = mask_union(mask_union(a, b), mask_union(a, b));
    const RegionMask ii = mask_intersection(mask_intersection(a, b),
                                            mask_intersection(a, b));
    for (std::size_t i = 0; i < a.mask.size(); ++i) {
        CHECK(uu.mask[i] == mask_union(a, b).mask[i]);
        CHECK(ii.mask[i] == mask_intersection(a, b).mask[i]);
        CHECK(mask_complement(mask_complement(a)).mask[i] == doctest::Approx(a.mask[i]));
        CHECK(mask_complement(a).mask[i] == 1.0 - a.mask[i]);
    }
    RegionMask other{Tensor({4, 4})};
    CHECK_THROWS_AS(mask_background(a, other), TdgemError);
}

TEST_CASE("latent code invariants") {
    CHECK_THROWS_AS(make_latent(Tensor({2, 4})), TdgemError);  // L < 3
    Tensor bad({3, 2});
    bad[0] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(make_latent(bad), TdgemError);
    const LatentCode ok = make_latent(Tensor({3, 2}));
    CHECK(ok.layers() == 3);
    CHECK(ok.dim() == 2);
}

TEST_CASE("image range validation and conversion") {
    ImageBuffer img = make_image(2, 2, RangeTag::SignedUnit);
    img.pixels[0] = -0.5;
    img.validate();
    img.pixels[1] = 1.5;
    CHECK_THROWS_AS(img.validate(), TdgemError);

    img.pixels[1] = 1.0;
    const ImageBuffer unit = to_unit_range(img);
    CHECK(unit.range_tag == RangeTag::Unit);
    CHECK(unit.pixels[0] == doctest::Approx(0.25));
    CHECK(unit.pixels[1] == doctest::Approx(1.0));
}

TEST_CASE("edit config round-trips bit-exactly through the text format") {
    EditConfig cfg;
    cfg.partition = make_partition(18, 4, 8);
    cfg.weights = LossWeights{1.0, 1.0 / 3.0, 20.0, 5e-3, 0.3};
    cfg.inject_fine = false;
    cfg.use_id_loss = true;
    cfg.learning_rate = 5e-4;
    cfg.max_steps = 100000;
    cfg.seed = 123456789012345ull;

    const std::string text = format_edit_config(cfg);
    const EditConfig back = parse_edit_config(text);

    CHECK(std::memcmp(&back.weights.l2, &cfg.weights.l2, sizeof(double)) == 0);
    CHECK(std::memcmp(&back.weights.color, &cfg.weights.color, sizeof(double)) == 0);
    CHECK(std::memcmp(&back.learning_rate, &cfg.learning_rate, sizeof(double)) == 0);
    CHECK(back.partition.layers == cfg.partition.layers);
    CHECK(back.inject_fine == cfg.inject_fine);
    CHECK(back.use_id_loss == cfg.use_id_loss);
    CHECK(back.max_steps == cfg.max_steps);
    CHECK(back.seed == cfg.seed);
    // a second round trip reproduces the text byte for byte
    CHECK(format_edit_config(back) == text);
}

TEST_CASE("edit config rejects unknown keys and malformed input") {
    CHECK_THROWS_AS(parse_edit_config("[run]\nbogus_key = 1\n"), TdgemError);
    CHECK_THROWS_AS(parse_edit_config("[mystery]\n"), TdgemError);
    CHECK_THROWS_AS(parse_edit_config("[run]\nlearning_rate\n"), TdgemError);
    CHECK_THROWS_AS(parse_edit_config("[run]\nlearning_rate = abc\n"), TdgemError);
    CHECK_THROWS_AS(parse_edit_config("[partition]\nlayers = 18\ncoarse_end = 9\n"
                                      "medium_end = 4\n"),
                    TdgemError);
}

TEST_CASE("edit config file IO") {
    const auto dir = std::filesystem::temp_directory_path() / "tdgem_core_test";
    std::filesystem::create_directories(dir);
    EditConfig cfg;
    cfg.seed = 7;
    save_edit_config(cfg, dir / "cfg.ini");
    const EditConfig back = load_edit_config(dir / "cfg.ini");
    CHECK(back.seed == 7);
    CHECK_THROWS_AS(load_edit_config(dir / "missing.ini"), TdgemError);
    std::filesystem::remove_all(dir);
}
