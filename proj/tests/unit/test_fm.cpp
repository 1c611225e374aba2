#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "pfl/errors.hpp"
#include "pfl/fm/checkpoint.hpp"
#include "pfl/fm/pretrain.hpp"
#include "pfl/fm/transformer.hpp"
#include "pfl/log.hpp"
#include "pfl/numerics/gradcheck.hpp"
#include "pfl/rng.hpp"

using namespace pfl;
using namespace pfl::fm;

namespace {

FMConfig small_config() {
    FMConfig c;
    c.n_vars = 12;
    c.d_model = 32;
    c.n_heads = 4;
    c.n_layers = 2;
    c.d_ff = 64;
    c.max_seq_len = 32;
    c.seed = 7;
    return c;
}

Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c) {
    Tensor t = Tensor::matrix(r, c);
    for (double& v : t.values()) {
        v = rng.normal();
    }
    return t;
}

std::vector<Tensor> random_windows(std::size_t count, std::size_t len, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < count; ++i) {
        out.push_back(random_matrix(rng, len, n));
    }
    return out;
}

std::filesystem::path temp_file(const char* name) {
    return std::filesystem::temp_directory_path() / (std::string("pfl_test_") + name);
}

}  // namespace

TEST_CASE("init is deterministic and validates heads") {
    FMConfig c = small_config();
    CHECK(c.head_dim() == 8);
    FMWeights a = init_fm(c);
    FMWeights b = init_fm(c);
    CHECK(weights_checksum(a) == weights_checksum(b));
    c.seed = 8;
    CHECK(weights_checksum(init_fm(c)) != weights_checksum(a));

    FMConfig bad = small_config();
    bad.n_heads = 5;
    CHECK_THROWS_AS(init_fm(bad), ConfigError);
    bad = small_config();
    bad.max_seq_len = 20;
    CHECK_THROWS_AS(bad.validate(27), ConfigError);
}

TEST_CASE("forward shapes and length limit") {
    FMWeights fm = init_fm(small_config());
    Rng rng(1);
    Tensor x = random_matrix(rng, 27, 12);
    FMTensors out = fm_forward(fm, x, position_rows(fm, 27));
    CHECK(out.hidden.shape() == num::Shape{27, 32});
    CHECK(out.recon.shape() == num::Shape{27, 12});
    CHECK(out.forecast.shape() == num::Shape{27, 1});

    Tensor too_long = random_matrix(rng, 33, 12);
    CHECK_THROWS_AS(fm_forward(fm, too_long, Tensor::matrix(33, 32)), DimensionError);
}

TEST_CASE("zeroed weights give the forecast bias") {
    FMWeights fm = init_fm(small_config());
    for (Parameter* p : fm.parameters()) {
        p->value.fill(0.0);
    }
    fm.forecast_b.value[0] = 0.37;
    FMTensors out = fm_forward(fm, Tensor::matrix(27, 12), Tensor::matrix(27, 32));
    for (double v : out.forecast.values()) {
        CHECK(v == doctest::Approx(0.37).epsilon(1e-15));
    }
}

TEST_CASE("forecast gradient wrt position matches finite differences") {
    FMConfig c = small_config();
    c.d_model = 16;
    c.d_ff = 32;
    FMWeights fm = init_fm(c);
    fm.set_trainable(false);
    Rng rng(3);
    Tensor x = random_matrix(rng, 10, 12);
    Tensor w = random_matrix(rng, 10, 1);
    Parameter pos("pos", random_matrix(rng, 10, 16));
    std::vector<Parameter*> params{&pos};
    auto result = num::finite_diff_check(
        [&](Tape& tape) {
            FMOutputs out = fm_forward(tape, fm, tape.constant_ref(x), tape.param(pos));
            return num::sum(num::mul(out.forecast, tape.constant_ref(w)));
        },
        params);
    CHECK(result.coordinates == 160);
    CHECK(result.max_rel_error < 1e-5);
}

TEST_CASE("forward depends on time order") {
    FMWeights fm = init_fm(small_config());
    Rng rng(4);
    Tensor x = random_matrix(rng, 27, 12);
    Tensor swapped = x;
    for (std::size_t c = 0; c < 12; ++c) {
        std::swap(swapped(0, c), swapped(26, c));
    }
    FMTensors a = fm_forward(fm, x, position_rows(fm, 27));
    FMTensors b = fm_forward(fm, swapped, position_rows(fm, 27));
    // With rows swapped, output row 0 would equal the original row 26 if
    // positions were ignored.
    double diff = 0.0;
    for (std::size_t c = 0; c < 12; ++c) {
        diff += std::abs(a.recon(26, c) - b.recon(0, c));
    }
    CHECK(diff > 1e-6);
}

TEST_CASE("checkpoint round trip and corruption") {
    FMWeights fm = init_fm(small_config());
    const auto path = temp_file("roundtrip.ckpt");
    save_ckpt(fm, path);
    FMWeights back = load_ckpt(path);
    CHECK(back.config == fm.config);
    CHECK(weights_checksum(back) == weights_checksum(fm));

    {
        std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(200);
        char byte = 0;
        f.seekg(200);
        f.read(&byte, 1);
        byte = static_cast<char>(byte ^ 0x10);
        f.seekp(200);
        f.write(&byte, 1);
    }
    CHECK_THROWS_AS(load_ckpt(path), CorruptionError);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_ckpt(path), IoError);
}

TEST_CASE("freeze seals the weights") {
    FrozenFM frozen = freeze(init_fm(small_config()));
    CHECK(frozen.intact());
    for (const Parameter* p : frozen.weights().parameters()) {
        CHECK_FALSE(p->trainable);
    }
    FMWeights copy = frozen.weights();
    copy.forecast_b.value[0] += 1.0;
    CHECK(weights_checksum(copy) != frozen.seal());
    CHECK(frozen.intact());
}

TEST_CASE("pretrain with zero mask fraction has zero loss and warns") {
    FMWeights fm = init_fm(small_config());
    auto windows = random_windows(4, 27, 12, 5);
    PretrainConfig cfg;
    cfg.mask_fraction = 0.0;
    cfg.epochs = 1;
    int warnings = 0;
    auto old = log::set_sink([&](log::Level level, const std::string&) { warnings += level == log::Level::warn; });
    const auto before = weights_checksum(fm);
    PretrainResult r = pretrain(fm, windows, windows, cfg);
    log::set_sink(old);
    CHECK(warnings == 1);
    CHECK(r.epoch_train_loss.at(0) == 0.0);
    CHECK(r.final_val_loss == 0.0);
    CHECK(weights_checksum(fm) == before);
}

TEST_CASE("pretrain errors") {
    FMWeights fm = init_fm(small_config());
    CHECK_THROWS_AS(pretrain(fm, {}, {}, PretrainConfig{}), DataError);
}

TEST_CASE("one pretraining epoch lowers the loss on its batch") {
    FMWeights fm = init_fm(small_config());
    auto windows = random_windows(10, 27, 12, 6);
    PretrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch = 10;
    cfg.lr = 1e-3;
    cfg.seed = 11;
    // The single batch holds every window, so the masks of epoch 0 are the
    // ones the step was taken on.
    const auto masks = draw_masks(windows, cfg, derive_seed(cfg.seed, "pretrain/epoch/0/mask"));
    const double before = masked_loss(fm, windows, masks, cfg);
    pretrain(fm, windows, {}, cfg);
    const double after = masked_loss(fm, windows, masks, cfg);
    CHECK(after <= before);
}

TEST_CASE("pretraining is deterministic") {
    auto windows = random_windows(6, 27, 12, 9);
    PretrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch = 4;
    cfg.seed = 3;
    FMWeights a = init_fm(small_config());
    FMWeights b = init_fm(small_config());
    auto ra = pretrain(a, windows, windows, cfg);
    auto rb = pretrain(b, windows, windows, cfg);
    CHECK(weights_checksum(a) == weights_checksum(b));
    CHECK(ra.final_val_loss == rb.final_val_loss);
}
