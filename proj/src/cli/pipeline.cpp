#include "pfl/cli/pipeline.hpp"

#include <chrono>
#include <ctime>

#include "pfl/errors.hpp"
#include "pfl/log.hpp"

namespace pfl::cli {

std::vector<data::DeviceSeries> load_series(const RunConfig& cfg) {
    if (cfg.data_dir.empty()) {
        return data::synthesize(cfg.synth);
    }
    return data::load_csv(cfg.data_dir, cfg.fed.learner.stp.dims.n, cfg.gaps);
}

std::vector<data::DeviceData> load_devices(const RunConfig& cfg) {
    return data::prepare(load_series(cfg), cfg.fed.learner.stp.dims.m, cfg.norm);
}

fm::FMWeights pretrain_fm(const RunConfig& cfg, const std::vector<data::DeviceData>& devices,
                          fm::PretrainResult* result) {
    std::vector<num::Tensor> train, val;
    for (const data::DeviceData& d : devices) {
        train.insert(train.end(), d.pretrain_train.begin(), d.pretrain_train.end());
        val.insert(val.end(), d.pretrain_val.begin(), d.pretrain_val.end());
    }
    fm::FMWeights w = fm::init_fm(cfg.fm);
    log::info("pretraining on " + std::to_string(train.size()) + " windows");
    fm::PretrainResult r = fm::pretrain(w, train, val, cfg.pretrain);
    log::info("pretraining done, validation loss " + std::to_string(r.final_val_loss));
    if (result != nullptr) {
        *result = std::move(r);
    }
    return w;
}

fm::FMWeights obtain_fm(const RunConfig& cfg, const std::vector<data::DeviceData>& devices, bool* inline_pretrained) {
    if (inline_pretrained != nullptr) {
        *inline_pretrained = cfg.fm_ckpt.empty();
    }
    if (cfg.fm_ckpt.empty()) {
        return pretrain_fm(cfg, devices);
    }
    fm::FMWeights w = fm::load_ckpt(cfg.fm_ckpt);
    fm::FMConfig a = w.config, b = cfg.fm;
    a.seed = b.seed = 0;
    if (!(a == b)) {
        throw ConfigError("checkpoint " + cfg.fm_ckpt + " has dimensions d_model=" + std::to_string(w.config.d_model) +
                          " heads=" + std::to_string(w.config.n_heads) + " layers=" +
                          std::to_string(w.config.n_layers) + " d_ff=" + std::to_string(w.config.d_ff) +
                          " max_seq_len=" + std::to_string(w.config.max_seq_len) +
                          " n_vars=" + std::to_string(w.config.n_vars) + "; set the fm_* keys to match");
    }
    return w;
}

std::filesystem::path make_run_dir(const std::filesystem::path& parent, std::uint64_t seed) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
    const std::string base = std::string(stamp) + "-s" + std::to_string(seed);
    std::filesystem::create_directories(parent);
    for (std::size_t attempt = 0;; ++attempt) {
        const auto dir = parent / (attempt == 0 ? base : base + "-" + std::to_string(attempt));
        // create_directory is false when the path already exists
        if (std::filesystem::create_directory(dir)) {
            return dir;
        }
    }
}

num::GradCheckResult prompt_gradcheck(const RunConfig& cfg, const fm::FrozenFM& fm, const num::Tensor& window,
                                      double step) {
    const stp::StpConfig& sc = cfg.fed.learner.stp;
    num::ParamSet prompts = stp::make_prompts(sc, fm);
    num::ParamSet anchor = prompts;
    Rng rng(cfg.seed, "gradcheck/point");
    for (num::ParamSet* s : {&prompts, &anchor}) {
        for (num::Parameter& p : s->items()) {
            for (double& v : p.value.values()) {
                v += 0.1 * rng.normal();
            }
        }
    }
    auto params = prompts.pointers();
    return num::finite_diff_check(
        [&](num::Tape& tape) {
            return stp::stp_forward(tape, fm, sc, prompts, window, &anchor, cfg.fed.lambda).loss;
        },
        params, step);
}

report::RunReport run(const RunConfig& cfg, const fm::FrozenFM& fm, const std::vector<data::DeviceData>& devices) {
    report::RunReport rep = fed::run_federated(cfg.fed, fm, devices);
    rep.config = echo(cfg);
    return rep;
}

}  // namespace pfl::cli
