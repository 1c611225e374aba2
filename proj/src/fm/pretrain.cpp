#include "pfl/fm/pretrain.hpp"

#include <numeric>
#include <string>

#include "pfl/errors.hpp"
#include "pfl/log.hpp"
#include "pfl/numerics/adam.hpp"
#include "pfl/rng.hpp"

namespace pfl::fm {

namespace num = pfl::num;

namespace {

void check_windows(const FMWeights& fm, const std::vector<Tensor>& windows, const char* what) {
    for (const Tensor& w : windows) {
        if (w.rank() != 2 || w.cols() != fm.config.n_vars || w.rows() > fm.config.max_seq_len) {
            throw DimensionError(std::string("pretrain: ") + what + " window of shape " + w.shape_str() +
                                 " does not fit the model");
        }
    }
}

// Loss of one window; returns an empty Var when nothing is masked.
bool window_loss(Tape& tape, const FMWeights& fm, const Tensor& window, const std::vector<char>& mask,
                 const PretrainConfig& cfg, Var& loss) {
    const std::size_t len = window.rows();
    const std::size_t n = window.cols();
    const std::size_t hidden = static_cast<std::size_t>(std::accumulate(mask.begin(), mask.end(), 0));
    if (hidden == 0) {
        return false;
    }
    Tensor input = window;
    Tensor keep_all = Tensor::matrix(len, n);
    Tensor keep_target = Tensor::matrix(len, 1);
    Tensor target = Tensor::matrix(len, 1);
    for (std::size_t r = 0; r < len; ++r) {
        target(r, 0) = window(r, cfg.target_var);
        if (!mask[r]) {
            continue;
        }
        keep_target(r, 0) = 1.0;
        for (std::size_t c = 0; c < n; ++c) {
            input(r, c) = 0.0;
            keep_all(r, c) = 1.0;
        }
    }
    Var pos = num::slice_rows(tape.param(fm.position), 0, len);
    FMOutputs out = fm_forward(tape, fm, tape.constant(std::move(input)), pos);
    Var recon_err = num::mul(num::sub(out.recon, tape.constant_ref(window)), tape.constant(std::move(keep_all)));
    Var fc_err = num::mul(num::sub(out.forecast, tape.constant(std::move(target))),
                          tape.constant(std::move(keep_target)));
    loss = num::add(num::scale(num::sum_squares(recon_err), 1.0 / static_cast<double>(hidden * n)),
                    num::scale(num::sum_squares(fc_err), 1.0 / static_cast<double>(hidden)));
    return true;
}

}  // namespace

std::vector<std::vector<char>> draw_masks(const std::vector<Tensor>& windows, const PretrainConfig& cfg,
                                          std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<char>> masks;
    masks.reserve(windows.size());
    for (const Tensor& w : windows) {
        const std::size_t len = w.rows();
        std::vector<char> mask(len, 0);
        if (cfg.mask_fraction > 0.0) {
            const bool trailing = cfg.objective == PretrainObjective::onestep || rng.uniform() < cfg.horizon_mask_prob;
            if (trailing && cfg.horizon > 0 && cfg.horizon < len) {
                for (std::size_t r = len - cfg.horizon; r < len; ++r) {
                    mask[r] = 1;
                }
            } else {
                for (std::size_t r = 0; r < len; ++r) {
                    mask[r] = rng.uniform() < cfg.mask_fraction ? 1 : 0;
                }
            }
        }
        masks.push_back(std::move(mask));
    }
    return masks;
}

double masked_loss(const FMWeights& fm, const std::vector<Tensor>& windows,
                   const std::vector<std::vector<char>>& masks, const PretrainConfig& cfg) {
    if (windows.empty()) {
        throw DataError("masked_loss: no windows");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        Tape tape;
        Var loss;
        if (window_loss(tape, fm, windows[i], masks[i], cfg, loss)) {
            total += loss.value().item();
        }
    }
    return total / static_cast<double>(windows.size());
}

PretrainResult pretrain(FMWeights& fm, const std::vector<Tensor>& train, const std::vector<Tensor>& val,
                        const PretrainConfig& cfg) {
    if (train.empty()) {
        throw DataError("pretrain: empty training split");
    }
    if (cfg.batch == 0 || cfg.epochs == 0) {
        throw ConfigError("pretrain: batch and epochs must be positive");
    }
    if (cfg.mask_fraction < 0.0 || cfg.mask_fraction > 1.0) {
        throw ConfigError("pretrain: mask_fraction must lie in [0, 1]");
    }
    if (cfg.target_var >= fm.config.n_vars) {
        throw ConfigError("pretrain: target_var out of range");
    }
    check_windows(fm, train, "training");
    check_windows(fm, val, "validation");
    if (cfg.mask_fraction == 0.0) {
        log::warn("pretrain: mask fraction 0 leaves no positions to reconstruct; loss is defined as 0");
    }

    fm.set_trainable(true);
    auto params = fm.parameters();
    for (Parameter* p : params) {
        p->reset_optimizer();
    }
    num::AdamConfig adam;
    adam.lr = cfg.lr;
    long step = 0;

    PretrainResult result;
    std::vector<std::size_t> order(train.size());
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const std::string tag = "pretrain/epoch/" + std::to_string(epoch);
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffler(cfg.seed, tag + "/order");
        shuffler.shuffle(order);
        const auto masks = draw_masks(train, cfg, derive_seed(cfg.seed, tag + "/mask"));

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch);
            for (Parameter* p : params) {
                p->zero_grad();
            }
            bool any = false;
            for (std::size_t j = start; j < stop; ++j) {
                const std::size_t i = order[j];
                Tape tape;
                Var loss;
                if (!window_loss(tape, fm, train[i], masks[i], cfg, loss)) {
                    continue;
                }
                epoch_loss += loss.value().item();
                Var scaled = num::scale(loss, 1.0 / static_cast<double>(stop - start));
                tape.backward(scaled);
                num::accumulate_gradients(tape, params);
                any = true;
            }
            if (any) {
                num::adam_step(params, adam, ++step);
            }
        }
        result.epoch_train_loss.push_back(epoch_loss / static_cast<double>(train.size()));
    }
    for (Parameter* p : params) {
        p->zero_grad();
        p->reset_optimizer();
    }
    if (!val.empty()) {
        result.final_val_loss = masked_loss(fm, val, draw_masks(val, cfg, derive_seed(cfg.seed, "pretrain/val")), cfg);
    }
    return result;
}

}  // namespace pfl::fm
