#pragma once

#include <array>
#include <cstddef>
#include <optional>

#include "pfl/fm/checkpoint.hpp"
#include "pfl/numerics/param_set.hpp"

namespace pfl::stp {

using num::ParamSet;
using num::Parameter;
using num::Tape;
using num::Tensor;
using num::Var;

// Window geometry. m = k + 5l and Q = m - k.
struct StpDims {
    std::size_t m = 27;
    std::size_t n = 12;
    std::size_t k = 12;
    std::size_t p = 6;
    std::size_t l = 3;

    std::size_t q() const noexcept { return m - k; }
    // Throws ConfigError naming the violated relation.
    void validate() const;

    std::size_t p_hat_rows() const noexcept { return k - p + l; }
    std::size_t p_t1_rows() const noexcept { return 2 * (k - p) + l; }
    std::size_t p_t2_rows() const noexcept { return 3 * l; }
    std::size_t p_t3_rows() const noexcept { return 4 * l; }
    std::size_t phase1_rows() const noexcept { return p + p_t1_rows(); }
    std::size_t phase2_rows() const noexcept { return p + (p - p / 2) + l + p_t2_rows(); }
    std::size_t phase3_rows() const noexcept { return p + l + p_t2_rows() + p_t3_rows(); }
    // Longest sequence any phase feeds to the model.
    std::size_t max_rows() const noexcept;

    friend bool operator==(const StpDims&, const StpDims&) = default;
};

struct Ablation {
    bool tpl = true;
    bool spl = true;
    bool gate = true;
    bool pe = true;  // position table trainable as part of the prompts

    friend bool operator==(const Ablation&, const Ablation&) = default;
};

enum class TplSchedule { joint, sequential };

struct StpConfig {
    StpDims dims;
    std::size_t target_var = 0;
    Ablation flags;
    TplSchedule schedule = TplSchedule::joint;

    // Checks dims, target index and that the model is wide and long enough.
    void validate(const fm::FMConfig& fm) const;
};

// Zeros for every prompt, ones for the gate, and the model's own position
// rows for the trainable position copy.
ParamSet make_prompts(const StpConfig& cfg, const fm::FrozenFM& fm);

// Tape handles for the prompt tensors that exist under the ablation flags.
struct PromptVars {
    std::optional<Var> p_hat, p_t2, p_t3, p_tw;
    std::optional<Var> p_s, cols;
    std::optional<Var> gate_w;
    Var pos;  // position rows available to every phase
};
PromptVars bind_prompts(Tape& tape, const StpConfig& cfg, const fm::FrozenFM& fm, const ParamSet& prompts);

struct PhaseResult {
    Var input;     // sequence fed to the model
    Var recon;     // reconstruction head over the input
    Var forecast;  // forecast head over the input
    Var loss;
};

struct Window {
    Var x;       // m x n
    Var target;  // m x 1, target variable column
};
Window bind_window(Tape& tape, const Tensor& window, std::size_t target_var);

PhaseResult tpl_phase1(const fm::FrozenFM& fm, const StpConfig& cfg, const PromptVars& pv, const Window& w);
PhaseResult tpl_phase2(const fm::FrozenFM& fm, const StpConfig& cfg, const PromptVars& pv, const Window& w,
                       const PhaseResult& r1);
PhaseResult tpl_phase3(const fm::FrozenFM& fm, const StpConfig& cfg, const PromptVars& pv, const Window& w,
                       const PhaseResult& r2);
// forecast holds R_T (Q x 1); the other fields describe the final pass.
PhaseResult tpl_phase4(const fm::FrozenFM& fm, const StpConfig& cfg, const PromptVars& pv, const Window& w);

struct SplResult {
    Var r_s;   // Q x 1
    Var loss;  // mean of per-iteration losses
    std::size_t iterations = 0;
};
SplResult spl_iterate(const fm::FrozenFM& fm, const StpConfig& cfg, const PromptVars& pv, const Window& w);

// (1 - sigmoid(r_s)) * tanh(r_t) * w, elementwise over Q x 1.
Var gate_fuse(Var r_t, Var r_s, Var w);

struct StpOutputs {
    Var forecast;  // Q x 1
    Var loss;      // data terms + prox
    std::array<std::optional<Var>, 4> phase_loss;
    std::optional<Var> spl_loss;
    Var forecast_loss;
};

// Full forward pass and local objective for one window. `global` enables
// the prox term lambda * ||P - P^g||^2; `epoch` selects the active phase
// under the sequential schedule.
StpOutputs stp_forward(Tape& tape, const fm::FrozenFM& fm, const StpConfig& cfg, const ParamSet& prompts,
                       const Tensor& window, const ParamSet* global, double lambda, std::size_t epoch = 0);

// Forecast of the target over the horizon, no loss terms.
Tensor stp_predict(const fm::FrozenFM& fm, const StpConfig& cfg, const ParamSet& prompts, const Tensor& window);

// Forecast of the frozen model alone on [history, zeros].
Tensor frozen_predict(const fm::FrozenFM& fm, const StpConfig& cfg, const Tensor& window);

// lambda * sum over shared entries of ||P - G||^2 (trainable entries only).
Var prox_term(Tape& tape, const ParamSet& prompts, const ParamSet& global, double lambda);

}  // namespace pfl::stp
