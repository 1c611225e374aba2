#include "pfl/stp/stp.hpp"

#include <algorithm>
#include <string>

#include "pfl/errors.hpp"

namespace pfl::stp {

namespace num = pfl::num;

namespace {

std::string dims_str(const StpDims& d) {
    return "(m=" + std::to_string(d.m) + ", n=" + std::to_string(d.n) + ", k=" + std::to_string(d.k) +
           ", p=" + std::to_string(d.p) + ", l=" + std::to_string(d.l) + ")";
}

std::size_t needed_rows(const StpConfig& cfg) { return cfg.flags.tpl ? cfg.dims.max_rows() : cfg.dims.m; }

Var rows(Var a, std::size_t begin, std::size_t end) {
    if (begin == 0 && end == a.rows()) {
        return a;
    }
    return num::slice_rows(a, begin, end);
}

Var tail(Var a, std::size_t n) { return rows(a, a.rows() - n, a.rows()); }

fm::FMOutputs run(const fm::FrozenFM& fm, const PromptVars& pv, Var input) {
    return fm::fm_forward(input.tape(), fm.weights(), input, rows(pv.pos, 0, input.rows()));
}

// Sum of parts after cropping each to the trailing rows of the shortest.
Var trailing_sum(const std::vector<Var>& parts) {
    std::size_t shortest = parts.front().rows();
    for (Var v : parts) {
        shortest = std::min(shortest, v.rows());
    }
    Var acc = tail(parts.front(), shortest);
    for (std::size_t i = 1; i < parts.size(); ++i) {
        acc = num::add(acc, tail(parts[i], shortest));
    }
    return acc;
}

Var one_hot_row(Tape& tape, std::size_t n, std::size_t col) {
    Tensor t = Tensor::matrix(1, n);
    t(0, col) = 1.0;
    return tape.constant(std::move(t));
}

Var column_mask(Tape& tape, std::size_t rows_, std::size_t n, const std::vector<std::size_t>& cols) {
    Tensor t = Tensor::matrix(rows_, n);
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t c : cols) {
            t(r, c) = 1.0;
        }
    }
    return tape.constant(std::move(t));
}

// Route used when temporal prompts are disabled: history followed by zeros.
Var plain_forecast(const fm::FrozenFM& fm, const StpConfig& cfg, const PromptVars& pv, const Window& w) {
    const StpDims& d = cfg.dims;
    Tape& tape = w.x.tape();
    Var input = num::concat_rows({rows(w.x, 0, d.k), tape.constant(Tensor::matrix(d.q(), d.n))});
    return rows(run(fm, pv, input).forecast, d.k, d.m);
}

struct Heads {
    Var r_t;
    std::optional<PhaseResult> phase4;
    std::optional<SplResult> spl;
    Var out;
};

Heads forward_heads(const fm::FrozenFM& fm, const StpConfig& cfg, const PromptVars& pv, const Window& w) {
    Tape& tape = w.x.tape();
    const StpDims& d = cfg.dims;
    Heads h;
    if (cfg.flags.tpl) {
        h.phase4 = tpl_phase4(fm, cfg, pv, w);
        h.r_t = h.phase4->forecast;
    } else {
        h.r_t = plain_forecast(fm, cfg, pv, w);
    }
    Var r_s;
    if (cfg.flags.spl) {
        h.spl = spl_iterate(fm, cfg, pv, w);
        r_s = h.spl->r_s;
    } else {
        r_s = tape.constant(Tensor::matrix(d.q(), 1));
    }
    if (cfg.flags.gate) {
        h.out = gate_fuse(h.r_t, r_s, *pv.gate_w);
    } else {
        h.out = num::add(h.r_t, r_s);
    }
    return h;
}

}  // namespace

void StpDims::validate() const {
    if (n == 0) {
        throw ConfigError("stp dims " + dims_str(*this) + ": need at least one variable");
    }
    if (!(0 < p && p < k && k < m)) {
        throw ConfigError("stp dims " + dims_str(*this) + ": require 0 < p < k_hist < m");
    }
    if (l == 0 || m != k + 5 * l) {
        throw ConfigError("stp dims " + dims_str(*this) + ": require l > 0 and m = k_hist + 5l");
    }
}

std::size_t StpDims::max_rows() const noexcept {
    return std::max({phase1_rows(), phase2_rows(), phase3_rows(), m});
}

void StpConfig::validate(const fm::FMConfig& fm) const {
    dims.validate();
    if (fm.n_vars != dims.n) {
        throw ConfigError("stp: model has " + std::to_string(fm.n_vars) + " variables, dims say " +
                          std::to_string(dims.n));
    }
    if (target_var >= dims.n) {
        throw ConfigError("stp: target_var " + std::to_string(target_var) + " out of range");
    }
    fm.validate(needed_rows(*this));
}

ParamSet make_prompts(const StpConfig& cfg, const fm::FrozenFM& fm) {
    cfg.validate(fm.config());
    const StpDims& d = cfg.dims;
    ParamSet set;
    if (cfg.flags.tpl) {
        set.add("tpl.p_hat", Tensor::matrix(d.p_hat_rows(), d.n));
        set.add("tpl.p_t2", Tensor::matrix(d.p_t2_rows(), d.n));
        set.add("tpl.p_t3", Tensor::matrix(d.p_t3_rows(), d.n));
        set.add("tpl.p_tw", Tensor::matrix(d.q(), d.n));
    }
    if (cfg.flags.spl) {
        set.add("spl.p_s", Tensor::matrix(d.q(), 1));
        if (d.n > 1) {
            set.add("spl.cols", Tensor::matrix(d.q(), d.n - 1));
        }
    }
    if (cfg.flags.gate) {
        set.add("gate.w", Tensor::matrix(d.q(), 1, 1.0));
    }
    if (cfg.flags.pe) {
        set.add("pe.pos", fm::position_rows(fm.weights(), needed_rows(cfg)));
    }
    return set;
}

PromptVars bind_prompts(Tape& tape, const StpConfig& cfg, const fm::FrozenFM& fm, const ParamSet& prompts) {
    PromptVars pv;
    auto bind = [&](const char* name) -> std::optional<Var> {
        const Parameter* p = prompts.find(name);
        if (p == nullptr) {
            return std::nullopt;
        }
        return tape.param(*p);
    };
    pv.p_hat = bind("tpl.p_hat");
    pv.p_t2 = bind("tpl.p_t2");
    pv.p_t3 = bind("tpl.p_t3");
    pv.p_tw = bind("tpl.p_tw");
    pv.p_s = bind("spl.p_s");
    pv.cols = bind("spl.cols");
    pv.gate_w = bind("gate.w");
    if (cfg.flags.tpl && !(pv.p_hat && pv.p_t2 && pv.p_t3 && pv.p_tw)) {
        throw ContractError("stp: temporal prompts missing from the prompt set");
    }
    if (cfg.flags.spl && !(pv.p_s && (pv.cols || cfg.dims.n == 1))) {
        throw ContractError("stp: spatial prompts missing from the prompt set");
    }
    if (cfg.flags.gate && !pv.gate_w) {
        throw ContractError("stp: gate weights missing from the prompt set");
    }
    if (cfg.flags.pe) {
        auto pos = bind("pe.pos");
        if (!pos) {
            throw ContractError("stp: position prompt missing from the prompt set");
        }
        pv.pos = *pos;
    } else {
        pv.pos = tape.constant_ref(fm.weights().position.value);
    }
    return pv;
}

Window bind_window(Tape& tape, const Tensor& window, std::size_t target_var) {
    Window w;
    w.x = tape.constant_ref(window);
    w.target = num::slice_cols(w.x, target_var, target_var + 1);
    return w;
}

PhaseResult tpl_phase1(const fm::FrozenFM& fm, const StpConfig& cfg, const PromptVars& pv, const Window& w) {
    const StpDims& d = cfg.dims;
    Var seq = rows(w.x, 0, d.p);
    Var p_t1 = num::concat_rows({rows(w.x, d.p, d.k), *pv.p_hat});
    PhaseResult r;
    r.input = num::concat_rows({seq, p_t1});
    fm::FMOutputs out = run(fm, pv, r.input);
    r.recon = out.recon;
    r.forecast = out.forecast;
    // Known continuation p..k, then the first l steps carried by P_hat.
    r.loss = num::add(num::mse(rows(out.forecast, d.p, d.k), rows(w.target, d.p, d.k)),
                      num::mse(rows(out.forecast, d.k, d.k + d.l), rows(w.target, d.k, d.k + d.l)));
    return r;
}

PhaseResult tpl_phase2(const fm::FrozenFM& fm, const StpConfig& cfg, const PromptVars& pv, const Window& w,
                       const PhaseResult& r1) {
    const StpDims& d = cfg.dims;
    const std::size_t half = d.p / 2;
    Var seq = rows(w.x, 0, d.p);
    PhaseResult r;
    r.input = num::concat_rows({seq, rows(r1.recon, half, d.p), rows(r1.recon, d.p, d.p + d.l), *pv.p_t2});
    fm::FMOutputs out = run(fm, pv, r.input);
    r.recon = out.recon;
    r.forecast = out.forecast;
    // P_T2 stands for steps k..k+3l; its last 2l rows are new targets. The
    // re-fed slices cover steps half..p+l and are corrected against them.
    const std::size_t o2 = d.p + (d.p - half) + d.l;
    Var fresh = num::mse(rows(out.forecast, o2 + d.l, o2 + 3 * d.l), rows(w.target, d.k + d.l, d.k + 3 * d.l));
    Var correct = num::mse(rows(out.forecast, d.p, o2), rows(w.target, half, d.p + d.l));
    r.loss = num::add(fresh, correct);
    return r;
}

PhaseResult tpl_phase3(const fm::FrozenFM& fm, const StpConfig& cfg, const PromptVars& pv, const Window& w,
                       const PhaseResult& r2) {
    const StpDims& d = cfg.dims;
    Var seq = rows(w.x, 0, d.p);
    Var blended = num::mul(rows(*pv.p_hat, 0, d.l), rows(r2.recon, d.p, d.p + d.l));
    PhaseResult r;
    r.input = num::concat_rows({seq, blended, *pv.p_t2, *pv.p_t3});
    fm::FMOutputs out = run(fm, pv, r.input);
    r.recon = out.recon;
    r.forecast = out.forecast;
    // P_T2 covers k..k+3l, P_T3 covers k+l..k+5l; the last 2l rows of P_T3
    // reach the window end.
    const std::size_t o2 = d.p + d.l;
    const std::size_t o3 = o2 + 3 * d.l;
    Var fresh =
        num::mse(rows(out.forecast, o3 + 2 * d.l, o3 + 4 * d.l), rows(w.target, d.k + 3 * d.l, d.k + 5 * d.l));
    Var correct = num::mse(rows(out.forecast, o2, o3), rows(w.target, d.k, d.k + 3 * d.l));
    r.loss = num::add(fresh, correct);
    return r;
}

PhaseResult tpl_phase4(const fm::FrozenFM& fm, const StpConfig& cfg, const PromptVars& pv, const Window& w) {
    const StpDims& d = cfg.dims;
    const std::size_t q = d.q();
    Var p_t1 = num::concat_rows({rows(w.x, d.p, d.k), *pv.p_hat});
    Var s1 = trailing_sum({p_t1, *pv.p_t2, *pv.p_t3});
    Var s2 = trailing_sum({*pv.p_t2, *pv.p_t3});
    Var stacked = num::concat_rows({s1, s2, *pv.p_t3});
    const std::size_t start = std::min(d.k, stacked.rows() - q);
    Var weighted = num::mul(num::tanh(rows(stacked, start, start + q)), *pv.p_tw);
    Var fused = num::scale(num::sum(weighted, 0), 1.0 / static_cast<double>(q));

    PhaseResult r;
    r.input = num::concat_rows({rows(w.x, 0, d.k), num::broadcast_rows(fused, q)});
    fm::FMOutputs out = run(fm, pv, r.input);
    r.recon = out.recon;
    r.forecast = rows(out.forecast, d.k, d.m);
    r.loss = num::mse(r.forecast, rows(w.target, d.k, d.m));
    return r;
}

SplResult spl_iterate(const fm::FrozenFM& fm, const StpConfig& cfg, const PromptVars& pv, const Window& w) {
    const StpDims& d = cfg.dims;
    Tape& tape = w.x.tape();
    const std::size_t q = d.q();
    const std::size_t tv = cfg.target_var;
    std::vector<std::size_t> order{tv};
    for (std::size_t c = 0; c < d.n; ++c) {
        if (c != tv) {
            order.push_back(c);
        }
    }
    Var seq = rows(w.x, 0, d.k);
    Var truth = rows(w.target, d.k, d.m);

    SplResult res;
    Var prev;
    Var total;
    for (std::size_t i = 0; i < d.n; ++i) {
        Var column = i == 0 ? *pv.p_s : num::slice_cols(*pv.cols, i - 1, i);
        Var placed = num::matmul(column, one_hot_row(tape, d.n, order[i]));
        Var prompt = placed;
        if (i > 0) {
            std::vector<std::size_t> learned(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(i));
            prompt = num::add(num::mul(prev, column_mask(tape, q, d.n, learned)), placed);
        }
        fm::FMOutputs out = run(fm, pv, num::concat_rows({seq, prompt}));
        prev = num::mul(prompt, rows(out.recon, d.k, d.m));
        Var loss = num::mse(num::slice_cols(prev, tv, tv + 1), truth);
        total = i == 0 ? loss : num::add(total, loss);
        ++res.iterations;
    }
    res.r_s = num::slice_cols(prev, tv, tv + 1);
    res.loss = num::scale(total, 1.0 / static_cast<double>(d.n));
    return res;
}

Var gate_fuse(Var r_t, Var r_s, Var w) {
    if (!r_t.value().same_shape(r_s.value()) || !r_t.value().same_shape(w.value())) {
        throw DimensionError("gate_fuse: shapes " + r_t.value().shape_str() + ", " + r_s.value().shape_str() +
                             ", " + w.value().shape_str() + " must agree");
    }
    Tape& tape = r_t.tape();
    Var keep = num::sub(tape.constant(Tensor(r_s.value().shape(), 1.0)), num::sigmoid(r_s));
    return num::mul(num::mul(keep, num::tanh(r_t)), w);
}

Var prox_term(Tape& tape, const ParamSet& prompts, const ParamSet& global, double lambda) {
    std::optional<Var> acc;
    for (const Parameter& p : prompts.items()) {
        if (!p.trainable) {
            continue;
        }
        const Parameter* g = global.find(p.name);
        if (g == nullptr) {
            continue;
        }
        Var term = num::sum_squares(num::sub(tape.param(p), tape.constant_ref(g->value)));
        acc = acc ? num::add(*acc, term) : term;
    }
    if (!acc) {
        return tape.constant(Tensor::scalar(0.0));
    }
    return num::scale(*acc, lambda);
}

StpOutputs stp_forward(Tape& tape, const fm::FrozenFM& fm, const StpConfig& cfg, const ParamSet& prompts,
                       const Tensor& window, const ParamSet* global, double lambda, std::size_t epoch) {
    if (lambda < 0.0) {
        throw ConfigError("stp: lambda must be non-negative");
    }
    const StpDims& d = cfg.dims;
    if (window.rank() != 2 || window.rows() != d.m || window.cols() != d.n) {
        throw DimensionError("stp: window " + window.shape_str() + " does not match dims " + dims_str(d));
    }
    PromptVars pv = bind_prompts(tape, cfg, fm, prompts);
    Window w = bind_window(tape, window, cfg.target_var);
    StpOutputs out;

    Var data;
    bool has_data = false;
    auto add_term = [&](Var v) {
        data = has_data ? num::add(data, v) : v;
        has_data = true;
    };
    // Joint training uses every phase; the sequential schedule trains phase
    // min(epoch, 3) alone and only builds the passes it depends on.
    const bool joint = cfg.schedule == TplSchedule::joint;
    const std::size_t active = joint ? 3 : std::min<std::size_t>(epoch, 3);
    if (cfg.flags.tpl && (joint || active < 3)) {
        PhaseResult r = tpl_phase1(fm, cfg, pv, w);
        out.phase_loss[0] = r.loss;
        if (joint || active >= 1) {
            r = tpl_phase2(fm, cfg, pv, w, r);
            out.phase_loss[1] = r.loss;
        }
        if (joint || active >= 2) {
            r = tpl_phase3(fm, cfg, pv, w, r);
            out.phase_loss[2] = r.loss;
        }
        if (!joint) {
            for (std::size_t i = 0; i < active; ++i) {
                out.phase_loss[i].reset();
            }
        }
    }
    Heads h = forward_heads(fm, cfg, pv, w);
    if (h.phase4 && active == 3) {
        out.phase_loss[3] = h.phase4->loss;
    }
    for (const auto& pl : out.phase_loss) {
        if (pl) {
            add_term(*pl);
        }
    }
    if (h.spl) {
        out.spl_loss = h.spl->loss;
        add_term(h.spl->loss);
    }
    out.forecast = h.out;
    out.forecast_loss = num::mse(h.out, rows(w.target, d.k, d.m));
    add_term(out.forecast_loss);
    if (global != nullptr && lambda > 0.0) {
        add_term(prox_term(tape, prompts, *global, lambda));
    }
    out.loss = data;
    return out;
}

Tensor stp_predict(const fm::FrozenFM& fm, const StpConfig& cfg, const ParamSet& prompts, const Tensor& window) {
    Tape tape;
    PromptVars pv = bind_prompts(tape, cfg, fm, prompts);
    Window w = bind_window(tape, window, cfg.target_var);
    return forward_heads(fm, cfg, pv, w).out.value();
}

Tensor frozen_predict(const fm::FrozenFM& fm, const StpConfig& cfg, const Tensor& window) {
    Tape tape;
    PromptVars pv;
    pv.pos = tape.constant_ref(fm.weights().position.value);
    Window w = bind_window(tape, window, cfg.target_var);
    return plain_forecast(fm, cfg, pv, w).value();
}

}  // namespace pfl::stp
