#include "pfl/fedsim/learner.hpp"

#include <string>

#include "pfl/errors.hpp"

namespace pfl::fed {

namespace num = pfl::num;
using num::Parameter;
using num::Tape;
using num::Var;

namespace {

void add_gradients(const Tape& tape, ParamSet& params, double weight) {
    for (Parameter& p : params.items()) {
        const Tensor* g = tape.gradient(p);
        if (g == nullptr) {
            continue;
        }
        if (!p.grad.same_shape(p.value)) {
            p.zero_grad();
        }
        for (std::size_t i = 0; i < g->size(); ++i) {
            p.grad[i] += weight * (*g)[i];
        }
    }
}

class StpLearner final : public Learner {
public:
    StpLearner(const fm::FrozenFM& fm, const stp::StpConfig& cfg) : fm_(fm), cfg_(cfg) { cfg_.validate(fm.config()); }

    ParamSet initial_params() const override { return stp::make_prompts(cfg_, fm_); }

    double accumulate(ParamSet& params, const Tensor& window, const ParamSet* anchor, double lambda,
                      std::size_t epoch, double weight) const override {
        Tape tape;
        stp::StpOutputs out = stp::stp_forward(tape, fm_, cfg_, params, window, anchor, lambda, epoch);
        tape.backward(out.loss);
        add_gradients(tape, params, weight);
        return out.loss.value().item();
    }

    Tensor predict(const ParamSet& params, const Tensor& window) const override {
        return stp::stp_predict(fm_, cfg_, params, window);
    }

    std::size_t extra_params() const override { return initial_params().total_scalars(); }
    std::vector<std::string> similarity_exclude() const override { return {"pe."}; }

private:
    const fm::FrozenFM& fm_;
    stp::StpConfig cfg_;
};

// A prompt matrix with its own position rows placed in front of the
// history and a zero horizon.
class PromptFlLearner final : public Learner {
public:
    PromptFlLearner(const fm::FrozenFM& fm, const stp::StpConfig& cfg, std::size_t len)
        : fm_(fm), cfg_(cfg), len_(len == 0 ? cfg.dims.q() : len) {
        cfg_.dims.validate();
        const std::size_t need = len_ + cfg_.dims.m;
        if (fm.config().max_seq_len < need) {
            throw ConfigError("promptfl: model max_seq_len " + std::to_string(fm.config().max_seq_len) +
                              " is shorter than prompt plus window (" + std::to_string(need) + ")");
        }
        if (fm.config().n_vars != cfg_.dims.n) {
            throw ConfigError("promptfl: variable count does not match the model");
        }
    }

    ParamSet initial_params() const override {
        ParamSet s;
        s.add("prompt.p", Tensor::matrix(len_, cfg_.dims.n));
        s.add("prompt.pos", Tensor::matrix(len_, fm_.config().d_model));
        return s;
    }

    double accumulate(ParamSet& params, const Tensor& window, const ParamSet* anchor, double lambda, std::size_t,
                      double weight) const override {
        Tape tape;
        Var forecast = forward(tape, params, window);
        Var target = num::slice_rows(num::slice_cols(tape.constant_ref(window), cfg_.target_var, cfg_.target_var + 1),
                                     cfg_.dims.k, cfg_.dims.m);
        Var loss = num::mse(forecast, target);
        if (anchor != nullptr && lambda > 0.0) {
            loss = num::add(loss, stp::prox_term(tape, params, *anchor, lambda));
        }
        tape.backward(loss);
        add_gradients(tape, params, weight);
        return loss.value().item();
    }

    Tensor predict(const ParamSet& params, const Tensor& window) const override {
        Tape tape;
        return forward(tape, params, window).value();
    }

    std::size_t extra_params() const override { return initial_params().total_scalars(); }

private:
    Var forward(Tape& tape, const ParamSet& params, const Tensor& window) const {
        const stp::StpDims& d = cfg_.dims;
        Var x = tape.constant_ref(window);
        Var input = num::concat_rows({tape.param(params.at("prompt.p")), num::slice_rows(x, 0, d.k),
                                      tape.constant(Tensor::matrix(d.q(), d.n))});
        Var table = tape.constant_ref(fm_.weights().position.value);
        Var pos = num::concat_rows({tape.param(params.at("prompt.pos")), num::slice_rows(table, 0, d.m)});
        fm::FMOutputs out = fm::fm_forward(tape, fm_.weights(), input, pos);
        return num::slice_rows(out.forecast, len_ + d.k, len_ + d.m);
    }

    const fm::FrozenFM& fm_;
    stp::StpConfig cfg_;
    std::size_t len_;
};

// Trains copies of selected model tensors; the rest stay frozen.
class WeightLearner final : public Learner {
public:
    WeightLearner(const fm::FrozenFM& fm, const stp::StpConfig& cfg, bool all)
        : fm_(fm), cfg_(cfg), all_(all) {
        cfg_.validate(fm.config());
        const auto& w = fm.weights();
        const std::string top = "layer" + std::to_string(w.config.n_layers - 1) + ".";
        for (const Parameter* p : w.parameters()) {
            if (all_ || p->name.rfind(top, 0) == 0 || p->name.rfind("forecast.", 0) == 0) {
                names_.push_back(p->name);
            }
        }
    }

    ParamSet initial_params() const override {
        ParamSet s;
        for (const Parameter* p : fm_.weights().parameters()) {
            if (selected(p->name)) {
                s.add(p->name, p->value);
            }
        }
        return s;
    }

    double accumulate(ParamSet& params, const Tensor& window, const ParamSet* anchor, double lambda, std::size_t,
                      double weight) const override {
        fm::FMWeights w = assemble(params);
        Tape tape;
        Var forecast = forward(tape, w, window);
        Var target = num::slice_rows(num::slice_cols(tape.constant_ref(window), cfg_.target_var, cfg_.target_var + 1),
                                     cfg_.dims.k, cfg_.dims.m);
        Var loss = num::mse(forecast, target);
        std::vector<Parameter*> live;
        for (Parameter* p : w.parameters()) {
            if (p->trainable) {
                live.push_back(p);
            }
        }
        if (anchor != nullptr && lambda > 0.0) {
            std::optional<Var> acc;
            for (Parameter* p : live) {
                Var term = num::sum_squares(num::sub(tape.param(*p), tape.constant_ref(anchor->at(p->name).value)));
                acc = acc ? num::add(*acc, term) : term;
            }
            loss = num::add(loss, num::scale(*acc, lambda));
        }
        tape.backward(loss);
        for (Parameter* p : live) {
            const Tensor* g = tape.gradient(*p);
            if (g == nullptr) {
                continue;
            }
            Parameter& dst = params.at(p->name);
            if (!dst.grad.same_shape(dst.value)) {
                dst.zero_grad();
            }
            for (std::size_t i = 0; i < g->size(); ++i) {
                dst.grad[i] += weight * (*g)[i];
            }
        }
        return loss.value().item();
    }

    Tensor predict(const ParamSet& params, const Tensor& window) const override {
        fm::FMWeights w = assemble(params);
        Tape tape;
        return forward(tape, w, window).value();
    }

    std::size_t extra_params() const override { return 0; }

private:
    bool selected(const std::string& name) const {
        for (const std::string& n : names_) {
            if (n == name) {
                return true;
            }
        }
        return false;
    }

    fm::FMWeights assemble(const ParamSet& params) const {
        fm::FMWeights w = fm_.weights();
        for (Parameter* p : w.parameters()) {
            if (const Parameter* src = params.find(p->name)) {
                p->value = src->value;
                p->trainable = true;
            }
        }
        return w;
    }

    Var forward(Tape& tape, const fm::FMWeights& w, const Tensor& window) const {
        const stp::StpDims& d = cfg_.dims;
        Var x = tape.constant_ref(window);
        Var input = num::concat_rows({num::slice_rows(x, 0, d.k), tape.constant(Tensor::matrix(d.q(), d.n))});
        Var pos = num::slice_rows(tape.param(w.position), 0, d.m);
        fm::FMOutputs out = fm::fm_forward(tape, w, input, pos);
        return num::slice_rows(out.forecast, d.k, d.m);
    }

    const fm::FrozenFM& fm_;
    stp::StpConfig cfg_;
    bool all_;
    std::vector<std::string> names_;
};

// The frozen model as is; nothing to train.
class FrozenLearner final : public Learner {
public:
    FrozenLearner(const fm::FrozenFM& fm, const stp::StpConfig& cfg) : fm_(fm), cfg_(cfg) {
        cfg_.validate(fm.config());
    }
    ParamSet initial_params() const override { return {}; }
    double accumulate(ParamSet&, const Tensor& window, const ParamSet*, double, std::size_t, double) const override {
        Tensor pred = stp::frozen_predict(fm_, cfg_, window);
        double acc = 0.0;
        for (std::size_t r = 0; r < pred.rows(); ++r) {
            const double e = pred(r, 0) - window(cfg_.dims.k + r, cfg_.target_var);
            acc += e * e;
        }
        return acc / static_cast<double>(pred.rows());
    }
    Tensor predict(const ParamSet&, const Tensor& window) const override {
        return stp::frozen_predict(fm_, cfg_, window);
    }
    std::size_t extra_params() const override { return 0; }

private:
    const fm::FrozenFM& fm_;
    stp::StpConfig cfg_;
};

}  // namespace

std::unique_ptr<Learner> make_learner(Mode mode, const fm::FrozenFM& fm, const LearnerConfig& cfg) {
    switch (mode) {
        case Mode::stp:
            return std::make_unique<StpLearner>(fm, cfg.stp);
        case Mode::promptfl:
            return std::make_unique<PromptFlLearner>(fm, cfg.stp, cfg.prompt_len);
        case Mode::finetune:
            return std::make_unique<WeightLearner>(fm, cfg.stp, false);
        case Mode::regular:
            return std::make_unique<WeightLearner>(fm, cfg.stp, true);
        case Mode::frozen:
            return std::make_unique<FrozenLearner>(fm, cfg.stp);
    }
    throw ConfigError("unknown learner mode");
}

}  // namespace pfl::fed
