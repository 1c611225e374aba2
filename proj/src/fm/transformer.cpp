#include "pfl/fm/transformer.hpp"

#include <cmath>
#include <string>

#include "pfl/errors.hpp"
#include "pfl/rng.hpp"

namespace pfl::fm {

namespace num = pfl::num;

void FMConfig::validate(std::size_t min_seq_len) const {
    if (n_vars == 0 || d_model == 0 || n_heads == 0 || n_layers == 0 || d_ff == 0 || max_seq_len == 0) {
        throw ConfigError("fm config: all dimensions must be positive");
    }
    if (d_model % n_heads != 0) {
        throw ConfigError("fm config: d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                          std::to_string(n_heads));
    }
    if (max_seq_len < min_seq_len) {
        throw ConfigError("fm config: max_seq_len " + std::to_string(max_seq_len) +
                          " is shorter than the required sequence length " + std::to_string(min_seq_len));
    }
}

namespace {

Parameter xavier(Rng& rng, std::string name, std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor w = Tensor::matrix(fan_in, fan_out);
    for (double& v : w.values()) {
        v = rng.uniform(-limit, limit);
    }
    return Parameter(std::move(name), std::move(w));
}

Parameter filled(std::string name, std::size_t rows, std::size_t cols, double value) {
    return Parameter(std::move(name), Tensor::matrix(rows, cols, value));
}

Var linear(Tape& tape, Var x, const Parameter& w, const Parameter& b) {
    return num::add_row(num::matmul(x, tape.param(w)), tape.param(b));
}

}  // namespace

std::vector<Parameter*> FMWeights::parameters() {
    std::vector<Parameter*> out{&input_w, &input_b, &position};
    for (EncoderLayer& l : layers) {
        for (Parameter* p : {&l.norm1_gain, &l.norm1_bias, &l.query_w, &l.query_b, &l.key_w, &l.key_b, &l.value_w,
                             &l.value_b, &l.out_w, &l.out_b, &l.norm2_gain, &l.norm2_bias, &l.ff1_w, &l.ff1_b,
                             &l.ff2_w, &l.ff2_b}) {
            out.push_back(p);
        }
    }
    for (Parameter* p : {&final_gain, &final_bias, &recon_w, &recon_b, &forecast_w, &forecast_b}) {
        out.push_back(p);
    }
    return out;
}

std::vector<const Parameter*> FMWeights::parameters() const {
    auto mutable_params = const_cast<FMWeights*>(this)->parameters();
    return {mutable_params.begin(), mutable_params.end()};
}

std::size_t FMWeights::parameter_count() const {
    std::size_t total = 0;
    for (const Parameter* p : parameters()) {
        total += p->size();
    }
    return total;
}

void FMWeights::set_trainable(bool trainable) {
    for (Parameter* p : parameters()) {
        p->trainable = trainable;
    }
}

FMWeights init_fm(const FMConfig& config) {
    config.validate();
    Rng rng(config.seed, "fm/init");
    const std::size_t d = config.d_model;
    FMWeights w;
    w.config = config;
    w.input_w = xavier(rng, "input.w", config.n_vars, d);
    w.input_b = filled("input.b", 1, d, 0.0);
    w.position = xavier(rng, "position", config.max_seq_len, d);
    for (std::size_t i = 0; i < config.n_layers; ++i) {
        const std::string prefix = "layer" + std::to_string(i) + ".";
        EncoderLayer l;
        l.norm1_gain = filled(prefix + "norm1.gain", 1, d, 1.0);
        l.norm1_bias = filled(prefix + "norm1.bias", 1, d, 0.0);
        l.query_w = xavier(rng, prefix + "query.w", d, d);
        l.query_b = filled(prefix + "query.b", 1, d, 0.0);
        l.key_w = xavier(rng, prefix + "key.w", d, d);
        l.key_b = filled(prefix + "key.b", 1, d, 0.0);
        l.value_w = xavier(rng, prefix + "value.w", d, d);
        l.value_b = filled(prefix + "value.b", 1, d, 0.0);
        l.out_w = xavier(rng, prefix + "out.w", d, d);
        l.out_b = filled(prefix + "out.b", 1, d, 0.0);
        l.norm2_gain = filled(prefix + "norm2.gain", 1, d, 1.0);
        l.norm2_bias = filled(prefix + "norm2.bias", 1, d, 0.0);
        l.ff1_w = xavier(rng, prefix + "ff1.w", d, config.d_ff);
        l.ff1_b = filled(prefix + "ff1.b", 1, config.d_ff, 0.0);
        l.ff2_w = xavier(rng, prefix + "ff2.w", config.d_ff, d);
        l.ff2_b = filled(prefix + "ff2.b", 1, d, 0.0);
        w.layers.push_back(std::move(l));
    }
    w.final_gain = filled("final.gain", 1, d, 1.0);
    w.final_bias = filled("final.bias", 1, d, 0.0);
    w.recon_w = xavier(rng, "recon.w", d, config.n_vars);
    w.recon_b = filled("recon.b", 1, config.n_vars, 0.0);
    w.forecast_w = xavier(rng, "forecast.w", d, 1);
    w.forecast_b = filled("forecast.b", 1, 1, 0.0);
    return w;
}

FMOutputs fm_forward(Tape& tape, const FMWeights& fm, Var x, Var pos) {
    const FMConfig& c = fm.config;
    const std::size_t len = x.rows();
    if (len > c.max_seq_len) {
        throw DimensionError("fm_forward: sequence length " + std::to_string(len) + " exceeds max_seq_len " +
                             std::to_string(c.max_seq_len));
    }
    if (x.cols() != c.n_vars) {
        throw DimensionError("fm_forward: input has " + std::to_string(x.cols()) + " variables, model expects " +
                             std::to_string(c.n_vars));
    }
    if (pos.rows() != len || pos.cols() != c.d_model) {
        throw DimensionError("fm_forward: position encoding " + pos.value().shape_str() + " does not match " +
                             std::to_string(len) + "x" + std::to_string(c.d_model));
    }
    const std::size_t dh = c.head_dim();
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    Var h = num::add(linear(tape, x, fm.input_w, fm.input_b), pos);
    for (const EncoderLayer& l : fm.layers) {
        Var a = num::layer_norm(h, tape.param(l.norm1_gain), tape.param(l.norm1_bias));
        Var q = linear(tape, a, l.query_w, l.query_b);
        Var k = linear(tape, a, l.key_w, l.key_b);
        Var v = linear(tape, a, l.value_w, l.value_b);
        std::vector<Var> heads;
        heads.reserve(c.n_heads);
        for (std::size_t head = 0; head < c.n_heads; ++head) {
            const std::size_t b = head * dh;
            Var qh = c.n_heads == 1 ? q : num::slice_cols(q, b, b + dh);
            Var kh = c.n_heads == 1 ? k : num::slice_cols(k, b, b + dh);
            Var vh = c.n_heads == 1 ? v : num::slice_cols(v, b, b + dh);
            Var scores = num::scale(num::matmul_nt(qh, kh), inv_sqrt_dh);
            heads.push_back(num::matmul(num::softmax(scores, 1), vh));
        }
        Var context = c.n_heads == 1 ? heads.front() : num::concat_cols(heads);
        h = num::add(h, linear(tape, context, l.out_w, l.out_b));
        Var f = num::layer_norm(h, tape.param(l.norm2_gain), tape.param(l.norm2_bias));
        Var ff = linear(tape, num::gelu(linear(tape, f, l.ff1_w, l.ff1_b)), l.ff2_w, l.ff2_b);
        h = num::add(h, ff);
    }
    Var hidden = num::layer_norm(h, tape.param(fm.final_gain), tape.param(fm.final_bias));
    return FMOutputs{hidden, linear(tape, hidden, fm.recon_w, fm.recon_b),
                     linear(tape, hidden, fm.forecast_w, fm.forecast_b)};
}

FMTensors fm_forward(const FMWeights& fm, const Tensor& x, const Tensor& pos) {
    Tape tape;
    FMOutputs out = fm_forward(tape, fm, tape.constant_ref(x), tape.constant_ref(pos));
    return FMTensors{out.hidden.value(), out.recon.value(), out.forecast.value()};
}

Tensor position_rows(const FMWeights& fm, std::size_t rows) {
    const Tensor& table = fm.position.value;
    if (rows == 0 || rows > table.rows()) {
        throw DimensionError("position_rows: " + std::to_string(rows) + " rows requested from a table of " +
                             std::to_string(table.rows()));
    }
    const std::size_t d = table.cols();
    return Tensor({rows, d}, std::vector<double>(table.data(), table.data() + rows * d));
}

}  // namespace pfl::fm
