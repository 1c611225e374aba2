#include "pfl/data/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "pfl/errors.hpp"
#include "pfl/log.hpp"
#include "pfl/rng.hpp"

namespace pfl::data {

namespace {

std::vector<double> normals(Rng& rng, std::size_t n, double scale = 1.0) {
    std::vector<double> out(n);
    for (double& v : out) {
        v = scale * rng.normal();
    }
    return out;
}

std::string device_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "device_%03zu", i);
    return buf;
}

}  // namespace

void SyntheticSpec::validate() const {
    if (devices == 0 || n_vars == 0 || length == 0 || clusters == 0) {
        throw ConfigError("synthetic spec: devices, n_vars, length and clusters must be positive");
    }
    if (!(ar_low <= ar_high)) {
        throw ConfigError("synthetic spec: ar_low exceeds ar_high");
    }
    if (!(std::max(std::abs(ar_low), std::abs(ar_high)) < 1.0)) {
        throw ConfigError("synthetic spec: AR spectral radius must be below 1 for a stationary series");
    }
    if (noise < 0.0 || spread < 0.0 || season_amp < 0.0) {
        throw ConfigError("synthetic spec: noise, spread and season_amp must be non-negative");
    }
}

std::vector<DeviceSeries> synthesize(const SyntheticSpec& spec) {
    spec.validate();
    const std::size_t n = spec.n_vars;

    struct Cluster {
        std::vector<double> phi, amp, phase, offset, mixing;
    };
    std::vector<Cluster> clusters;
    for (std::size_t c = 0; c < spec.clusters; ++c) {
        Rng rng(spec.seed, "synth/cluster/" + std::to_string(c));
        Cluster k;
        for (std::size_t v = 0; v < n; ++v) {
            k.phi.push_back(rng.uniform(spec.ar_low, spec.ar_high));
            k.amp.push_back(spec.season_amp * rng.uniform(0.5, 1.5));
            k.phase.push_back(rng.uniform(0.0, 24.0));
            k.offset.push_back(rng.normal());
        }
        k.mixing = normals(rng, n * n, 1.0 / std::sqrt(static_cast<double>(n)));
        clusters.push_back(std::move(k));
    }

    const std::int64_t start = parse_timestamp("2020-01-01T00:00:00");
    constexpr std::size_t burn_in = 64;
    std::vector<DeviceSeries> out;
    for (std::size_t d = 0; d < spec.devices; ++d) {
        const Cluster& base = clusters[d % spec.clusters];
        Rng rng(spec.seed, "synth/device/" + std::to_string(d));
        std::vector<double> phi(n), amp(n), phase(n), offset(n);
        for (std::size_t v = 0; v < n; ++v) {
            phi[v] = std::clamp(base.phi[v] + 0.1 * spec.spread * rng.normal(), spec.ar_low, spec.ar_high);
            amp[v] = base.amp[v] * std::max(0.0, 1.0 + spec.spread * rng.normal());
            phase[v] = base.phase[v] + 3.0 * spec.spread * rng.normal();
            offset[v] = base.offset[v] + spec.spread * rng.normal();
        }
        std::vector<double> mixing(n * n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const double dev = spec.spread * rng.normal() / std::sqrt(static_cast<double>(n));
                mixing[i * n + j] = (i == j ? 1.0 : 0.0) + spec.mix * (base.mixing[i * n + j] + dev);
            }
        }

        DeviceSeries s;
        s.id = device_name(d);
        s.values = Tensor::matrix(spec.length, n);
        std::vector<double> z(n, 0.0), pre(n);
        for (std::size_t t = 0; t < burn_in + spec.length; ++t) {
            for (std::size_t v = 0; v < n; ++v) {
                z[v] = phi[v] * z[v] + spec.noise * rng.normal();
            }
            if (t < burn_in) {
                continue;
            }
            const std::size_t row = t - burn_in;
            for (std::size_t v = 0; v < n; ++v) {
                pre[v] = z[v] + amp[v] * std::sin(2.0 * std::numbers::pi * (static_cast<double>(row) + phase[v]) / 24.0);
            }
            for (std::size_t i = 0; i < n; ++i) {
                double acc = offset[i];
                for (std::size_t j = 0; j < n; ++j) {
                    acc += mixing[i * n + j] * pre[j];
                }
                s.values(row, i) = acc;
            }
            s.timestamps.push_back(start + static_cast<std::int64_t>(row) * 3600);
        }
        out.push_back(std::move(s));
    }
    return out;
}

SplitBounds split_protocol(std::size_t length, std::size_t m) {
    if (m == 0 || length < 10 * m) {
        throw DataError("split: series of " + std::to_string(length) + " rows is shorter than 10 windows of " +
                        std::to_string(m));
    }
    const std::size_t pre_end = length * 5 / 10;
    const std::size_t train_end = length * 6 / 10;
    const std::size_t val_end = length * 8 / 10;
    SplitBounds b;
    b.train = {0, train_end};
    b.pretrain_train = {0, pre_end};
    b.pretrain_val = {pre_end, train_end};
    b.prompt_train = {pre_end, train_end};
    b.val = {train_end, val_end};
    b.test = {val_end, length};
    return b;
}

Tensor NormStats::normalize(const Tensor& values) const {
    if (values.cols() != mean.size()) {
        throw DimensionError("normalize: " + values.shape_str() + " against " + std::to_string(mean.size()) +
                             " variables");
    }
    Tensor out = values;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        for (std::size_t c = 0; c < out.cols(); ++c) {
            out(r, c) = (out(r, c) - mean[c]) / std[c];
        }
    }
    return out;
}

Tensor NormStats::denormalize(const Tensor& values) const {
    if (values.cols() != mean.size()) {
        throw DimensionError("denormalize: " + values.shape_str() + " against " + std::to_string(mean.size()) +
                             " variables");
    }
    Tensor out = values;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        for (std::size_t c = 0; c < out.cols(); ++c) {
            out(r, c) = out(r, c) * std[c] + mean[c];
        }
    }
    return out;
}

NormStats compute_stats(const std::vector<const Tensor*>& values, const std::vector<Range>& ranges) {
    if (values.empty() || values.size() != ranges.size()) {
        throw ContractError("compute_stats: need one range per matrix");
    }
    const std::size_t n = values.front()->cols();
    std::vector<double> sum(n, 0.0);
    std::size_t count = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        for (std::size_t r = ranges[i].begin; r < ranges[i].end; ++r) {
            for (std::size_t c = 0; c < n; ++c) {
                sum[c] += (*values[i])(r, c);
            }
        }
        count += ranges[i].size();
    }
    if (count == 0) {
        throw DataError("compute_stats: empty range");
    }
    NormStats s;
    s.mean.resize(n);
    s.std.assign(n, 0.0);
    for (std::size_t c = 0; c < n; ++c) {
        s.mean[c] = sum[c] / static_cast<double>(count);
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        for (std::size_t r = ranges[i].begin; r < ranges[i].end; ++r) {
            for (std::size_t c = 0; c < n; ++c) {
                const double d = (*values[i])(r, c) - s.mean[c];
                s.std[c] += d * d;
            }
        }
    }
    for (std::size_t c = 0; c < n; ++c) {
        s.std[c] = std::sqrt(s.std[c] / static_cast<double>(count));
        if (!(s.std[c] > 1e-12)) {
            log::warn("normalization: variable " + std::to_string(c) + " is constant; using std 1");
            s.std[c] = 1.0;
        }
    }
    return s;
}

std::vector<Tensor> make_windows(const Tensor& values, Range r, std::size_t m) {
    if (r.end > values.rows() || r.begin > r.end) {
        throw ContractError("make_windows: range outside the series");
    }
    std::vector<Tensor> out;
    if (m == 0 || r.size() < m) {
        log::warn("make_windows: slice of " + std::to_string(r.size()) + " rows holds no window of " +
                  std::to_string(m));
        return out;
    }
    const std::size_t n = values.cols();
    out.reserve(r.size() - m + 1);
    for (std::size_t s = r.begin; s + m <= r.end; ++s) {
        const double* first = values.data() + s * n;
        out.emplace_back(num::Shape{m, n}, std::vector<double>(first, first + m * n));
    }
    return out;
}

WindowSample split_window(const Tensor& window, std::size_t history, std::size_t target_var) {
    if (history == 0 || history >= window.rows() || target_var >= window.cols()) {
        throw DimensionError("split_window: history or target out of range for " + window.shape_str());
    }
    const std::size_t n = window.cols();
    WindowSample s;
    s.history = Tensor({history, n}, std::vector<double>(window.data(), window.data() + history * n));
    s.target = Tensor::matrix(window.rows() - history, 1);
    for (std::size_t r = history; r < window.rows(); ++r) {
        s.target(r - history, 0) = window(r, target_var);
    }
    return s;
}

std::vector<DeviceData> prepare(const std::vector<DeviceSeries>& series, std::size_t m, NormScope scope) {
    if (series.empty()) {
        throw DataError("prepare: no device series");
    }
    const std::size_t n = series.front().values.cols();
    std::vector<DeviceData> out;
    std::vector<const Tensor*> all_values;
    std::vector<Range> all_train;
    for (const DeviceSeries& s : series) {
        if (s.values.cols() != n) {
            throw DataError("prepare: device " + s.id + " has " + std::to_string(s.values.cols()) +
                            " variables, expected " + std::to_string(n));
        }
        DeviceData d;
        d.id = s.id;
        d.bounds = split_protocol(s.values.rows(), m);
        all_values.push_back(&s.values);
        all_train.push_back(d.bounds.train);
        out.push_back(std::move(d));
    }
    NormStats pooled;
    if (scope == NormScope::global) {
        pooled = compute_stats(all_values, all_train);
    }
    for (std::size_t i = 0; i < series.size(); ++i) {
        DeviceData& d = out[i];
        d.stats = scope == NormScope::global ? pooled : compute_stats({all_values[i]}, {all_train[i]});
        d.normalized = d.stats.normalize(series[i].values);
        d.pretrain_train = make_windows(d.normalized, d.bounds.pretrain_train, m);
        d.pretrain_val = make_windows(d.normalized, d.bounds.pretrain_val, m);
        d.prompt_train = make_windows(d.normalized, d.bounds.prompt_train, m);
        d.val = make_windows(d.normalized, d.bounds.val, m);
        d.test = make_windows(d.normalized, d.bounds.test, m);
    }
    return out;
}

}  // namespace pfl::data
