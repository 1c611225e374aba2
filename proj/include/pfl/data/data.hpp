#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pfl/numerics/tensor.hpp"

namespace pfl::data {

using num::Tensor;

struct DeviceSeries {
    std::string id;
    std::vector<std::int64_t> timestamps;  // seconds since epoch, hourly
    Tensor values;                         // T x n
};

enum class GapPolicy { strict, forward_fill };

// One CSV per device (sorted by file name). Header `timestamp,v1,...,vN`
// with N == n_vars; timestamps `YYYY-MM-DDTHH:MM[:SS][Z]`.
std::vector<DeviceSeries> load_csv(const std::filesystem::path& dir, std::size_t n_vars = 12,
                                   GapPolicy gaps = GapPolicy::strict);
DeviceSeries load_csv_file(const std::filesystem::path& file, std::size_t n_vars = 12,
                           GapPolicy gaps = GapPolicy::strict);
void save_csv(const std::vector<DeviceSeries>& series, const std::filesystem::path& dir);

std::int64_t parse_timestamp(const std::string& text);
std::string format_timestamp(std::int64_t seconds);

struct SyntheticSpec {
    std::size_t devices = 10;
    std::size_t n_vars = 12;
    std::size_t length = 1000;
    std::size_t clusters = 3;
    double ar_low = 0.5;  // AR(1) coefficients are drawn per variable in [ar_low, ar_high]
    double ar_high = 0.95;
    double season_amp = 1.0;
    double mix = 0.5;     // strength of the cross-variable mixing
    double spread = 0.2;  // device-level deviation from its cluster
    double noise = 0.3;
    std::uint64_t seed = 0;

    void validate() const;
};

// Devices fall into `clusters` groups sharing AR, seasonal and mixing
// parameters, each device perturbed by `spread`. Deterministic in the seed.
std::vector<DeviceSeries> synthesize(const SyntheticSpec& spec);

// Row ranges [begin, end) of the chronological per-device split.
struct Range {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const noexcept { return end - begin; }
};

struct SplitBounds {
    Range train;           // first 60%
    Range pretrain_train;  // first 50%
    Range pretrain_val;    // last sixth of train
    Range prompt_train;    // last sixth of train
    Range val;             // next 20%
    Range test;            // last 20%
};

// Requires T >= 10 m.
SplitBounds split_protocol(std::size_t length, std::size_t m);

struct NormStats {
    std::vector<double> mean;
    std::vector<double> std;

    Tensor normalize(const Tensor& values) const;
    Tensor denormalize(const Tensor& values) const;
    double denormalize(double value, std::size_t var) const { return value * std[var] + mean[var]; }
};

// Per-variable mean and standard deviation over rows [r.begin, r.end) of
// each given matrix, pooled. Constant variables get std 1 with a warning.
NormStats compute_stats(const std::vector<const Tensor*>& values, const std::vector<Range>& ranges);

// Stride-1 windows of m rows inside [r.begin, r.end); count len - m + 1.
std::vector<Tensor> make_windows(const Tensor& values, Range r, std::size_t m);

struct WindowSample {
    Tensor history;  // P x n
    Tensor target;   // Q x 1
};
WindowSample split_window(const Tensor& window, std::size_t history, std::size_t target_var);

struct DeviceData {
    std::string id;
    NormStats stats;
    SplitBounds bounds;
    Tensor normalized;  // T x n
    std::vector<Tensor> pretrain_train, pretrain_val, prompt_train, val, test;
};

enum class NormScope { device, global };

std::vector<DeviceData> prepare(const std::vector<DeviceSeries>& series, std::size_t m,
                                NormScope scope = NormScope::device);

}  // namespace pfl::data
