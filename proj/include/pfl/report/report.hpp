#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace pfl::report {

struct Metrics {
    double mae = 0.0;
    double rmse = 0.0;
};

// Both throw MetricError on empty or mismatched input.
double mae(std::span<const double> pred, std::span<const double> truth);
double rmse(std::span<const double> pred, std::span<const double> truth);
Metrics evaluate(std::span<const double> pred, std::span<const double> truth);

struct ParamLedger {
    std::size_t total = 0;
    std::size_t trainable = 0;
    std::size_t communicated = 0;
    double ratio = 0.0;  // communicated / total * 100

    std::size_t frozen() const noexcept { return total - trainable; }
};

// `model_params` counts the base model; `extra_params` the scalars a mode adds
// on top of it (prompts, copied position rows). Trainable scalars may be part
// of either pool. Throws ContractError if the counts are inconsistent.
ParamLedger param_ledger(std::size_t model_params, std::size_t extra_params, std::size_t trainable,
                         std::size_t communicated);

constexpr std::size_t kBytesPerScalar = 8;

struct RoundRecord {
    std::size_t round = 0;
    std::vector<std::size_t> selected;
    double train_loss = 0.0;
    double val_mae = 0.0;
    double val_rmse = 0.0;
    std::uint64_t bytes_up = 0;
    std::uint64_t bytes_down = 0;
    double graph_reg = 0.0;
};

struct CommTotals {
    std::uint64_t bytes_up = 0;
    std::uint64_t bytes_down = 0;
};
CommTotals comm_ledger(const std::vector<RoundRecord>& rounds);

using ConfigEcho = std::vector<std::pair<std::string, std::string>>;

struct RunReport {
    std::string algo;
    std::uint64_t seed = 0;
    ConfigEcho config;
    std::vector<RoundRecord> rounds;
    Metrics test;
    std::size_t best_round = 0;
    bool early_stopped = false;
    ParamLedger ledger;
    std::uint64_t fm_checksum_before = 0;
    std::uint64_t fm_checksum_after = 0;
    std::vector<std::string> notes;  // failed clients and similar events
};

// Writes report.json and rounds.csv into `dir` (created if missing).
void emit_report(const RunReport& report, const std::filesystem::path& dir);
RunReport read_report(const std::filesystem::path& dir);

// The exact rounds.csv text.
std::string rounds_csv(const std::vector<RoundRecord>& rounds);

}  // namespace pfl::report
