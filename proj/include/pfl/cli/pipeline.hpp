#pragma once

#include <filesystem>
#include <vector>

#include "pfl/cli/config.hpp"
#include "pfl/numerics/gradcheck.hpp"

namespace pfl::cli {

// CSV files from data_dir, or the synthetic generator.
std::vector<data::DeviceSeries> load_series(const RunConfig& cfg);
std::vector<data::DeviceData> load_devices(const RunConfig& cfg);

// Fresh FM trained on the pooled pretraining windows of all devices.
fm::FMWeights pretrain_fm(const RunConfig& cfg, const std::vector<data::DeviceData>& devices,
                          fm::PretrainResult* result = nullptr);

// fm_ckpt when set (its dimensions must match the fm_* keys), otherwise
// pretrain_fm. `inline_pretrained` reports which.
fm::FMWeights obtain_fm(const RunConfig& cfg, const std::vector<data::DeviceData>& devices,
                        bool* inline_pretrained = nullptr);

// <parent>/<YYYYmmdd-HHMMSS>-s<seed>[-N]; never an existing directory.
std::filesystem::path make_run_dir(const std::filesystem::path& parent, std::uint64_t seed);

// Analytic against finite-difference gradients of the full local objective
// (all phases, SPL, gate and prox) over every prompt coordinate, at a
// randomised prompt point.
num::GradCheckResult prompt_gradcheck(const RunConfig& cfg, const fm::FrozenFM& fm, const num::Tensor& window,
                                      double step = 1e-4);

// run_federated with the config echo attached.
report::RunReport run(const RunConfig& cfg, const fm::FrozenFM& fm, const std::vector<data::DeviceData>& devices);

}  // namespace pfl::cli
