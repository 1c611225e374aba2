#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pfl/data/data.hpp"
#include "pfl/fedsim/fedsim.hpp"
#include "pfl/fm/pretrain.hpp"
#include "pfl/report/report.hpp"

namespace pfl::cli {

// Everything a run needs. Sub-seeds are derived from `seed` by name in
// materialize(); they are not configurable on their own.
struct RunConfig {
    std::uint64_t seed = 42;
    std::string data_dir;  // empty: synthesize
    data::SyntheticSpec synth;
    data::NormScope norm = data::NormScope::device;
    data::GapPolicy gaps = data::GapPolicy::strict;
    fm::FMConfig fm;
    fm::PretrainConfig pretrain;
    std::string fm_ckpt;  // empty: pretrain inline
    fed::FedConfig fed;
    std::string out_dir = "runs";
    std::string log_level = "info";
};

struct Field {
    std::string key;
    std::string help;
};

// Keys in echo order.
const std::vector<Field>& fields();

// Throws ConfigError for unknown keys or unparsable values.
void set_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_value(const RunConfig& cfg, const std::string& key);

// `key = value` lines; '#' starts a comment. A path ending in .json is read
// as a report and its config echo applied.
void load_file(RunConfig& cfg, const std::filesystem::path& path);
void apply_echo(RunConfig& cfg, const report::ConfigEcho& echo);

// Fans shared keys out to the sub-configs and derives sub-seeds.
void materialize(RunConfig& cfg);
// Materializes and checks every invariant; throws ConfigError.
void validate(RunConfig& cfg);

report::ConfigEcho echo(const RunConfig& cfg);
std::string echo_text(const RunConfig& cfg);

}  // namespace pfl::cli
