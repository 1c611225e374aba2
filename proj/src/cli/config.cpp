#include "pfl/cli/config.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>

#include "pfl/errors.hpp"
#include "pfl/report/report.hpp"

namespace pfl::cli {

namespace {

// --- text conversions ------------------------------------------------------

std::string to_text(std::size_t v) { return std::to_string(v); }
std::string to_text(bool v) { return v ? "true" : "false"; }
std::string to_text(const std::string& v) { return v; }
std::string to_text(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void from_text(const std::string& s, std::uint64_t& out) {
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    if (ec != std::errc() || ptr != end) {
        throw ConfigError("expected a non-negative integer, got '" + s + "'");
    }
}
void from_text(const std::string& s, double& out) {
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) {
        throw ConfigError("expected a number, got '" + s + "'");
    }
}
void from_text(const std::string& s, bool& out) {
    if (s == "true" || s == "1" || s == "on" || s == "yes") {
        out = true;
    } else if (s == "false" || s == "0" || s == "off" || s == "no") {
        out = false;
    } else {
        throw ConfigError("expected true or false, got '" + s + "'");
    }
}
void from_text(const std::string& s, std::string& out) { out = s; }

template <typename E>
struct EnumNames;

template <typename E>
std::string enum_text(E v) {
    for (const auto& [name, value] : EnumNames<E>::table) {
        if (value == v) {
            return name;
        }
    }
    return "?";
}

template <typename E>
void enum_from(const std::string& s, E& out) {
    std::string options;
    for (const auto& [name, value] : EnumNames<E>::table) {
        if (s == name) {
            out = value;
            return;
        }
        options += (options.empty() ? "" : ", ") + std::string(name);
    }
    throw ConfigError("expected one of " + options + ", got '" + s + "'");
}

template <>
struct EnumNames<fed::Mode> {
    static constexpr std::pair<const char*, fed::Mode> table[] = {{"stp", fed::Mode::stp},
                                                                  {"promptfl", fed::Mode::promptfl},
                                                                  {"finetune", fed::Mode::finetune},
                                                                  {"regular", fed::Mode::regular},
                                                                  {"frozen", fed::Mode::frozen}};
};
template <>
struct EnumNames<fed::GraphOver> {
    static constexpr std::pair<const char*, fed::GraphOver> table[] = {{"cached", fed::GraphOver::cached},
                                                                       {"selected", fed::GraphOver::selected}};
};
template <>
struct EnumNames<fed::Broadcast> {
    static constexpr std::pair<const char*, fed::Broadcast> table[] = {{"personal", fed::Broadcast::personal},
                                                                       {"global", fed::Broadcast::global}};
};
template <>
struct EnumNames<stp::TplSchedule> {
    static constexpr std::pair<const char*, stp::TplSchedule> table[] = {{"joint", stp::TplSchedule::joint},
                                                                         {"sequential", stp::TplSchedule::sequential}};
};
template <>
struct EnumNames<data::NormScope> {
    static constexpr std::pair<const char*, data::NormScope> table[] = {{"device", data::NormScope::device},
                                                                        {"global", data::NormScope::global}};
};
template <>
struct EnumNames<data::GapPolicy> {
    static constexpr std::pair<const char*, data::GapPolicy> table[] = {{"strict", data::GapPolicy::strict},
                                                                        {"forward_fill", data::GapPolicy::forward_fill}};
};
template <>
struct EnumNames<fm::PretrainObjective> {
    static constexpr std::pair<const char*, fm::PretrainObjective> table[] = {
        {"masked", fm::PretrainObjective::masked}, {"onestep", fm::PretrainObjective::onestep}};
};

// --- registry ----------------------------------------------------------------

struct Entry {
    Field field;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

template <typename Access>
Entry plain(std::string key, std::string help, Access access) {
    return Entry{{std::move(key), std::move(help)},
                 [access](const RunConfig& c) { return to_text(access(const_cast<RunConfig&>(c))); },
                 [access](RunConfig& c, const std::string& s) {
                     auto& ref = access(c);
                     using T = std::remove_reference_t<decltype(ref)>;
                     if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
                         std::uint64_t v = 0;
                         from_text(s, v);
                         ref = static_cast<T>(v);
                     } else {
                         from_text(s, ref);
                     }
                 }};
}

template <typename Access>
Entry choice(std::string key, std::string help, Access access) {
    return Entry{{std::move(key), std::move(help)},
                 [access](const RunConfig& c) { return enum_text(access(const_cast<RunConfig&>(c))); },
                 [access](RunConfig& c, const std::string& s) { enum_from(s, access(c)); }};
}

#define PFL_AT(expr) [](RunConfig& c) -> auto& { return c.expr; }

const std::vector<Entry>& registry() {
    static const std::vector<Entry> entries = [] {
        std::vector<Entry> e;
        e.push_back(plain("seed", "root seed; every stream is derived from it by name", PFL_AT(seed)));
        e.push_back(plain("data_dir", "directory of per-device CSV files (empty: synthesize)", PFL_AT(data_dir)));
        e.push_back(plain("devices", "synthetic device count", PFL_AT(synth.devices)));
        e.push_back(plain("length", "synthetic series length", PFL_AT(synth.length)));
        e.push_back(plain("clusters", "synthetic device clusters", PFL_AT(synth.clusters)));
        e.push_back(plain("ar_low", "lowest AR(1) coefficient", PFL_AT(synth.ar_low)));
        e.push_back(plain("ar_high", "highest AR(1) coefficient", PFL_AT(synth.ar_high)));
        e.push_back(plain("season_amp", "daily cycle amplitude", PFL_AT(synth.season_amp)));
        e.push_back(plain("mix", "cross-variable mixing strength", PFL_AT(synth.mix)));
        e.push_back(plain("spread", "device deviation from its cluster", PFL_AT(synth.spread)));
        e.push_back(plain("noise", "innovation scale", PFL_AT(synth.noise)));
        e.push_back(choice("norm_scope", "device | global normalisation statistics", PFL_AT(norm)));
        e.push_back(choice("gap_policy", "strict | forward_fill for missing CSV values", PFL_AT(gaps)));
        e.push_back(plain("m", "window length (k_hist + 5 l)", PFL_AT(fed.learner.stp.dims.m)));
        e.push_back(plain("n", "variables per device", PFL_AT(fed.learner.stp.dims.n)));
        e.push_back(plain("k_hist", "history length", PFL_AT(fed.learner.stp.dims.k)));
        e.push_back(plain("p", "first-phase history split", PFL_AT(fed.learner.stp.dims.p)));
        e.push_back(plain("l", "horizon increment per phase", PFL_AT(fed.learner.stp.dims.l)));
        e.push_back(plain("target_var", "index of the forecast variable", PFL_AT(fed.learner.stp.target_var)));
        e.push_back(plain("tpl", "temporal prompts on", PFL_AT(fed.learner.stp.flags.tpl)));
        e.push_back(plain("spl", "spatial prompts on", PFL_AT(fed.learner.stp.flags.spl)));
        e.push_back(plain("gate", "gated fusion on", PFL_AT(fed.learner.stp.flags.gate)));
        e.push_back(plain("pe", "trainable position encoding in the prompts", PFL_AT(fed.learner.stp.flags.pe)));
        e.push_back(choice("tpl_schedule", "joint | sequential phase training", PFL_AT(fed.learner.stp.schedule)));
        e.push_back(plain("prompt_len", "promptfl prompt rows (0: horizon)", PFL_AT(fed.learner.prompt_len)));
        e.push_back(plain("fm_d_model", "model width", PFL_AT(fm.d_model)));
        e.push_back(plain("fm_heads", "attention heads", PFL_AT(fm.n_heads)));
        e.push_back(plain("fm_layers", "encoder layers", PFL_AT(fm.n_layers)));
        e.push_back(plain("fm_d_ff", "feed-forward width", PFL_AT(fm.d_ff)));
        e.push_back(plain("fm_max_seq_len", "position table rows", PFL_AT(fm.max_seq_len)));
        e.push_back(plain("fm_ckpt", "pretrained checkpoint (empty: pretrain inline)", PFL_AT(fm_ckpt)));
        e.push_back(plain("pretrain_epochs", "pretraining epochs", PFL_AT(pretrain.epochs)));
        e.push_back(plain("pretrain_batch", "pretraining batch size", PFL_AT(pretrain.batch)));
        e.push_back(plain("pretrain_lr", "pretraining learning rate", PFL_AT(pretrain.lr)));
        e.push_back(plain("mask_fraction", "masked row fraction", PFL_AT(pretrain.mask_fraction)));
        e.push_back(plain("horizon_mask_prob", "chance a window masks its horizon", PFL_AT(pretrain.horizon_mask_prob)));
        e.push_back(choice("pretrain_objective", "masked | onestep", PFL_AT(pretrain.objective)));
        e.push_back(plain("algo", "metepfl, metepfl_fedavg, fedavg, fedprox, fedatt, scaffold, promptfl, finetune, "
                                  "regular or frozen",
                          PFL_AT(fed.algo)));
        e.push_back(choice("base_mode", "mode trained by the plain baselines", PFL_AT(fed.base_mode)));
        e.push_back(plain("clients", "number of clients N", PFL_AT(fed.clients)));
        e.push_back(plain("rounds", "communication rounds", PFL_AT(fed.rounds)));
        e.push_back(plain("fraction", "share of clients sampled per round", PFL_AT(fed.fraction)));
        e.push_back(plain("local_epochs", "local passes per round", PFL_AT(fed.local_epochs)));
        e.push_back(plain("batch", "local batch size", PFL_AT(fed.batch)));
        e.push_back(plain("lr", "local Adam learning rate", PFL_AT(fed.lr)));
        e.push_back(plain("lambda", "proximal weight", PFL_AT(fed.lambda)));
        e.push_back(plain("alpha", "graph smoothing rate", PFL_AT(fed.graph.alpha)));
        e.push_back(plain("smooth_steps", "graph smoothing steps r", PFL_AT(fed.graph.steps)));
        e.push_back(plain("theta", "similarity threshold for edges", PFL_AT(fed.graph.threshold)));
        e.push_back(plain("tau", "graph regulariser weight (monitoring only)", PFL_AT(fed.graph.tau)));
        e.push_back(plain("uniform_avg", "unweighted global average after smoothing", PFL_AT(fed.graph.uniform_avg)));
        e.push_back(choice("graph_over", "cached | selected clients in the server graph", PFL_AT(fed.graph_over)));
        e.push_back(choice("broadcast", "personal | global prompts sent to clients", PFL_AT(fed.broadcast)));
        e.push_back(plain("reinit_each_round", "restart local prompts from init every round",
                          PFL_AT(fed.reinit_each_round)));
        e.push_back(plain("fedatt_eps", "fedatt server step size", PFL_AT(fed.fedatt_eps)));
        e.push_back(plain("early_stop_patience", "rounds without validation gain before stopping (0: off)",
                          PFL_AT(fed.patience)));
        e.push_back(plain("eval_stride", "validation window stride", PFL_AT(fed.eval_stride)));
        e.push_back(plain("test_stride", "test window stride", PFL_AT(fed.test_stride)));
        e.push_back(plain("threads", "client worker threads", PFL_AT(fed.threads)));
        e.push_back(plain("out_dir", "parent of run directories", PFL_AT(out_dir)));
        e.push_back(plain("log_level", "debug | info | warn", PFL_AT(log_level)));
        return e;
    }();
    return entries;
}

#undef PFL_AT

const Entry& lookup(const std::string& key) {
    static const std::map<std::string, const Entry*> index = [] {
        std::map<std::string, const Entry*> m;
        for (const Entry& e : registry()) {
            m.emplace(e.field.key, &e);
        }
        return m;
    }();
    auto it = index.find(key);
    if (it == index.end()) {
        throw ConfigError("unknown config key '" + key + "'");
    }
    return *it->second;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return "";
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

const std::vector<Field>& fields() {
    static const std::vector<Field> out = [] {
        std::vector<Field> f;
        for (const Entry& e : registry()) {
            f.push_back(e.field);
        }
        return f;
    }();
    return out;
}

void set_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    const Entry& e = lookup(key);
    try {
        e.set(cfg, value);
    } catch (const ConfigError& err) {
        throw ConfigError(key + ": " + err.what());
    }
}

std::string get_value(const RunConfig& cfg, const std::string& key) { return lookup(key).get(cfg); }

void apply_echo(RunConfig& cfg, const report::ConfigEcho& echo) {
    for (const auto& [key, value] : echo) {
        set_value(cfg, key, value);
    }
}

void load_file(RunConfig& cfg, const std::filesystem::path& path) {
    if (path.extension() == ".json") {
        apply_echo(cfg, report::read_report(path).config);
        return;
    }
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path.string());
    }
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path.string() + ":" + std::to_string(number) + ": expected key = value");
        }
        try {
            set_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(path.string() + ":" + std::to_string(number) + ": " + e.what());
        }
    }
}

void materialize(RunConfig& cfg) {
    const stp::StpDims& d = cfg.fed.learner.stp.dims;
    cfg.synth.n_vars = d.n;
    cfg.synth.seed = derive_seed(cfg.seed, "data");
    cfg.fm.n_vars = d.n;
    cfg.fm.seed = derive_seed(cfg.seed, "fm");
    cfg.pretrain.horizon = d.m > d.k ? d.m - d.k : 0;
    cfg.pretrain.target_var = cfg.fed.learner.stp.target_var;
    cfg.pretrain.seed = derive_seed(cfg.seed, "pretrain");
    cfg.fed.seed = cfg.seed;
}

void validate(RunConfig& cfg) {
    materialize(cfg);
    cfg.fed.learner.stp.dims.validate();
    cfg.fm.validate();
    cfg.fed.learner.stp.validate(cfg.fm);
    if (cfg.data_dir.empty()) {
        cfg.synth.validate();
        if (cfg.synth.devices < cfg.fed.clients) {
            throw ConfigError("devices (" + std::to_string(cfg.synth.devices) + ") must cover clients (" +
                              std::to_string(cfg.fed.clients) + ")");
        }
    }
    cfg.fed.validate();
    if (cfg.log_level != "debug" && cfg.log_level != "info" && cfg.log_level != "warn") {
        throw ConfigError("log_level: expected debug, info or warn");
    }
}

report::ConfigEcho echo(const RunConfig& cfg) {
    report::ConfigEcho out;
    for (const Entry& e : registry()) {
        out.emplace_back(e.field.key, e.get(cfg));
    }
    return out;
}

std::string echo_text(const RunConfig& cfg) {
    std::string out;
    for (const auto& [key, value] : echo(cfg)) {
        out += key + " = " + value + "\n";
    }
    return out;
}

}  // namespace pfl::cli
