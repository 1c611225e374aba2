// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (0 when all pass).

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "pfl/cli/pipeline.hpp"
#include "pfl/errors.hpp"
#include "pfl/log.hpp"

using namespace pfl;
namespace fs = std::filesystem;

namespace {

// Tolerances.
constexpr double kGradTol = 1e-5;
constexpr double kGradSeconds = 120.0;
constexpr double kAggTol = 1e-12;
constexpr double kSlack = 0.02;
constexpr double kDeskSeconds = 15.0 * 60.0;
constexpr double kLedgerLow = 1.0, kLedgerHigh = 6.0;  // percent

struct Outcome {
    bool pass = false;
    std::string detail;
};

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("pfl-acceptance-" + std::to_string(::getpid())) / name;
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

cli::RunConfig with(std::initializer_list<std::pair<const char*, const char*>> kv) {
    cli::RunConfig cfg;
    for (const auto& [k, v] : kv) {
        cli::set_value(cfg, k, v);
    }
    cli::validate(cfg);
    return cfg;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

// --- desk experiment shared by criteria 2, 7, 8 and 10 --------------------

struct DeskRun {
    std::string variant;
    std::uint64_t seed;
    report::RunReport report;
};

struct Desk {
    std::vector<DeskRun> runs;
    double cpu = 0.0;
    bool seal_ok = true;
    std::size_t sealed_rounds = 0;
    std::uint64_t ckpt_checksum = 0, after_checksum = 0;
};

cli::RunConfig desk_config(std::uint64_t seed) {
    cli::RunConfig cfg;
    for (const auto& [k, v] : std::vector<std::pair<std::string, std::string>>{
             {"fm_d_model", "16"}, {"fm_heads", "2"},    {"fm_layers", "2"},       {"fm_d_ff", "32"},
             {"length", "600"},    {"spread", "0.5"},    {"mix", "1.0"},           {"lr", "0.1"},
             {"batch", "8"},       {"local_epochs", "3"}, {"eval_stride", "8"},     {"test_stride", "4"},
             {"clients", "10"},    {"fraction", "0.2"},  {"rounds", "20"}}) {
        cli::set_value(cfg, k, v);
    }
    cfg.seed = seed;
    cli::validate(cfg);
    return cfg;
}

const std::vector<std::string> kVariants = {"frozen", "promptfl", "metepfl", "metepfl_fedavg",
                                            "no_tpl", "no_spl",   "no_gate"};

Desk run_desk() {
    Desk desk;
    const double start = cpu_seconds();
    for (std::uint64_t seed : {1, 2, 3}) {
        const cli::RunConfig base = desk_config(seed);
        const auto devices = cli::load_devices(base);
        fm::FMWeights weights = cli::pretrain_fm(base, devices);
        const fs::path ckpt = scratch("seal") / ("fm-" + std::to_string(seed) + ".ckpt");
        fm::save_ckpt(weights, ckpt);
        const fm::FrozenFM frozen = fm::freeze(std::move(weights));
        for (const std::string& v : kVariants) {
            cli::RunConfig cfg = base;
            cfg.fed.algo = v.rfind("no_", 0) == 0 ? "metepfl" : v;
            auto& flags = cfg.fed.learner.stp.flags;
            flags.tpl = v != "no_tpl";
            flags.spl = v != "no_spl";
            flags.gate = v != "no_gate";
            report::RunReport rep = cli::run(cfg, frozen, devices);
            std::printf("    desk seed %llu %-15s test MAE %.5f (%zu rounds)\n", static_cast<unsigned long long>(seed),
                        v.c_str(), rep.test.mae, rep.rounds.size());
            std::fflush(stdout);
            if (v == "metepfl" && seed == 1) {
                desk.ckpt_checksum = fm::weights_checksum(fm::load_ckpt(ckpt));
                desk.after_checksum = fm::weights_checksum(frozen.weights());
                desk.sealed_rounds = rep.rounds.size();
                desk.seal_ok = desk.ckpt_checksum == desk.after_checksum &&
                               rep.fm_checksum_before == rep.fm_checksum_after && frozen.intact();
            }
            desk.runs.push_back({v, seed, std::move(rep)});
        }
    }
    desk.cpu = cpu_seconds() - start;
    return desk;
}

double desk_median(const Desk& d, const std::string& variant) {
    std::vector<double> v;
    for (const DeskRun& r : d.runs) {
        if (r.variant == variant) {
            v.push_back(r.report.test.mae);
        }
    }
    return median(v);
}

// --- criteria ----------------------------------------------------------------

Outcome gradient_oracle() {
    cli::RunConfig cfg = with({{"fm_d_model", "16"}, {"fm_heads", "2"}, {"fm_layers", "2"}, {"fm_d_ff", "32"},
                               {"devices", "1"}, {"clients", "1"}, {"length", "300"}, {"seed", "5"}});
    const auto devices = cli::load_devices(cfg);
    const fm::FrozenFM frozen = fm::freeze(fm::init_fm(cfg.fm));
    const double start = cpu_seconds();
    const num::GradCheckResult r = cli::prompt_gradcheck(cfg, frozen, devices.front().prompt_train.front());
    const double secs = cpu_seconds() - start;
    const std::size_t expected = stp::make_prompts(cfg.fed.learner.stp, frozen).trainable_scalars();
    return {r.max_rel_error < kGradTol && secs < kGradSeconds && r.coordinates == expected,
            std::to_string(r.coordinates) + " coordinates, max rel err " + fmt("%.3e", r.max_rel_error) + " (" +
                r.worst_parameter + "), " + fmt("%.1f", secs) + " s CPU"};
}

Outcome frozen_seal(const Desk& d) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu-round metepfl run, checkpoint %016llx, after %016llx", d.sealed_rounds,
                  static_cast<unsigned long long>(d.ckpt_checksum), static_cast<unsigned long long>(d.after_checksum));
    return {d.seal_ok && d.sealed_rounds == 20, buf};
}

num::ParamSet stack(std::initializer_list<double> a, std::initializer_list<double> b) {
    num::ParamSet s;
    s.add("a", num::Tensor({a.size(), 1}, std::vector<double>(a)));
    s.add("b", num::Tensor({b.size(), 1}, std::vector<double>(b)));
    return s;
}

double max_abs_diff(const num::ParamSet& x, const num::ParamSet& y) {
    double worst = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) {
        for (std::size_t i = 0; i < x.items()[t].size(); ++i) {
            worst = std::max(worst, std::abs(x.items()[t].value[i] - y.items()[t].value[i]));
        }
    }
    return worst;
}

Outcome aggregation_oracles() {
    graphagg::SmoothingConfig sc;
    // (a) identical prompts through the whole pipeline
    const num::ParamSet same = stack({0.3, -1.7, 2.25}, {1e-3, 7.0});
    const auto agg = graphagg::graph_aggregate({same, same, same, same}, {1, 2, 3, 4}, sc);
    bool a = max_abs_diff(agg.global, same) == 0.0;
    for (const auto& s : agg.smoothed) {
        a = a && max_abs_diff(s, same) == 0.0;
    }
    // (b) two scalar clients, uniform A' over both nodes, alpha 0.5, one step
    num::ParamSet p0, p1;
    p0.add("x", num::Tensor::matrix(1, 1, 0.0));
    p1.add("x", num::Tensor::matrix(1, 1, 2.0));
    const graphagg::Matrix uniform2 = {{0.5, 0.5}, {0.5, 0.5}};
    const auto b_out = graphagg::gcn_smooth(uniform2, {p0, p1}, 0.5, 1);
    const double e0 = std::abs(b_out[0].items()[0].value[0] - 0.5);
    const double e1 = std::abs(b_out[1].items()[0].value[0] - 1.5);
    const bool b = e0 <= kAggTol && e1 <= kAggTol;
    // (c) complete graph, alpha 1, one step, uniform average vs FedAvg
    Rng rng(99);
    std::vector<num::ParamSet> clients;
    std::vector<fed::Upload> uploads;
    for (std::size_t i = 0; i < 4; ++i) {
        num::ParamSet s = stack({rng.normal(), rng.normal(), rng.normal()}, {rng.normal(), rng.normal()});
        uploads.push_back({i, s, 5.0});
        clients.push_back(std::move(s));
    }
    const graphagg::Matrix complete(4, std::vector<double>(4, 1.0));
    const graphagg::Matrix attention = graphagg::attention_weights(complete, std::vector<std::vector<double>>(
                                                                                 4, std::vector<double>{1.0, 0.0}));
    const auto smoothed = graphagg::gcn_smooth(attention, clients, 1.0, 1);
    const num::ParamSet graph_global = graphagg::global_average(smoothed, {5, 5, 5, 5}, true);
    const num::ParamSet fedavg = fed::aggregate_baseline(fed::Aggregator::fedavg, uploads, nullptr);
    const double ec = max_abs_diff(graph_global, fedavg);
    const bool c = ec <= kAggTol;
    return {a && b && c, std::string("(a) fixed point ") + (a ? "exact" : "broken") + "; (b) [" +
                             fmt("%.15g", b_out[0].items()[0].value[0]) + "], [" +
                             fmt("%.15g", b_out[1].items()[0].value[0]) + "]; (c) max diff " + fmt("%.2e", ec)};
}

Outcome fedavg_oracle() {
    std::vector<fed::Upload> ups;
    const double v[] = {1, 2, 4}, n[] = {1, 1, 2};
    for (std::size_t i = 0; i < 3; ++i) {
        num::ParamSet s;
        s.add("x", num::Tensor::matrix(1, 1, v[i]));
        ups.push_back({i, s, n[i]});
    }
    const double got = fed::aggregate_baseline(fed::Aggregator::fedavg, ups, nullptr).items()[0].value[0];
    const double hand = (1.0 * 1 + 1.0 * 2 + 2.0 * 4) / (1 + 1 + 2);
    return {got == hand && got == 2.75, "got " + fmt("%.17g", got) + ", hand " + fmt("%.17g", hand)};
}

Outcome shape_ladder() {
    Rng rng(2024);
    std::size_t ok = 0;
    std::string first_failure;
    for (int trial = 0; trial < 20; ++trial) {
        stp::StpDims d;
        d.n = 1 + rng.below(5);
        d.l = 1 + rng.below(3);
        d.k = 2 + rng.below(14);
        d.p = 1 + rng.below(d.k - 1);
        d.m = d.k + 5 * d.l;
        fm::FMConfig fc;
        fc.n_vars = d.n;
        fc.d_model = 8;
        fc.n_heads = 2;
        fc.n_layers = 1;
        fc.d_ff = 8;
        fc.max_seq_len = d.max_rows();
        fc.seed = trial;
        const fm::FrozenFM frozen = fm::freeze(fm::init_fm(fc));
        stp::StpConfig cfg;
        cfg.dims = d;
        cfg.target_var = rng.below(d.n);
        const num::ParamSet prompts = stp::make_prompts(cfg, frozen);
        num::Tensor window = num::Tensor::matrix(d.m, d.n);
        for (double& x : window.values()) {
            x = rng.normal();
        }
        num::Tape tape;
        const stp::PromptVars pv = stp::bind_prompts(tape, cfg, frozen, prompts);
        const stp::Window w = stp::bind_window(tape, window, cfg.target_var);
        const stp::PhaseResult r1 = stp::tpl_phase1(frozen, cfg, pv, w);
        // phase-1 input is [X[0:p], P_T1]
        const num::Shape t1{r1.input.rows() - d.p, r1.input.cols()};
        const num::Shape t2 = prompts.at("tpl.p_t2").value.shape();
        const num::Shape t3 = prompts.at("tpl.p_t3").value.shape();
        const stp::PhaseResult r4 = stp::tpl_phase4(frozen, cfg, pv, w);
        const bool pass = t1 == num::Shape{2 * (d.k - d.p) + d.l, d.n} && t2 == num::Shape{3 * d.l, d.n} &&
                          t3 == num::Shape{4 * d.l, d.n} && r4.forecast.value().shape() == num::Shape{d.m - d.k, 1};
        if (pass) {
            ++ok;
        } else if (first_failure.empty()) {
            first_failure = " first failure at k=" + std::to_string(d.k) + " p=" + std::to_string(d.p) +
                            " l=" + std::to_string(d.l) + " n=" + std::to_string(d.n);
        }
    }
    return {ok == 20, std::to_string(ok) + "/20 random dims match" + first_failure};
}

Outcome ledger_ordering() {
    const fm::FrozenFM frozen = fm::freeze(fm::init_fm(fm::FMConfig{}));
    fed::LearnerConfig lc;
    std::map<std::string, report::ParamLedger> led;
    for (fed::Mode m : {fed::Mode::promptfl, fed::Mode::stp, fed::Mode::finetune, fed::Mode::regular}) {
        led[fed::mode_name(m)] = fed::ledger_for(*fed::make_learner(m, frozen, lc), frozen);
    }
    const double pf = led["promptfl"].ratio, me = led["stp"].ratio, ft = led["finetune"].ratio,
                 rg = led["regular"].ratio;
    char buf[320];
    std::snprintf(buf, sizeof buf,
                  "promptfl %zu/%zu=%.3f%% < metepfl %zu/%zu=%.3f%% < finetune %zu/%zu=%.3f%% < regular %zu/%zu=%.0f%%",
                  led["promptfl"].trainable, led["promptfl"].total, pf, led["stp"].trainable, led["stp"].total, me,
                  led["finetune"].trainable, led["finetune"].total, ft, led["regular"].trainable,
                  led["regular"].total, rg);
    const bool regular_full = led["regular"].trainable == led["regular"].total;
    return {pf < me && me < ft && ft < rg && regular_full && me >= kLedgerLow && me <= kLedgerHigh, buf};
}

Outcome desk_direction(const Desk& d) {
    const double me = desk_median(d, "metepfl"), pf = desk_median(d, "promptfl"), fz = desk_median(d, "frozen"),
                 fa = desk_median(d, "metepfl_fedavg");
    const bool pass = me <= pf && me <= fz && me <= fa * (1.0 + kSlack) && d.cpu < kDeskSeconds;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "median MAE metepfl %.5f, promptfl %.5f, frozen %.5f, metepfl_fedavg %.5f (x1.02 = %.5f); "
                  "%.0f s CPU for criteria 7-8",
                  me, pf, fz, fa, fa * (1.0 + kSlack), d.cpu);
    return {pass, buf};
}

Outcome ablation_direction(const Desk& d) {
    const double full = desk_median(d, "metepfl");
    bool pass = true;
    std::string detail = "median MAE full " + fmt("%.5f", full);
    for (const char* v : {"no_tpl", "no_spl", "no_gate"}) {
        const double m = desk_median(d, v);
        pass = pass && full <= m * (1.0 + kSlack);
        detail += std::string(", ") + v + " " + fmt("%.5f", m);
    }
    return {pass, detail};
}

cli::RunConfig small_config() {
    return with({{"fm_d_model", "8"}, {"fm_heads", "2"}, {"fm_layers", "1"}, {"fm_d_ff", "16"}, {"devices", "4"},
                 {"clients", "4"}, {"length", "300"}, {"pretrain_epochs", "1"}, {"rounds", "3"},
                 {"fraction", "0.5"}, {"eval_stride", "4"}, {"test_stride", "4"}, {"seed", "17"}});
}

report::RunReport full_run(const cli::RunConfig& cfg, const fs::path& dir) {
    const auto devices = cli::load_devices(cfg);
    const fm::FrozenFM frozen = fm::freeze(cli::obtain_fm(cfg, devices));
    report::RunReport rep = cli::run(cfg, frozen, devices);
    report::emit_report(rep, dir);
    return rep;
}

Outcome determinism() {
    const cli::RunConfig cfg = small_config();
    const fs::path a = scratch("det/a"), b = scratch("det/b"), c = scratch("det/c");
    const report::RunReport ra = full_run(cfg, a);
    full_run(cfg, b);
    const bool same_csv = slurp(a / "rounds.csv") == slurp(b / "rounds.csv") && !slurp(a / "rounds.csv").empty();

    cli::RunConfig replay;
    cli::load_file(replay, a / "report.json");
    cli::validate(replay);
    const report::RunReport rc = full_run(replay, c);
    const bool same_metrics = rc.test.mae == ra.test.mae && rc.test.rmse == ra.test.rmse &&
                              slurp(c / "rounds.csv") == slurp(a / "rounds.csv");
    return {same_csv && same_metrics, std::string("rounds.csv ") + (same_csv ? "byte-identical" : "differs") +
                                          "; replay from echo test MAE " + fmt("%.17g", rc.test.mae) + " vs " +
                                          fmt("%.17g", ra.test.mae)};
}

Outcome comm_accounting(const Desk& d) {
    bool per_round = true;
    std::size_t checked = 0;
    for (const DeskRun& r : d.runs) {
        for (const auto& rec : r.report.rounds) {
            per_round = per_round &&
                        rec.bytes_up == rec.selected.size() * r.report.ledger.communicated * report::kBytesPerScalar;
            ++checked;
        }
    }
    // Same seed, same sampling: regular against metepfl.
    cli::RunConfig cfg = small_config();
    const auto devices = cli::load_devices(cfg);
    const fm::FrozenFM frozen = fm::freeze(cli::obtain_fm(cfg, devices));
    cfg.fed.algo = "metepfl";
    const report::RunReport me = cli::run(cfg, frozen, devices);
    cfg.fed.algo = "regular";
    const report::RunReport rg = cli::run(cfg, frozen, devices);
    const auto up_me = report::comm_ledger(me.rounds).bytes_up, up_rg = report::comm_ledger(rg.rounds).bytes_up;
    // bytes_rg / bytes_me == total / trainable, cross-multiplied to stay exact
    const bool ratio = up_me > 0 && up_rg * me.ledger.trainable == up_me * rg.ledger.total &&
                       rg.ledger.total == frozen.weights().parameter_count();
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "%zu round records exact; regular/metepfl bytes %llu/%llu = total/trainable %zu/%zu", checked,
                  static_cast<unsigned long long>(up_rg), static_cast<unsigned long long>(up_me), rg.ledger.total,
                  me.ledger.trainable);
    return {per_round && ratio, buf};
}

}  // namespace

int main() {
    log::set_min_level(log::Level::warn);
    int failed = 0;
    auto report_line = [&](int id, const char* name, const std::function<Outcome()>& fn) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::printf("[%s] %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
        std::fflush(stdout);
    };

    report_line(1, "gradient oracle", gradient_oracle);
    report_line(3, "aggregation oracles", aggregation_oracles);
    report_line(4, "fedavg weighted mean", fedavg_oracle);
    report_line(5, "shape ladder", shape_ladder);
    report_line(6, "parameter ledger ordering", ledger_ordering);
    report_line(9, "determinism", determinism);

    Desk desk;
    try {
        desk = run_desk();
    } catch (const std::exception& e) {
        std::printf("desk experiment aborted: %s\n", e.what());
    }
    const bool have_desk = !desk.runs.empty();
    auto needs_desk = [&](const std::function<Outcome(const Desk&)>& fn) {
        return [&, fn]() { return have_desk ? fn(desk) : Outcome{false, "desk experiment did not run"}; };
    };
    report_line(2, "frozen model seal", needs_desk(frozen_seal));
    report_line(7, "desk direction", needs_desk(desk_direction));
    report_line(8, "ablation direction", needs_desk(ablation_direction));
    report_line(10, "communication accounting", needs_desk(comm_accounting));

    fs::remove_all(fs::temp_directory_path() / ("pfl-acceptance-" + std::to_string(::getpid())));
    std::printf("%d of 10 criteria failed\n", failed);
    return failed;
}
