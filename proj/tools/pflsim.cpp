// pflsim: synthesize data, pretrain the base model, run federated prompt
// learning and inspect the results.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "json.hpp"
#include "pfl/cli/pipeline.hpp"
#include "pfl/errors.hpp"
#include "pfl/log.hpp"

using namespace pfl;
namespace fs = std::filesystem;

namespace {

struct ConfigArgs {
    std::string file;
    std::map<std::string, std::string> values;
    std::vector<std::pair<std::string, CLI::Option*>> options;
};

void add_config_options(CLI::App* app, ConfigArgs& args) {
    app->add_option("--config", args.file, "key = value file, or a report.json whose config echo is replayed");
    for (const cli::Field& f : cli::fields()) {
        CLI::Option* opt = app->add_option("--" + f.key, args.values[f.key], f.help);
        args.options.emplace_back(f.key, opt);
    }
}

cli::RunConfig resolve(const ConfigArgs& args) {
    cli::RunConfig cfg;
    if (!args.file.empty()) {
        cli::load_file(cfg, args.file);
    }
    for (const auto& [key, opt] : args.options) {
        if (opt->count() > 0) {
            cli::set_value(cfg, key, args.values.at(key));
        }
    }
    cli::validate(cfg);
    log::set_min_level(cfg.log_level == "debug" ? log::Level::debug
                       : cfg.log_level == "warn" ? log::Level::warn
                                                 : log::Level::info);
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
}

fs::path new_run_dir(const cli::RunConfig& cfg) {
    fs::path dir = cli::make_run_dir(cfg.out_dir, cfg.seed);
    write_text(dir / "config.txt", cli::echo_text(cfg));
    return dir;
}

std::string hex(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

int cmd_synth(const cli::RunConfig& cfg, const std::string& out) {
    const fs::path dir = out.empty() ? new_run_dir(cfg) / "data" : fs::path(out);
    data::save_csv(data::synthesize(cfg.synth), dir);
    std::printf("wrote %zu device series to %s\n", cfg.synth.devices, dir.c_str());
    return 0;
}

int cmd_pretrain(const cli::RunConfig& cfg) {
    const fs::path dir = new_run_dir(cfg);
    const auto devices = cli::load_devices(cfg);
    fm::PretrainResult res;
    fm::FMWeights w = cli::pretrain_fm(cfg, devices, &res);
    fm::save_ckpt(w, dir / "fm.ckpt");
    nlohmann::ordered_json j;
    j["epoch_train_loss"] = res.epoch_train_loss;
    j["final_val_loss"] = res.final_val_loss;
    j["parameters"] = w.parameter_count();
    j["checksum"] = hex(fm::weights_checksum(w));
    write_text(dir / "pretrain.json", j.dump(2) + "\n");
    std::printf("checkpoint %s (%zu parameters, validation loss %.6g)\n", (dir / "fm.ckpt").c_str(),
                w.parameter_count(), res.final_val_loss);
    return 0;
}

int cmd_run(const cli::RunConfig& cfg) {
    const fs::path dir = new_run_dir(cfg);
    const auto devices = cli::load_devices(cfg);
    bool inline_pretrained = false;
    fm::FMWeights w = cli::obtain_fm(cfg, devices, &inline_pretrained);
    if (inline_pretrained) {
        fm::save_ckpt(w, dir / "fm.ckpt");
    }
    const fm::FrozenFM frozen = fm::freeze(std::move(w));
    const report::RunReport rep = cli::run(cfg, frozen, devices);
    report::emit_report(rep, dir);
    std::printf("run %s\n", dir.c_str());
    std::printf("algo %s: %zu rounds, best round %zu, test MAE %.6g RMSE %.6g\n", rep.algo.c_str(), rep.rounds.size(),
                rep.best_round, rep.test.mae, rep.test.rmse);
    std::printf("trainable %zu of %zu parameters (%.4g%%)\n", rep.ledger.trainable, rep.ledger.total,
                rep.ledger.ratio);
    if (rep.fm_checksum_before != rep.fm_checksum_after) {
        throw NumericError("base model checksum changed during the run");
    }
    return 0;
}

int cmd_eval(cli::RunConfig cfg, const std::string& ckpt, const std::string& data_dir) {
    if (!ckpt.empty()) {
        cfg.fm_ckpt = ckpt;
    }
    if (!data_dir.empty()) {
        cfg.data_dir = data_dir;
    }
    if (cfg.fm_ckpt.empty()) {
        throw ConfigError("eval needs a checkpoint (--ckpt or fm_ckpt)");
    }
    const auto devices = cli::load_devices(cfg);
    const fm::FrozenFM frozen = fm::freeze(cli::obtain_fm(cfg, devices));
    const auto learner = fed::make_learner(fed::Mode::frozen, frozen, cfg.fed.learner);
    const auto clients = fed::partition_clients(devices, devices.size());
    const num::ParamSet none;
    const std::vector<const num::ParamSet*> params(clients.size(), &none);
    const report::Metrics m = fed::evaluate_clients(*learner, clients, params, true, cfg.fed.test_stride,
                                                    cfg.fed.learner.stp.target_var, cfg.fed.threads);
    const fs::path dir = new_run_dir(cfg);
    nlohmann::ordered_json j;
    j["checkpoint"] = cfg.fm_ckpt;
    j["devices"] = devices.size();
    j["test_mae"] = m.mae;
    j["test_rmse"] = m.rmse;
    write_text(dir / "eval.json", j.dump(2) + "\n");
    std::printf("frozen model on %zu devices: test MAE %.6g RMSE %.6g\n", devices.size(), m.mae, m.rmse);
    return 0;
}

int cmd_gradcheck(const cli::RunConfig& cfg) {
    const auto devices = cli::load_devices(cfg);
    fm::FMWeights w = cfg.fm_ckpt.empty() ? fm::init_fm(cfg.fm) : cli::obtain_fm(cfg, devices);
    const fm::FrozenFM frozen = fm::freeze(std::move(w));
    const num::GradCheckResult res = cli::prompt_gradcheck(cfg, frozen, devices.front().prompt_train.front());
    std::printf("checked %zu prompt coordinates\n", res.coordinates);
    std::printf("max rel. err %.3e (worst %s[%zu]: analytic %.9g, numeric %.9g)\n", res.max_rel_error,
                res.worst_parameter.c_str(), res.worst_index, res.worst_analytic, res.worst_numeric);
    if (!(res.max_rel_error < 1e-5)) {
        std::fprintf(stderr, "gradient check failed\n");
        return 3;
    }
    return 0;
}

int cmd_report(const std::string& run_dir) {
    const report::RunReport rep = report::read_report(run_dir);
    std::printf("algo %s, seed %llu\n", rep.algo.c_str(), static_cast<unsigned long long>(rep.seed));
    std::printf("%5s %10s %10s %10s %12s %12s\n", "round", "loss", "val_mae", "val_rmse", "bytes_up", "bytes_down");
    for (const auto& r : rep.rounds) {
        std::printf("%5zu %10.5g %10.5g %10.5g %12llu %12llu\n", r.round, r.train_loss, r.val_mae, r.val_rmse,
                    static_cast<unsigned long long>(r.bytes_up), static_cast<unsigned long long>(r.bytes_down));
    }
    const report::CommTotals comm = report::comm_ledger(rep.rounds);
    std::printf("best round %zu%s\n", rep.best_round, rep.early_stopped ? " (early stopped)" : "");
    std::printf("test MAE %.6g RMSE %.6g\n", rep.test.mae, rep.test.rmse);
    std::printf("parameters: total %zu, trainable %zu, communicated %zu, ratio %.4g%%\n", rep.ledger.total,
                rep.ledger.trainable, rep.ledger.communicated, rep.ledger.ratio);
    std::printf("traffic: %llu bytes up, %llu bytes down\n", static_cast<unsigned long long>(comm.bytes_up),
                static_cast<unsigned long long>(comm.bytes_down));
    std::printf("base model checksum %s -> %s\n", hex(rep.fm_checksum_before).c_str(),
                hex(rep.fm_checksum_after).c_str());
    for (const auto& note : rep.notes) {
        std::printf("note: %s\n", note.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated spatial-temporal prompt learning simulator"};
    app.require_subcommand(1);

    ConfigArgs synth_args, pretrain_args, run_args, eval_args, grad_args;
    std::string synth_out, eval_ckpt, eval_data, report_dir;

    CLI::App* synth = app.add_subcommand("synth", "write a synthetic multi-device dataset as CSV");
    add_config_options(synth, synth_args);
    synth->add_option("--out", synth_out, "output directory (default: <run dir>/data)");

    CLI::App* pretrain = app.add_subcommand("pretrain", "pretrain the base model and save a checkpoint");
    add_config_options(pretrain, pretrain_args);

    CLI::App* run = app.add_subcommand("run", "federated training and evaluation");
    add_config_options(run, run_args);

    CLI::App* eval = app.add_subcommand("eval", "test error of a frozen checkpoint without prompts");
    add_config_options(eval, eval_args);
    eval->add_option("--ckpt", eval_ckpt, "checkpoint to evaluate");
    eval->add_option("--data", eval_data, "CSV directory (default: data_dir or synthetic)");

    CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference check of the prompt gradients");
    add_config_options(grad, grad_args);

    CLI::App* rep = app.add_subcommand("report", "print a run report");
    rep->add_option("run_dir", report_dir, "run directory or report.json")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*synth) return cmd_synth(resolve(synth_args), synth_out);
        if (*pretrain) return cmd_pretrain(resolve(pretrain_args));
        if (*run) return cmd_run(resolve(run_args));
        if (*eval) return cmd_eval(resolve(eval_args), eval_ckpt, eval_data);
        if (*grad) return cmd_gradcheck(resolve(grad_args));
        if (*rep) return cmd_report(report_dir);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return 2;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    }
    return 0;
}
