#include "pfl/report/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pfl/errors.hpp"

namespace pfl::report {

namespace {

using json = nlohmann::ordered_json;

void check_pair(std::span<const double> pred, std::span<const double> truth, const char* what) {
    if (pred.empty() || pred.size() != truth.size()) {
        throw MetricError(std::string(what) + ": need equal, non-empty inputs (got " + std::to_string(pred.size()) +
                          " and " + std::to_string(truth.size()) + ")");
    }
}

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json ledger_json(const ParamLedger& l) {
    return json{{"total", l.total}, {"trainable", l.trainable}, {"communicated", l.communicated}, {"ratio", l.ratio}};
}

}  // namespace

double mae(std::span<const double> pred, std::span<const double> truth) {
    check_pair(pred, truth, "mae");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        acc += std::abs(pred[i] - truth[i]);
    }
    return acc / static_cast<double>(pred.size());
}

double rmse(std::span<const double> pred, std::span<const double> truth) {
    check_pair(pred, truth, "rmse");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = pred[i] - truth[i];
        acc += e * e;
    }
    return std::sqrt(acc / static_cast<double>(pred.size()));
}

Metrics evaluate(std::span<const double> pred, std::span<const double> truth) {
    return Metrics{mae(pred, truth), rmse(pred, truth)};
}

ParamLedger param_ledger(std::size_t model_params, std::size_t extra_params, std::size_t trainable,
                         std::size_t communicated) {
    ParamLedger l;
    l.total = model_params + extra_params;
    l.trainable = trainable;
    l.communicated = communicated;
    if (l.total == 0 || trainable > l.total || communicated > trainable) {
        throw ContractError("param ledger: require communicated <= trainable <= total, total > 0");
    }
    l.ratio = static_cast<double>(communicated) / static_cast<double>(l.total) * 100.0;
    return l;
}

CommTotals comm_ledger(const std::vector<RoundRecord>& rounds) {
    CommTotals t;
    for (const RoundRecord& r : rounds) {
        t.bytes_up += r.bytes_up;
        t.bytes_down += r.bytes_down;
    }
    return t;
}

std::string rounds_csv(const std::vector<RoundRecord>& rounds) {
    std::ostringstream out;
    out << "round,selected,train_loss,val_mae,val_rmse,bytes_up,bytes_down,graph_reg\n";
    for (const RoundRecord& r : rounds) {
        out << r.round << ',';
        for (std::size_t i = 0; i < r.selected.size(); ++i) {
            out << (i ? ";" : "") << r.selected[i];
        }
        out << ',' << g17(r.train_loss) << ',' << g17(r.val_mae) << ',' << g17(r.val_rmse) << ',' << r.bytes_up
            << ',' << r.bytes_down << ',' << g17(r.graph_reg) << '\n';
    }
    return out.str();
}

void emit_report(const RunReport& report, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create report directory " + dir.string() + ": " + ec.message());
    }
    json config = json::object();
    for (const auto& [k, v] : report.config) {
        config[k] = v;
    }
    json rounds = json::array();
    for (const RoundRecord& r : report.rounds) {
        rounds.push_back(json{{"round", r.round},
                              {"selected", r.selected},
                              {"train_loss", r.train_loss},
                              {"val_mae", r.val_mae},
                              {"val_rmse", r.val_rmse},
                              {"bytes_up", r.bytes_up},
                              {"bytes_down", r.bytes_down},
                              {"graph_reg", r.graph_reg}});
    }
    const CommTotals comm = comm_ledger(report.rounds);
    json doc{{"algo", report.algo},
             {"seed", report.seed},
             {"test", {{"mae", report.test.mae}, {"rmse", report.test.rmse}}},
             {"best_round", report.best_round},
             {"early_stopped", report.early_stopped},
             {"rounds_run", report.rounds.size()},
             {"ledger", ledger_json(report.ledger)},
             {"comm", {{"bytes_up", comm.bytes_up}, {"bytes_down", comm.bytes_down}}},
             {"fm_checksum", {{"before", report.fm_checksum_before}, {"after", report.fm_checksum_after}}},
             {"notes", report.notes},
             {"config", config},
             {"rounds", rounds}};

    auto write = [&](const std::filesystem::path& path, const std::string& text) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << text;
        if (!out) {
            throw IoError("cannot write " + path.string());
        }
    };
    write(dir / "report.json", doc.dump(2) + "\n");
    write(dir / "rounds.csv", rounds_csv(report.rounds));
}

RunReport read_report(const std::filesystem::path& dir) {
    const auto path = std::filesystem::is_directory(dir) ? dir / "report.json" : dir;
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    json doc;
    try {
        doc = json::parse(in);
        RunReport r;
        r.algo = doc.at("algo").get<std::string>();
        r.seed = doc.at("seed").get<std::uint64_t>();
        r.test.mae = doc.at("test").at("mae").get<double>();
        r.test.rmse = doc.at("test").at("rmse").get<double>();
        r.best_round = doc.at("best_round").get<std::size_t>();
        r.early_stopped = doc.at("early_stopped").get<bool>();
        const json& l = doc.at("ledger");
        r.ledger.total = l.at("total").get<std::size_t>();
        r.ledger.trainable = l.at("trainable").get<std::size_t>();
        r.ledger.communicated = l.at("communicated").get<std::size_t>();
        r.ledger.ratio = l.at("ratio").get<double>();
        r.fm_checksum_before = doc.at("fm_checksum").at("before").get<std::uint64_t>();
        r.fm_checksum_after = doc.at("fm_checksum").at("after").get<std::uint64_t>();
        r.notes = doc.at("notes").get<std::vector<std::string>>();
        for (const auto& [k, v] : doc.at("config").items()) {
            r.config.emplace_back(k, v.get<std::string>());
        }
        for (const json& j : doc.at("rounds")) {
            RoundRecord rr;
            rr.round = j.at("round").get<std::size_t>();
            rr.selected = j.at("selected").get<std::vector<std::size_t>>();
            rr.train_loss = j.at("train_loss").get<double>();
            rr.val_mae = j.at("val_mae").get<double>();
            rr.val_rmse = j.at("val_rmse").get<double>();
            rr.bytes_up = j.at("bytes_up").get<std::uint64_t>();
            rr.bytes_down = j.at("bytes_down").get<std::uint64_t>();
            rr.graph_reg = j.at("graph_reg").get<double>();
            r.rounds.push_back(std::move(rr));
        }
        return r;
    } catch (const json::exception& e) {
        throw DataError("malformed report " + path.string() + ": " + e.what());
    }
}

}  // namespace pfl::report
