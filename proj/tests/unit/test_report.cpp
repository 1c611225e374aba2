#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "pfl/errors.hpp"
#include "pfl/report/report.hpp"
#include "pfl/rng.hpp"

using namespace pfl;
using namespace pfl::report;

TEST_CASE("mae and rmse") {
    std::vector<double> pred{1, 2}, truth{2, 4};
    CHECK(mae(pred, truth) == 1.5);
    CHECK(rmse(pred, truth) == doctest::Approx(std::sqrt(2.5)).epsilon(1e-15));
    CHECK(rmse(pred, truth) == doctest::Approx(1.58114).epsilon(1e-5));
    CHECK(mae(pred, pred) == 0.0);
    CHECK(rmse(pred, pred) == 0.0);
    CHECK_THROWS_AS(mae({}, {}), MetricError);
    CHECK_THROWS_AS(rmse(pred, std::vector<double>{1}), MetricError);

    Rng rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> a(1 + rng.below(20)), b(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = rng.normal();
            b[i] = rng.normal();
        }
        Metrics m = evaluate(a, b);
        CHECK(m.rmse >= m.mae - 1e-15);
        CHECK(m.mae >= 0.0);
    }
}

TEST_CASE("parameter ledger") {
    ParamLedger regular = param_ledger(1000, 0, 1000, 1000);
    CHECK(regular.ratio == 100.0);
    ParamLedger prompts = param_ledger(1000, 50, 50, 50);
    CHECK(prompts.total == 1050);
    CHECK(prompts.frozen() == 1000);
    CHECK(prompts.frozen() + prompts.trainable == prompts.total);
    ParamLedger frozen = param_ledger(1000, 0, 0, 0);
    CHECK(frozen.trainable == 0);
    CHECK(frozen.total == 1000);
    CHECK_THROWS_AS(param_ledger(10, 0, 11, 11), ContractError);
    CHECK_THROWS_AS(param_ledger(10, 0, 5, 6), ContractError);
}

TEST_CASE("communication totals") {
    RoundRecord r;
    r.selected = {0, 1};
    r.bytes_up = 2 * 1000 * kBytesPerScalar;
    CHECK(r.bytes_up == 16000);
    CommTotals t = comm_ledger({r, r});
    CHECK(t.bytes_up == 32000);
}

TEST_CASE("emit then read") {
    RunReport rep;
    rep.algo = "metepfl";
    rep.seed = 42;
    rep.config = {{"algo", "metepfl"}, {"rounds", "2"}};
    for (std::size_t i = 0; i < 2; ++i) {
        RoundRecord r;
        r.round = i;
        r.selected = {i, i + 3};
        r.train_loss = 0.1 / (i + 1);
        r.val_mae = 1.0 / 3.0 + i;
        r.val_rmse = std::sqrt(2.0) + i;
        r.bytes_up = 800;
        r.bytes_down = 800;
        r.graph_reg = 1e-17 * (i + 1);
        rep.rounds.push_back(r);
    }
    rep.test = {0.123456789012345678, 0.2};
    rep.ledger = param_ledger(100, 10, 10, 10);
    rep.fm_checksum_before = rep.fm_checksum_after = 0xfedcba9876543210ULL;
    rep.notes = {"client 3 failed in round 1"};

    auto dir = std::filesystem::temp_directory_path() / "pfl_report_test";
    std::filesystem::remove_all(dir);
    emit_report(rep, dir);
    RunReport back = read_report(dir);
    CHECK(back.algo == rep.algo);
    CHECK(back.seed == 42);
    CHECK(back.config == rep.config);
    CHECK(back.test.mae == rep.test.mae);
    CHECK(back.ledger.ratio == rep.ledger.ratio);
    CHECK(back.fm_checksum_after == rep.fm_checksum_after);
    REQUIRE(back.rounds.size() == 2);
    CHECK(back.rounds[1].val_mae == rep.rounds[1].val_mae);
    CHECK(back.rounds[1].selected == rep.rounds[1].selected);
    CHECK(back.notes == rep.notes);

    std::ifstream csv(dir / "rounds.csv");
    std::stringstream text;
    text << csv.rdbuf();
    CHECK(text.str() == rounds_csv(rep.rounds));
    CHECK(text.str().rfind("round,selected,train_loss,val_mae,val_rmse,bytes_up,bytes_down,graph_reg\n", 0) == 0);
    CHECK(text.str().find("1;4,") != std::string::npos);
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(read_report(dir), IoError);
}
