#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pfl/data/data.hpp"
#include "pfl/fedsim/learner.hpp"
#include "pfl/graphagg/graphagg.hpp"
#include "pfl/report/report.hpp"
#include "pfl/rng.hpp"

namespace pfl::fed {

enum class Aggregator { graph, fedavg, fedprox, fedatt, scaffold };

struct Algorithm {
    Mode mode = Mode::stp;
    Aggregator aggregator = Aggregator::graph;
};

// Maps an algorithm name onto (mode, aggregator). The plain baselines
// fedavg/fedprox/fedatt/scaffold train `base_mode`.
Algorithm resolve_algorithm(const std::string& name, Mode base_mode = Mode::stp);
std::string mode_name(Mode mode);
Mode parse_mode(const std::string& name);

enum class GraphOver { cached, selected };
enum class Broadcast { personal, global };

struct FedConfig {
    std::string algo = "metepfl";
    Mode base_mode = Mode::stp;
    std::size_t clients = 10;
    std::size_t rounds = 20;
    double fraction = 0.2;
    std::size_t local_epochs = 1;
    std::size_t batch = 16;
    double lr = 1e-3;
    double lambda = 0.01;
    std::uint64_t seed = 0;
    std::size_t patience = 5;  // 0 disables early stopping
    graphagg::SmoothingConfig graph;
    GraphOver graph_over = GraphOver::cached;
    Broadcast broadcast = Broadcast::personal;
    bool reinit_each_round = false;
    double fedatt_eps = 1.0;
    std::size_t eval_stride = 1;  // window stride for validation
    std::size_t test_stride = 1;
    std::size_t threads = 1;
    LearnerConfig learner;

    void validate() const;
};

struct ClientState {
    std::size_t id = 0;
    const data::DeviceData* data = nullptr;
    std::size_t n_k = 0;
    ParamSet params;
    ParamSet control;  // scaffold c_k
    long adam_steps = 0;
    std::size_t epochs_done = 0;
};

// One client per device, in device order. Throws ConfigError for N = 0 and
// DataError when there are fewer devices than N or a client has no windows.
std::vector<ClientState> partition_clients(const std::vector<data::DeviceData>& devices, std::size_t n);

// Uniform sample without replacement of max(1, round(fraction * N)) ids,
// returned sorted.
std::vector<std::size_t> sample_clients(Rng& rng, std::size_t n, double fraction);

struct LocalResult {
    double mean_loss = 0.0;
    std::size_t steps = 0;
    ParamSet control_delta;  // scaffold: c_k(new) - c_k
};

struct LocalContext {
    const Learner& learner;
    const ParamSet* anchor = nullptr;  // prox target; none on round 0
    double lambda = 0.0;
    std::size_t local_epochs = 1;
    std::size_t batch = 16;
    double lr = 1e-3;
    std::uint64_t seed = 0;  // stream for window order
    const ParamSet* server_control = nullptr;  // scaffold c; enables correction
};

// Adam on the client's own training windows starting from client.params.
// Non-finite losses propagate as NumericError.
LocalResult local_update(ClientState& client, const std::vector<Tensor>& windows, const LocalContext& ctx);

struct Upload {
    std::size_t client = 0;
    ParamSet params;
    double n_k = 1.0;
};

// Server step of the non-graph algorithms. Scaffold variates are handled by
// the run loop; here scaffold and fedprox reduce to the weighted mean.
ParamSet aggregate_baseline(Aggregator kind, const std::vector<Upload>& uploads, const ParamSet* prev_global,
                            double fedatt_eps = 1.0);

// Mean absolute and squared error on the denormalised target over the
// windows of each client, pooled.
report::Metrics evaluate_clients(const Learner& learner, const std::vector<ClientState>& clients,
                                 const std::vector<const ParamSet*>& params, bool test_split, std::size_t stride,
                                 std::size_t target_var, std::size_t threads);

report::RunReport run_federated(const FedConfig& cfg, const fm::FrozenFM& fm,
                                const std::vector<data::DeviceData>& devices);

report::ParamLedger ledger_for(const Learner& learner, const fm::FrozenFM& fm);

}  // namespace pfl::fed
