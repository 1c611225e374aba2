#include "pfl/fedsim/fedsim.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <thread>

#include "pfl/errors.hpp"
#include "pfl/log.hpp"
#include "pfl/numerics/adam.hpp"

namespace pfl::fed {

namespace num = pfl::num;
using num::Parameter;

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` threads. Work is split by
// index, so results do not depend on the thread count. The first exception
// (lowest index) is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < n; i += threads) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) {
        th.join();
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

void copy_values(ParamSet& dst, const ParamSet& src) {
    if (!dst.same_layout(src)) {
        throw ContractError("parameter layouts differ between client and server");
    }
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst.items()[i].value = src.items()[i].value;
    }
}

ParamSet zeros_like(const ParamSet& s) {
    ParamSet out = s;
    for (Parameter& p : out.items()) {
        p.value.fill(0.0);
        p.grad = Tensor();
        p.reset_optimizer();
    }
    return out;
}

// Uploads carry values only.
ParamSet strip(const ParamSet& s) {
    ParamSet out = s;
    for (Parameter& p : out.items()) {
        p.grad = Tensor();
        p.reset_optimizer();
    }
    return out;
}

ParamSet weighted_mean(const std::vector<const ParamSet*>& sets, const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) {
        total += w;
    }
    if (!(total > 0.0)) {
        throw AggregationError("aggregation weights sum to zero");
    }
    ParamSet out = strip(*sets.front());
    for (std::size_t t = 0; t < out.size(); ++t) {
        Tensor& dst = out.items()[t].value;
        for (std::size_t e = 0; e < dst.size(); ++e) {
            const double base = sets[0]->items()[t].value[e];
            double shift = 0.0;
            for (std::size_t k = 1; k < sets.size(); ++k) {
                shift += weights[k] / total * (sets[k]->items()[t].value[e] - base);
            }
            dst[e] = base + shift;
        }
    }
    return out;
}

std::string join_ids(const std::vector<std::size_t>& ids) {
    std::string s;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        s += (i ? "," : "") + std::to_string(ids[i]);
    }
    return s;
}

}  // namespace

Algorithm resolve_algorithm(const std::string& name, Mode base_mode) {
    if (name == "metepfl") return {Mode::stp, Aggregator::graph};
    if (name == "metepfl_fedavg") return {Mode::stp, Aggregator::fedavg};
    if (name == "fedavg") return {base_mode, Aggregator::fedavg};
    if (name == "fedprox") return {base_mode, Aggregator::fedprox};
    if (name == "fedatt") return {base_mode, Aggregator::fedatt};
    if (name == "scaffold") return {base_mode, Aggregator::scaffold};
    if (name == "promptfl") return {Mode::promptfl, Aggregator::fedavg};
    if (name == "finetune") return {Mode::finetune, Aggregator::fedavg};
    if (name == "regular") return {Mode::regular, Aggregator::fedavg};
    if (name == "frozen") return {Mode::frozen, Aggregator::fedavg};
    throw ConfigError("unknown algo '" + name +
                      "' (metepfl, metepfl_fedavg, fedavg, fedprox, fedatt, scaffold, promptfl, finetune, regular, "
                      "frozen)");
}

std::string mode_name(Mode mode) {
    switch (mode) {
        case Mode::stp: return "stp";
        case Mode::promptfl: return "promptfl";
        case Mode::finetune: return "finetune";
        case Mode::regular: return "regular";
        case Mode::frozen: return "frozen";
    }
    return "?";
}

Mode parse_mode(const std::string& name) {
    for (Mode m : {Mode::stp, Mode::promptfl, Mode::finetune, Mode::regular, Mode::frozen}) {
        if (mode_name(m) == name) {
            return m;
        }
    }
    throw ConfigError("unknown mode '" + name + "'");
}

void FedConfig::validate() const {
    resolve_algorithm(algo, base_mode);
    if (clients == 0) throw ConfigError("clients must be at least 1");
    if (rounds == 0) throw ConfigError("rounds must be at least 1");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("fraction must lie in (0, 1]");
    if (local_epochs == 0) throw ConfigError("local_epochs must be at least 1");
    if (batch == 0) throw ConfigError("batch must be at least 1");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
    if (eval_stride == 0 || test_stride == 0) throw ConfigError("eval strides must be at least 1");
    if (!(fedatt_eps > 0.0 && fedatt_eps <= 1.0)) throw ConfigError("fedatt_eps must lie in (0, 1]");
    graph.validate();
}

std::vector<ClientState> partition_clients(const std::vector<data::DeviceData>& devices, std::size_t n) {
    if (n == 0) {
        throw ConfigError("partition: N must be at least 1");
    }
    if (devices.size() < n) {
        throw DataError("partition: " + std::to_string(devices.size()) + " device series for " + std::to_string(n) +
                        " clients");
    }
    std::vector<ClientState> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i].id = i;
        out[i].data = &devices[i];
        out[i].n_k = devices[i].prompt_train.size();
        if (out[i].n_k == 0) {
            throw DataError("partition: device " + devices[i].id + " has no training windows");
        }
    }
    return out;
}

std::vector<std::size_t> sample_clients(Rng& rng, std::size_t n, double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw ConfigError("sample: fraction must lie in (0, 1]");
    }
    const auto want = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    const std::size_t size = std::clamp<std::size_t>(want, 1, n);
    std::vector<std::size_t> ids(n);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    for (std::size_t i = 0; i < size; ++i) {
        std::swap(ids[i], ids[i + rng.below(n - i)]);
    }
    ids.resize(size);
    std::sort(ids.begin(), ids.end());
    return ids;
}

LocalResult local_update(ClientState& client, const std::vector<Tensor>& windows, const LocalContext& ctx) {
    if (windows.empty()) {
        throw DataError("local_update: client " + std::to_string(client.id) + " has no windows");
    }
    LocalResult res;
    const ParamSet start = strip(client.params);
    auto params = client.params.pointers();
    num::AdamConfig adam;
    adam.lr = ctx.lr;
    const bool scaffold = ctx.server_control != nullptr;
    if (scaffold && client.control.empty()) {
        client.control = zeros_like(client.params);
    }

    double loss_sum = 0.0;
    std::size_t seen = 0;
    std::vector<std::size_t> order(windows.size());
    for (std::size_t e = 0; e < ctx.local_epochs; ++e) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(ctx.seed, "epoch/" + std::to_string(e));
        rng.shuffle(order);
        for (std::size_t b = 0; b < order.size(); b += ctx.batch) {
            const std::size_t stop = std::min(order.size(), b + ctx.batch);
            client.params.zero_grad();
            const double weight = 1.0 / static_cast<double>(stop - b);
            for (std::size_t j = b; j < stop; ++j) {
                const double loss = ctx.learner.accumulate(client.params, windows[order[j]], ctx.anchor, ctx.lambda,
                                                           client.epochs_done, weight);
                if (!std::isfinite(loss)) {
                    throw NumericError("client " + std::to_string(client.id) + ": non-finite loss");
                }
                loss_sum += loss;
                ++seen;
            }
            if (scaffold) {
                for (std::size_t t = 0; t < client.params.size(); ++t) {
                    Parameter& p = client.params.items()[t];
                    const Tensor& c = ctx.server_control->items()[t].value;
                    const Tensor& ck = client.control.items()[t].value;
                    for (std::size_t i = 0; i < p.size(); ++i) {
                        p.grad[i] += c[i] - ck[i];
                    }
                }
            }
            num::adam_step(params, adam, ++client.adam_steps);
            ++res.steps;
        }
        ++client.epochs_done;
    }
    res.mean_loss = loss_sum / static_cast<double>(seen);

    if (scaffold) {
        // c_k+ = c_k - c + (x - y) / (K lr)
        res.control_delta = zeros_like(client.params);
        const double scale = 1.0 / (static_cast<double>(res.steps) * ctx.lr);
        for (std::size_t t = 0; t < client.params.size(); ++t) {
            Tensor& ck = client.control.items()[t].value;
            const Tensor& c = ctx.server_control->items()[t].value;
            const Tensor& x = start.items()[t].value;
            const Tensor& y = client.params.items()[t].value;
            Tensor& delta = res.control_delta.items()[t].value;
            for (std::size_t i = 0; i < ck.size(); ++i) {
                const double next = ck[i] - c[i] + (x[i] - y[i]) * scale;
                delta[i] = next - ck[i];
                ck[i] = next;
            }
        }
    }
    return res;
}

ParamSet aggregate_baseline(Aggregator kind, const std::vector<Upload>& uploads, const ParamSet* prev_global,
                            double fedatt_eps) {
    if (uploads.empty()) {
        throw AggregationError("aggregate: no uploads");
    }
    std::vector<const ParamSet*> sets;
    std::vector<double> weights;
    for (const Upload& u : uploads) {
        if (!u.params.same_layout(uploads.front().params)) {
            throw AggregationError("aggregate: uploads differ in layout");
        }
        if (!(u.n_k > 0.0)) {
            throw AggregationError("aggregate: client weight must be positive");
        }
        sets.push_back(&u.params);
        weights.push_back(u.n_k);
    }
    if (kind == Aggregator::graph) {
        throw ContractError("aggregate_baseline: graph aggregation is handled by graphagg");
    }
    if (kind != Aggregator::fedatt || prev_global == nullptr) {
        return weighted_mean(sets, weights);
    }
    // Per tensor: softmax over negative distances to the previous global.
    ParamSet out = strip(*prev_global);
    for (std::size_t t = 0; t < out.size(); ++t) {
        std::vector<double> logits;
        for (const ParamSet* s : sets) {
            logits.push_back(-std::sqrt(num::squared_distance(s->items()[t].value, prev_global->items()[t].value)));
        }
        const double top = *std::max_element(logits.begin(), logits.end());
        std::vector<double> w;
        for (double l : logits) {
            w.push_back(std::exp(l - top));
        }
        const double total = std::accumulate(w.begin(), w.end(), 0.0);
        Tensor& dst = out.items()[t].value;
        for (std::size_t e = 0; e < dst.size(); ++e) {
            const double base = sets[0]->items()[t].value[e];
            double shift = 0.0;
            for (std::size_t k = 1; k < sets.size(); ++k) {
                shift += w[k] / total * (sets[k]->items()[t].value[e] - base);
            }
            const double mean = base + shift;
            dst[e] = fedatt_eps == 1.0 ? mean : dst[e] + fedatt_eps * (mean - dst[e]);
        }
    }
    return out;
}

report::Metrics evaluate_clients(const Learner& learner, const std::vector<ClientState>& clients,
                                 const std::vector<const ParamSet*>& params, bool test_split, std::size_t stride,
                                 std::size_t target_var, std::size_t threads) {
    struct Sums {
        double abs = 0.0, sq = 0.0;
        std::size_t count = 0;
    };
    std::vector<Sums> sums(clients.size());
    parallel_for(clients.size(), threads, [&](std::size_t i) {
        const data::DeviceData& d = *clients[i].data;
        const auto& windows = test_split ? d.test : d.val;
        for (std::size_t w = 0; w < windows.size(); w += stride) {
            const Tensor& win = windows[w];
            Tensor pred = learner.predict(*params[i], win);
            const std::size_t k = win.rows() - pred.rows();
            for (std::size_t r = 0; r < pred.rows(); ++r) {
                const double p = d.stats.denormalize(pred(r, 0), target_var);
                const double t = d.stats.denormalize(win(k + r, target_var), target_var);
                sums[i].abs += std::abs(p - t);
                sums[i].sq += (p - t) * (p - t);
                ++sums[i].count;
            }
        }
    });
    Sums total;
    for (const Sums& s : sums) {
        total.abs += s.abs;
        total.sq += s.sq;
        total.count += s.count;
    }
    if (total.count == 0) {
        throw MetricError(std::string("evaluation: no ") + (test_split ? "test" : "validation") + " windows");
    }
    return {total.abs / static_cast<double>(total.count), std::sqrt(total.sq / static_cast<double>(total.count))};
}

report::ParamLedger ledger_for(const Learner& learner, const fm::FrozenFM& fm) {
    const std::size_t trainable = learner.initial_params().trainable_scalars();
    return report::param_ledger(fm.weights().parameter_count(), learner.extra_params(), trainable, trainable);
}

report::RunReport run_federated(const FedConfig& cfg, const fm::FrozenFM& fm,
                                const std::vector<data::DeviceData>& devices) {
    cfg.validate();
    const Algorithm alg = resolve_algorithm(cfg.algo, cfg.base_mode);
    const auto learner = make_learner(alg.mode, fm, cfg.learner);
    const std::size_t tv = cfg.learner.stp.target_var;
    std::vector<ClientState> clients = partition_clients(devices, cfg.clients);
    const std::size_t n = clients.size();

    report::RunReport rep;
    rep.algo = cfg.algo;
    rep.seed = cfg.seed;
    rep.ledger = ledger_for(*learner, fm);
    rep.fm_checksum_before = fm.seal();

    const ParamSet init = learner->initial_params();
    if (init.empty()) {
        std::vector<const ParamSet*> none(n, &init);
        rep.test = evaluate_clients(*learner, clients, none, true, cfg.test_stride, tv, cfg.threads);
        rep.fm_checksum_after = fm::weights_checksum(fm.weights());
        return rep;
    }

    const bool graph = alg.aggregator == Aggregator::graph;
    const bool scaffold = alg.aggregator == Aggregator::scaffold;
    const bool personal = graph && cfg.broadcast == Broadcast::personal;
    const double lambda =
        (alg.mode == Mode::stp || alg.aggregator == Aggregator::fedprox) ? cfg.lambda : 0.0;
    const std::uint64_t scalars = init.trainable_scalars();
    const std::uint64_t wire = scalars * report::kBytesPerScalar * (scaffold ? 2 : 1);

    for (ClientState& c : clients) {
        c.params = init;
    }
    ParamSet global = init;
    bool have_global = false;
    ParamSet server_control = zeros_like(init);
    std::vector<std::optional<ParamSet>> smoothed(n);
    std::vector<std::optional<Upload>> cache(n);

    auto eval_params = [&] {
        std::vector<const ParamSet*> out(n, &global);
        if (personal) {
            for (std::size_t i = 0; i < n; ++i) {
                if (smoothed[i]) {
                    out[i] = &*smoothed[i];
                }
            }
        }
        return out;
    };

    double best = std::numeric_limits<double>::infinity();
    std::vector<ParamSet> best_params;
    std::size_t since_best = 0;

    for (std::size_t t = 0; t < cfg.rounds; ++t) {
        Rng sampler(cfg.seed, "round/" + std::to_string(t) + "/sample");
        const std::vector<std::size_t> selected = sample_clients(sampler, n, cfg.fraction);

        struct Outcome {
            bool ok = false;
            LocalResult result;
            std::string error;
        };
        std::vector<Outcome> outcomes(selected.size());
        parallel_for(selected.size(), cfg.threads, [&](std::size_t s) {
            ClientState& c = clients[selected[s]];
            const ParamSet& start = cfg.reinit_each_round ? init
                                    : (personal && smoothed[c.id])  ? *smoothed[c.id]
                                                                    : global;
            copy_values(c.params, start);
            LocalContext ctx{*learner};
            ctx.anchor = have_global && lambda > 0.0 ? &global : nullptr;
            ctx.lambda = lambda;
            ctx.local_epochs = cfg.local_epochs;
            ctx.batch = cfg.batch;
            ctx.lr = cfg.lr;
            ctx.seed = derive_seed(cfg.seed, "client/" + std::to_string(c.id) + "/round/" + std::to_string(t));
            ctx.server_control = scaffold ? &server_control : nullptr;
            try {
                outcomes[s].result = local_update(c, c.data->prompt_train, ctx);
                outcomes[s].ok = true;
            } catch (const NumericError& e) {
                copy_values(c.params, start);
                outcomes[s].error = e.what();
            }
        });

        report::RoundRecord rec;
        rec.round = t;
        rec.selected = selected;
        rec.bytes_down = wire * selected.size();
        std::vector<Upload> uploads;
        std::vector<const ParamSet*> control_deltas;
        double loss_sum = 0.0;
        for (std::size_t s = 0; s < selected.size(); ++s) {
            const ClientState& c = clients[selected[s]];
            if (!outcomes[s].ok) {
                const std::string note = "round " + std::to_string(t) + ": client " + std::to_string(c.id) +
                                         " failed and was excluded (" + outcomes[s].error + ")";
                log::warn(note);
                rep.notes.push_back(note);
                continue;
            }
            uploads.push_back(Upload{c.id, strip(c.params), static_cast<double>(c.n_k)});
            if (scaffold) {
                control_deltas.push_back(&outcomes[s].result.control_delta);
            }
            loss_sum += outcomes[s].result.mean_loss;
            rec.bytes_up += wire;
        }
        rec.train_loss = uploads.empty() ? 0.0 : loss_sum / static_cast<double>(uploads.size());

        if (!uploads.empty()) {
            if (graph) {
                std::vector<const Upload*> pool;
                if (cfg.graph_over == GraphOver::cached) {
                    for (const Upload& u : uploads) {
                        cache[u.client] = u;
                    }
                    for (const auto& c : cache) {
                        if (c) {
                            pool.push_back(&*c);
                        }
                    }
                } else {
                    for (const Upload& u : uploads) {
                        pool.push_back(&u);
                    }
                }
                std::vector<ParamSet> stacks;
                std::vector<double> weights;
                for (const Upload* u : pool) {
                    stacks.push_back(u->params);
                    weights.push_back(u->n_k);
                }
                graphagg::GraphAggregate agg =
                    graphagg::graph_aggregate(stacks, weights, cfg.graph, learner->similarity_exclude());
                for (std::size_t i = 0; i < pool.size(); ++i) {
                    smoothed[pool[i]->client] = std::move(agg.smoothed[i]);
                }
                global = std::move(agg.global);
                rec.graph_reg = agg.regularizer;
                std::size_t edges = 0;
                for (std::size_t i = 0; i < pool.size(); ++i) {
                    for (std::size_t j = 0; j < pool.size(); ++j) {
                        edges += (i != j && agg.adjacency[i][j] > 0.0) ? 1 : 0;
                    }
                }
                log::debug("round " + std::to_string(t) + " graph: " + std::to_string(edges / 2) + " edges over " +
                           std::to_string(pool.size()) + " clients");
            } else {
                global = aggregate_baseline(alg.aggregator, uploads, have_global ? &global : nullptr, cfg.fedatt_eps);
                if (scaffold) {
                    // c += |S|/N * mean(delta c_k)
                    const double share = static_cast<double>(control_deltas.size()) / static_cast<double>(n);
                    for (std::size_t ti = 0; ti < server_control.size(); ++ti) {
                        Tensor& c = server_control.items()[ti].value;
                        for (std::size_t e = 0; e < c.size(); ++e) {
                            double acc = 0.0;
                            for (const ParamSet* d : control_deltas) {
                                acc += d->items()[ti].value[e];
                            }
                            c[e] += share * acc / static_cast<double>(control_deltas.size());
                        }
                    }
                }
            }
            have_global = true;
        }

        const auto current = eval_params();
        const report::Metrics val = evaluate_clients(*learner, clients, current, false, cfg.eval_stride, tv, cfg.threads);
        rec.val_mae = val.mae;
        rec.val_rmse = val.rmse;
        rep.rounds.push_back(rec);
        log::debug("round " + std::to_string(t) + " selected [" + join_ids(selected) + "] val_mae " +
                   std::to_string(val.mae));

        if (val.mae < best) {
            best = val.mae;
            rep.best_round = t;
            since_best = 0;
            best_params.clear();
            for (const ParamSet* p : current) {
                best_params.push_back(*p);
            }
        } else if (++since_best >= cfg.patience && cfg.patience > 0) {
            rep.early_stopped = true;
            break;
        }
    }

    std::vector<const ParamSet*> snapshot;
    for (const ParamSet& p : best_params) {
        snapshot.push_back(&p);
    }
    rep.test = evaluate_clients(*learner, clients, snapshot, true, cfg.test_stride, tv, cfg.threads);
    rep.fm_checksum_after = fm::weights_checksum(fm.weights());
    return rep;
}

}  // namespace pfl::fed
