#include "fu/fedsim.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "fu/error.hpp"
#include "fu/parallel.hpp"
#include "fu/rng.hpp"

namespace fu {

void FederationConfig::validate() const {
    model.validate();
    if (rounds < 1) throw InputError("rounds must be at least 1");
    if (local_epochs < 1) throw InputError("local_epochs must be at least 1");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw InputError("lr must be positive");
    if (batch_size < 1) throw InputError("batch_size must be at least 1");
    if (history_interval < 1) throw InputError("history_interval must be at least 1");
    if (!(client_fraction > 0.0 && client_fraction <= 1.0)) throw InputError("client_fraction must lie in (0,1]");
}

std::uint64_t FederationConfig::fingerprint() const noexcept {
    return derive_seed(seed, {static_cast<std::uint64_t>(model.arch), model.input_dim, model.hidden,
                              model.num_classes, rounds, local_epochs, std::bit_cast<std::uint64_t>(lr),
                              batch_size, history_interval, std::bit_cast<std::uint64_t>(client_fraction)});
}

void CommLedger::charge_round(std::size_t participants, std::size_t param_count) {
    const std::uint64_t bytes = static_cast<std::uint64_t>(participants) * param_count * sizeof(double);
    ++rounds_executed;
    participant_rounds += participants;
    upload_bytes += bytes;
    download_bytes += bytes;
}

void CommLedger::merge(const CommLedger& other) {
    rounds_executed += other.rounds_executed;
    participant_rounds += other.participant_rounds;
    upload_bytes += other.upload_bytes;
    download_bytes += other.download_bytes;
    wall_time += other.wall_time;
}

bool CommLedger::consistent(std::size_t param_count) const noexcept {
    const std::uint64_t expected = static_cast<std::uint64_t>(participant_rounds) * param_count * sizeof(double);
    return upload_bytes == expected && download_bytes == expected;
}

std::optional<ClientUpdate> local_update(const ParamVector& global, const ClientDataset& client,
                                         const FederationConfig& cfg, std::size_t round) {
    if (client.data.empty()) return std::nullopt;
    const std::uint64_t base = derive_seed(cfg.seed, {stream::kLocalTraining,
                                                      static_cast<std::uint64_t>(client.client_id), round});
    const Batch data = client.data.batch();
    ParamVector local = global;
    for (std::size_t e = 0; e < cfg.local_epochs; ++e)
        local = sgd_epoch(local, data, cfg.lr, cfg.batch_size, derive_seed(base, {e}));
    return ClientUpdate{client.client_id, local - global, client.data.size()};
}

ParamVector fedavg_aggregate(std::span<const ClientUpdate> updates) {
    if (updates.empty()) throw InputError("nothing to aggregate");
    std::vector<const ClientUpdate*> ordered;
    ordered.reserve(updates.size());
    std::size_t total = 0;
    for (const auto& u : updates) {
        ordered.push_back(&u);
        total += u.sample_count;
    }
    if (total == 0) throw InputError("aggregate weights sum to zero");
    std::sort(ordered.begin(), ordered.end(),
              [](const ClientUpdate* a, const ClientUpdate* b) { return a->client_id < b->client_id; });
    for (std::size_t i = 1; i < ordered.size(); ++i)
        if (ordered[i]->client_id == ordered[i - 1]->client_id)
            throw InputError("duplicate update from client " + std::to_string(ordered[i]->client_id));

    ParamVector out(ordered.front()->delta.spec);
    for (const ClientUpdate* u : ordered)
        axpy(static_cast<double>(u->sample_count) / static_cast<double>(total), u->delta, out);
    return out;
}

std::vector<std::size_t> select_clients(std::span<const ClientDataset> clients, const FederationConfig& cfg,
                                        std::size_t round) {
    std::vector<std::size_t> live;
    for (std::size_t i = 0; i < clients.size(); ++i)
        if (!clients[i].data.empty()) live.push_back(i);
    if (live.empty()) return live;

    auto want = static_cast<std::size_t>(std::ceil(cfg.client_fraction * static_cast<double>(live.size()) - 1e-9));
    want = std::clamp<std::size_t>(want, 1, live.size());
    if (want == live.size()) return live;

    Engine eng(derive_seed(cfg.seed, {stream::kClientSelection, round}));
    std::shuffle(live.begin(), live.end(), eng);
    live.resize(want);
    std::sort(live.begin(), live.end());
    return live;
}

TrainingRun run_rounds(const ParamVector& init, std::span<const ClientDataset> clients,
                       const FederationConfig& cfg, const RunOptions& options) {
    const auto start = std::chrono::steady_clock::now();
    if (init.spec != cfg.model) throw InputError("initial parameters do not match the configured model");
    TrainingRun run{init, {cfg.fingerprint(), {}}, {}};
    if (cfg.rounds == 0) return run;
    cfg.validate();

    bool any = false;
    for (const auto& c : clients) {
        if (c.data.empty()) continue;
        if (c.data.dim() != cfg.model.input_dim)
            throw InputError("client " + std::to_string(c.client_id) + " feature dimension does not match model");
        any = true;
    }
    if (!any) throw InputError("every client is empty");

    const std::size_t workers = options.workers ? options.workers : worker_count();
    ParamVector& theta = run.final_params;
    for (std::size_t round = 0; round < cfg.rounds; ++round) {
        const auto chosen = select_clients(clients, cfg, round);
        std::vector<std::optional<ClientUpdate>> slots(chosen.size());
        parallel_for(
            chosen.size(), [&](std::size_t i) { slots[i] = local_update(theta, clients[chosen[i]], cfg, round); },
            workers);

        std::vector<ClientUpdate> updates;
        updates.reserve(slots.size());
        for (auto& s : slots) updates.push_back(std::move(*s));
        const ParamVector step = fedavg_aggregate(updates);

        if (options.record_history && round % cfg.history_interval == 0) {
            std::sort(updates.begin(), updates.end(),
                      [](const ClientUpdate& a, const ClientUpdate& b) { return a.client_id < b.client_id; });
            run.history.records.push_back({static_cast<std::uint32_t>(round), theta, std::move(updates)});
        }
        axpy(1.0, step, theta);
        run.ledger.charge_round(chosen.size(), cfg.model.param_count());
        if (options.observer) options.observer(round, theta);
    }
    run.ledger.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return run;
}

} // namespace fu
