#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "fu/dataset.hpp"
#include "fu/model.hpp"

namespace fu {

struct FederationConfig {
    ModelSpec model;
    std::size_t rounds = 30;
    std::size_t local_epochs = 2;
    double lr = 0.1;
    std::size_t batch_size = 64;
    std::uint64_t seed = 42;
    std::size_t history_interval = 1;
    double client_fraction = 1.0;

    void validate() const;
    /// Stable hash of every field, stored in history files.
    std::uint64_t fingerprint() const noexcept;
};

struct ClientUpdate {
    int client_id = 0;
    ParamVector delta;
    std::size_t sample_count = 0;

    bool operator==(const ClientUpdate&) const = default;
};

struct RoundRecord {
    std::uint32_t round_index = 0;
    ParamVector global_before;
    std::vector<ClientUpdate> updates; // ascending client_id

    bool operator==(const RoundRecord&) const = default;
};

struct HistoryStore {
    std::uint64_t config_fingerprint = 0;
    std::vector<RoundRecord> records; // strictly increasing round_index

    bool operator==(const HistoryStore&) const = default;
};

/// Simulated traffic: one model download and one upload per participant per round.
struct CommLedger {
    std::size_t rounds_executed = 0;
    std::size_t participant_rounds = 0; // sum of participants over executed rounds
    std::uint64_t upload_bytes = 0;
    std::uint64_t download_bytes = 0;
    double wall_time = 0.0; // seconds

    void charge_round(std::size_t participants, std::size_t param_count);
    void merge(const CommLedger& other);
    /// bytes == participant_rounds * param_count * 8 in both directions.
    bool consistent(std::size_t param_count) const noexcept;
};

/// Runs cfg.local_epochs of SGD from `global` on the client's data and returns
/// the parameter change. Returns nullopt for an empty client.
std::optional<ClientUpdate> local_update(const ParamVector& global, const ClientDataset& client,
                                         const FederationConfig& cfg, std::size_t round);

/// Sample-weighted mean of the deltas, summed in ascending client_id order so
/// the result does not depend on input order.
ParamVector fedavg_aggregate(std::span<const ClientUpdate> updates);

using RoundObserver = std::function<void(std::size_t round, const ParamVector& global_after)>;

struct RunOptions {
    bool record_history = true;
    RoundObserver observer; // called after every round
    std::size_t workers = 0; // 0: worker_count()
};

struct TrainingRun {
    ParamVector final_params;
    HistoryStore history;
    CommLedger ledger;
};

/// cfg.rounds rounds of client selection, local updates and FedAvg. Rounds
/// with round % history_interval == 0 are recorded. Bit-identical for any
/// worker count.
TrainingRun run_rounds(const ParamVector& init, std::span<const ClientDataset> clients,
                       const FederationConfig& cfg, const RunOptions& options = {});

/// Indices into `clients` of the participants of `round`: a seeded
/// ceil(fraction * n) sample of the nonempty clients, ascending.
std::vector<std::size_t> select_clients(std::span<const ClientDataset> clients, const FederationConfig& cfg,
                                        std::size_t round);

// History persistence ("FUHS" container, little-endian).
inline constexpr std::uint32_t kHistoryFormatVersion = 1;
std::vector<char> serialize_history(const HistoryStore& store);
HistoryStore deserialize_history(std::span<const char> bytes, const std::string& context = "history");
void save_history(const HistoryStore& store, const std::filesystem::path& path);
HistoryStore load_history(const std::filesystem::path& path);

} // namespace fu
