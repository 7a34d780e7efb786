#pragma once

// Experiment orchestration: JSON configuration, the client- and class-level
// benchmark pipelines, and result files.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fu/dataset.hpp"
#include "fu/fedsim.hpp"
#include "fu/metrics.hpp"
#include "fu/unlearn.hpp"

namespace fu {

enum class BenchmarkLevel { Client, Class };

struct DatasetSource {
    enum class Kind { Synthetic, Idx };
    Kind kind = Kind::Synthetic;
    std::string name = "synthetic";
    BlobParams blobs;
    std::size_t test_per_class = 50;
    std::filesystem::path train_images, train_labels, test_images, test_labels;
    std::size_t max_train_per_class = 0; // 0 keeps everything
    std::size_t max_test = 0;
};

struct AttackSettings {
    bool backdoor = true;
    std::optional<TriggerSpec> trigger; // unset: TriggerSpec::default_for(dim, k)
    double backdoor_fraction = 0.3;
    std::size_t watermark_size = 64; // 0 disables the watermark
    std::size_t watermark_replicas = 5;
    std::size_t top_k = 64;
};

struct ExperimentConfig {
    std::uint64_t seed = 42;
    BenchmarkLevel level = BenchmarkLevel::Client;
    DatasetSource dataset;
    std::size_t clients = 10;
    PartitionScheme scheme = IidScheme{};
    Arch arch = Arch::Mlp;
    std::size_t hidden = 64;
    FederationConfig federation; // model is filled in once the data is loaded
    AttackSettings attack;
    ForgetSpec forget = ForgetClient{0};
    std::vector<UnlearnMethod> methods{std::begin(kAllMethods), std::end(kAllMethods)};
    UnlearnOptions unlearn;
    std::filesystem::path output_dir = "results";

    /// Fully resolved configuration, defaults included.
    nlohmann::json to_json() const;
};

/// Strict parse: unknown keys, wrong types and out-of-range values raise
/// ConfigError naming the key. Relative paths resolve against `base_dir`.
ExperimentConfig parse_config_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
ExperimentConfig parse_config(const std::filesystem::path& path);

/// Everything the pipelines need before training starts.
struct PreparedData {
    Dataset train;
    Dataset test;
    std::vector<ClientDataset> clients; // after marker injection
    int marker_client = 0;              // carries the backdoor and watermark
    TriggerSpec trigger;
    Dataset triggered_test;
    WatermarkSet watermark;
    FederationConfig federation; // cfg.federation with the model resolved
};

PreparedData prepare_data(const ExperimentConfig& cfg);

struct TrainedFederation {
    TrainingRun run;
    /// Loss of every marker-client sample after each round.
    std::vector<std::vector<double>> loss_traces;
};

TrainedFederation train_federation(const PreparedData& data);

struct BenchmarkTable {
    BenchmarkLevel level = BenchmarkLevel::Client;
    std::vector<std::string> columns; // metric columns after "method"
    std::vector<MetricReport> rows;   // "original" first, then "retrain", then the rest
    std::string config_hash;
    std::string timestamp;
    nlohmann::json config_echo;

    const MetricReport& row(const std::string& method) const;
};

std::vector<std::string> metric_columns(BenchmarkLevel level);

BenchmarkTable run_client_level_benchmark(const ExperimentConfig& cfg);
BenchmarkTable run_class_level_benchmark(const ExperimentConfig& cfg);
BenchmarkTable run_benchmark(const ExperimentConfig& cfg);

std::string render_csv(const BenchmarkTable& table);
nlohmann::json render_json(const BenchmarkTable& table);
/// Writes results.csv, results.json and config_echo.json, creating `dir`.
void emit_report(const BenchmarkTable& table, const std::filesystem::path& dir);

std::string config_hash(const nlohmann::json& echo);

} // namespace fu
