// fedunlearn: command-line front end for the federated unlearning simulator.
//
//   fedunlearn gen-data  --out DIR [--classes K --dim D --per-class M --spread S --seed N]
//   fedunlearn train     --config FILE
//   fedunlearn unlearn   --config FILE --method NAME
//   fedunlearn evaluate  --model FILE --reference FILE --config FILE
//   fedunlearn benchmark --config FILE [--level client|class]
//
// Exit codes: 0 success, 2 config error, 3 data/format error, 4 runtime error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "fu/binary_io.hpp"
#include "fu/error.hpp"
#include "fu/harness.hpp"
#include "fu/rng.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitRuntime = 4;

fu::ParamVector load_params(const fs::path& path) {
    return fu::deserialize_params(fu::read_file(path), path.string());
}

void save_params(const fu::ParamVector& p, const fs::path& path) { fu::write_file(path, fu::serialize_params(p)); }

void save_traces(const std::vector<std::vector<double>>& traces, const fs::path& path) {
    std::ostringstream out;
    char buf[32];
    for (const auto& row : traces) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", row[i]);
            out << (i ? "," : "") << buf;
        }
        out << "\n";
    }
    const std::string text = out.str();
    fu::write_file(path, std::span<const char>(text.data(), text.size()));
}

std::vector<std::vector<double>> load_traces(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw fu::FormatError("cannot open " + path.string());
    std::vector<std::vector<double>> traces;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw fu::FormatError(path.string() + ": bad number '" + cell + "'");
            }
        }
        traces.push_back(std::move(row));
    }
    return traces;
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

json efficiency_json(const fu::UnlearnOutcome& o) {
    fu::MetricReport r;
    fu::efficiency_report(o, r);
    return r.values;
}

int cmd_gen_data(const fs::path& out, const fu::BlobParams& blobs, std::size_t test_per_class, std::uint64_t seed) {
    fu::BlobParams test_params = blobs;
    test_params.per_class = test_per_class;
    const auto train = fu::synth_blobs(blobs, fu::derive_seed(seed, {fu::stream::kSynthetic, 0}));
    const auto test = fu::synth_blobs(test_params, fu::derive_seed(seed, {fu::stream::kSynthetic, 1}));
    fu::write_idx(train, out / "train-images-idx3-ubyte", out / "train-labels-idx1-ubyte");
    fu::write_idx(test, out / "t10k-images-idx3-ubyte", out / "t10k-labels-idx1-ubyte");
    std::cout << "wrote " << train.size() << " training and " << test.size() << " test samples to " << out.string()
              << "\n";
    return 0;
}

int cmd_train(const fu::ExperimentConfig& cfg) {
    const auto data = fu::prepare_data(cfg);
    const auto trained = fu::train_federation(data);
    const fs::path dir = cfg.output_dir;
    save_params(trained.run.final_params, dir / "model.fupv");
    fu::save_history(trained.run.history, dir / "history.fuhs");
    save_traces(trained.loss_traces, dir / "traces.csv");
    fu::write_file(dir / "config_echo.json", [&] {
        const std::string s = cfg.to_json().dump(2) + "\n";
        return std::vector<char>(s.begin(), s.end());
    }());
    print_json({{"model", (dir / "model.fupv").string()},
                {"history_records", trained.run.history.records.size()},
                {"test_accuracy", fu::test_accuracy(trained.run.final_params, data.test)},
                {"rounds", trained.run.ledger.rounds_executed},
                {"upload_bytes", trained.run.ledger.upload_bytes},
                {"download_bytes", trained.run.ledger.download_bytes},
                {"wall_time", trained.run.ledger.wall_time}});
    return 0;
}

int cmd_unlearn(const fu::ExperimentConfig& cfg, const std::string& method) {
    const auto data = fu::prepare_data(cfg);
    const fs::path dir = cfg.output_dir;
    const auto global = load_params(dir / "model.fupv");
    const auto history = fu::load_history(dir / "history.fuhs");
    if (history.config_fingerprint != data.federation.fingerprint())
        throw fu::ConfigError("federation", "saved history was recorded with a different configuration");

    fu::UnlearnOutcome outcome;
    if (method == "class_unlearn") {
        const auto* fc = std::get_if<fu::ForgetClass>(&cfg.forget);
        if (!fc) throw fu::ConfigError("forget", "class_unlearn needs {\"class\": c}");
        outcome = fu::class_unlearn(global, data.clients, fc->label, data.federation, cfg.unlearn);
    } else {
        const auto m = fu::parse_method(method);
        if (!m) throw fu::ConfigError("method", "unknown method \"" + method + "\"");
        fu::FederationState state{global, data.clients, &history, data.federation};
        outcome = fu::dispatch(*m, state, cfg.forget, cfg.unlearn);
    }
    const fs::path out = dir / ("unlearned_" + method + ".fupv");
    save_params(outcome.params, out);
    json report = efficiency_json(outcome);
    report["model"] = out.string();
    report["method"] = method;
    print_json(report);
    return 0;
}

int cmd_evaluate(const fu::ExperimentConfig& cfg, const fs::path& model_path, const fs::path& reference_path) {
    const auto data = fu::prepare_data(cfg);
    const auto params = load_params(model_path);
    const auto reference = load_params(reference_path);
    const auto resolved = fu::resolve_forget(data.clients, cfg.forget);

    json report;
    report["distance_gap"] = fu::distance_gap(params, reference);
    report["test_accuracy"] = fu::test_accuracy(params, data.test);
    if (cfg.attack.backdoor && !data.triggered_test.empty())
        report["ba"] = fu::backdoor_success_rate(params, data.triggered_test, data.trigger.target_label);
    report["mia"] = fu::mia_attack_accuracy(params, resolved.forget, data.test);
    if (!data.watermark.empty()) report["watermark"] = fu::watermark_retention(params, data.watermark);
    if (const auto* fc = std::get_if<fu::ForgetClass>(&cfg.forget)) {
        report["target_accuracy"] = fu::class_accuracy(params, data.test, fc->label);
        report["rest_accuracy"] = fu::rest_class_accuracy(params, data.test, fc->label);
    }

    // Marker metrics need the end-of-training model and traces saved by `train`.
    const fs::path dir = cfg.output_dir;
    const fu::ClientDataset pool{-1, resolved.forget};
    const std::size_t top_k = std::min(cfg.attack.top_k, resolved.forget.size());
    if (fs::exists(dir / "model.fupv")) {
        const auto em = fu::build_em_markers(load_params(dir / "model.fupv"), pool, top_k);
        report["em"] = fu::em_score(params, em);
    }
    if (std::holds_alternative<fu::ForgetClient>(cfg.forget) && fs::exists(dir / "traces.csv")) {
        const auto traces = load_traces(dir / "traces.csv");
        if (traces.size() >= 2) report["fm"] = fu::fm_score(params, fu::build_fm_markers(traces, pool, top_k));
    }
    print_json(report);
    return 0;
}

int cmd_benchmark(fu::ExperimentConfig cfg, const std::string& level) {
    if (level == "client") cfg.level = fu::BenchmarkLevel::Client;
    else if (level == "class") cfg.level = fu::BenchmarkLevel::Class;
    const auto table = fu::run_benchmark(cfg);
    fu::emit_report(table, cfg.output_dir);
    std::cout << fu::render_csv(table);
    std::cerr << "results written to " << cfg.output_dir.string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated unlearning simulator and benchmark harness"};
    app.require_subcommand(1);

    fs::path out_dir;
    fu::BlobParams blobs;
    std::size_t test_per_class = 50;
    std::uint64_t seed = 42;
    auto* gen = app.add_subcommand("gen-data", "Write a synthetic blob dataset as IDX files");
    gen->add_option("--out", out_dir, "Output directory")->required();
    gen->add_option("--classes", blobs.num_classes, "Number of classes")->check(CLI::Range(2, 255));
    gen->add_option("--dim", blobs.dim, "Feature dimension")->check(CLI::PositiveNumber);
    gen->add_option("--per-class", blobs.per_class, "Training samples per class")->check(CLI::PositiveNumber);
    gen->add_option("--test-per-class", test_per_class, "Test samples per class")->check(CLI::PositiveNumber);
    gen->add_option("--spread", blobs.spread, "Gaussian noise scale")->check(CLI::NonNegativeNumber);
    gen->add_option("--seed", seed, "Seed");

    fs::path config_path, model_path, reference_path;
    std::string method, level;
    auto* train = app.add_subcommand("train", "Run federated training and save model, history and loss traces");
    train->add_option("--config", config_path, "Experiment config (JSON)")->required();

    auto* unlearn = app.add_subcommand("unlearn", "Apply one unlearning method to the saved training state");
    unlearn->add_option("--config", config_path, "Experiment config (JSON)")->required();
    unlearn->add_option("--method", method, "retrain|finetune|c2t|federaser|pga|class_unlearn")->required();

    auto* evaluate = app.add_subcommand("evaluate", "Print the metric report of one model");
    evaluate->add_option("--model", model_path, "Model to evaluate (.fupv)")->required();
    evaluate->add_option("--reference", reference_path, "Retrained reference model (.fupv)")->required();
    evaluate->add_option("--config", config_path, "Experiment config (JSON)")->required();

    auto* bench = app.add_subcommand("benchmark", "Run the full pipeline and write results.csv/json");
    bench->add_option("--config", config_path, "Experiment config (JSON)")->required();
    bench->add_option("--level", level, "client or class (overrides the config)")
        ->check(CLI::IsMember({"client", "class"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*gen) {
            if (blobs.dim < blobs.num_classes) throw fu::ConfigError("--dim", "must be at least --classes");
            return cmd_gen_data(out_dir, blobs, test_per_class, seed);
        }
        const auto cfg = fu::parse_config(config_path);
        if (*train) return cmd_train(cfg);
        if (*unlearn) return cmd_unlearn(cfg, method);
        if (*evaluate) return cmd_evaluate(cfg, model_path, reference_path);
        if (*bench) return cmd_benchmark(cfg, level);
    } catch (const fu::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const fu::CapabilityError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const fu::FormatError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitRuntime;
}
