#include <fstream>
#include <sstream>

#include "doctest.h"

#include "fu/error.hpp"
#include "fu/harness.hpp"

using namespace fu;
using nlohmann::json;

namespace {

json tiny_config() {
    return json::parse(R"({
        "seed": 5,
        "dataset": {"source": "synthetic", "classes": 4, "dim": 16, "per_class": 30, "spread": 0.05,
                    "test_per_class": 20},
        "partition": {"clients": 4},
        "model": {"arch": "mlp", "hidden": 8},
        "federation": {"rounds": 5, "local_epochs": 1, "lr": 0.1, "batch_size": 16},
        "attack": {"watermark_size": 8, "top_k": 16},
        "forget": {"client": 1}
    })");
}

std::string config_error_key(const json& doc) {
    try {
        parse_config_json(doc);
    } catch (const ConfigError& e) {
        return e.key();
    }
    return "";
}

std::string drop_column(const std::string& csv, const std::string& column) {
    std::istringstream in(csv);
    std::string line, out;
    int skip = -1;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
        if (skip < 0)
            for (std::size_t i = 0; i < cells.size(); ++i)
                if (cells[i] == column) skip = static_cast<int>(i);
        for (std::size_t i = 0; i < cells.size(); ++i)
            if (static_cast<int>(i) != skip) out += cells[i] + ",";
        out += "\n";
    }
    return out;
}

} // namespace

TEST_SUITE("harness") {

TEST_CASE("minimal config takes the defaults") {
    const auto cfg = parse_config_json(json::object());
    CHECK(cfg.seed == 42);
    CHECK(cfg.clients == 10);
    CHECK(cfg.dataset.kind == DatasetSource::Kind::Synthetic);
    CHECK(cfg.federation.rounds == 30);
    CHECK(cfg.federation.local_epochs == 2);
    CHECK(cfg.federation.lr == 0.1);
    CHECK(cfg.federation.batch_size == 64);
    CHECK(cfg.federation.history_interval == 1);
    CHECK(cfg.attack.top_k == 64);
    CHECK(cfg.methods.size() == 5);
    CHECK(std::get<ForgetClient>(cfg.forget).client_id == 0);
}

TEST_CASE("config errors name the offending key") {
    auto doc = tiny_config();
    doc["federation"]["lr"] = -1;
    CHECK(config_error_key(doc) == "federation.lr");

    doc = tiny_config();
    doc["federation"]["learning_rate"] = 0.1;
    CHECK(config_error_key(doc) == "federation.learning_rate");

    doc = tiny_config();
    doc["colour"] = "blue";
    CHECK(config_error_key(doc) == "colour");

    doc = tiny_config();
    doc["methods"] = {"retrain", "oblivion"};
    CHECK(config_error_key(doc) == "methods");

    doc = tiny_config();
    doc["level"] = "class";
    CHECK(config_error_key(doc) == "forget");

    doc = tiny_config();
    doc["forget"] = {{"client", 9}};
    CHECK(config_error_key(doc) == "forget.client");

    doc = tiny_config();
    doc["partition"]["clients"] = "ten";
    CHECK(config_error_key(doc) == "partition.clients");
}

TEST_CASE("resolved config echoes back to itself") {
    const auto cfg = parse_config_json(tiny_config());
    const auto echo = cfg.to_json();
    CHECK(parse_config_json(echo).to_json() == echo);
    CHECK(config_hash(echo) == config_hash(parse_config_json(tiny_config()).to_json()));
}

TEST_CASE("idx paths resolve against the config directory") {
    auto doc = json::parse(R"({"dataset": {"source": "idx", "train_images": "a/ti", "train_labels": "a/tl",
                                           "test_images": "/abs/si", "test_labels": "b/sl"}})");
    const auto cfg = parse_config_json(doc, "/base/dir");
    CHECK(cfg.dataset.train_images == std::filesystem::path("/base/dir/a/ti"));
    CHECK(cfg.dataset.test_images == std::filesystem::path("/abs/si"));
}

TEST_CASE("retrain-only benchmark and report files") {
    auto doc = tiny_config();
    doc["methods"] = {"retrain"};
    const auto cfg = parse_config_json(doc);
    const auto table = run_benchmark(cfg);
    REQUIRE(table.rows.size() == 2);
    CHECK(table.rows[0].method == "original");
    CHECK(table.rows[1].method == "retrain");
    CHECK(table.row("retrain").at("distance_gap") == 0.0);
    CHECK(table.row("original").at("distance_gap") > 0.0);
    CHECK(table.row("retrain").at("rounds") == 5);

    const auto csv = render_csv(table);
    std::istringstream in(csv);
    std::string header;
    std::getline(in, header);
    CHECK(header == "method,distance_gap,test_accuracy,ba,mia,watermark,em,fm,wall_time,rounds,upload_bytes,"
                    "download_bytes");
    int lines = 1;
    for (std::string line; std::getline(in, line); ++lines) {
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        while (std::getline(ss, cell, ',')) {
            const auto dot = cell.find('.');
            REQUIRE(dot != std::string::npos);
            CHECK(cell.size() - dot - 1 == 4);
        }
    }
    CHECK(lines == 3);

    const auto dir = std::filesystem::temp_directory_path() / "fu_report_test" / "nested" / "out";
    std::filesystem::remove_all(dir.parent_path().parent_path());
    emit_report(table, dir);
    std::ifstream csv_file(dir / "results.csv");
    std::stringstream written;
    written << csv_file.rdbuf();
    CHECK(written.str() == csv);

    const auto parsed = json::parse(std::ifstream(dir / "results.json"));
    CHECK(parsed["rows"].size() == 2);
    CHECK(parsed["rows"][1]["method"] == "retrain");
    CHECK(parsed["columns"].size() == 11);
    CHECK(parsed["metadata"]["config_hash"] == table.config_hash);
    CHECK(json::parse(std::ifstream(dir / "config_echo.json")) == cfg.to_json());
    std::filesystem::remove_all(dir.parent_path().parent_path());
}

TEST_CASE("benchmark tables are deterministic apart from wall time") {
    const auto cfg = parse_config_json(tiny_config());
    const auto a = render_csv(run_benchmark(cfg));
    const auto b = render_csv(run_benchmark(cfg));
    CHECK(drop_column(a, "wall_time") == drop_column(b, "wall_time"));
}

TEST_CASE("class-level benchmark columns") {
    auto doc = tiny_config();
    doc["level"] = "class";
    doc["forget"] = {{"class", 2}};
    doc["attack"] = {{"backdoor", false}, {"watermark_size", 0}};
    const auto table = run_benchmark(parse_config_json(doc));
    CHECK(table.columns == metric_columns(BenchmarkLevel::Class));
    REQUIRE(table.rows.size() == 3);
    CHECK(table.rows[2].method == "class_unlearn");
    CHECK(table.row("retrain").at("target_accuracy") == 0.0);
}

}
