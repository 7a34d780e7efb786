#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "fu/binary_io.hpp"
#include "fu/harness.hpp"

namespace fu {

using nlohmann::json;

namespace {

std::string fixed4(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    try {
        write_file(path, std::span<const char>(text.data(), text.size()));
    } catch (const std::exception& e) {
        throw std::runtime_error("writing " + path.string() + ": " + e.what());
    }
}

} // namespace

std::string config_hash(const json& echo) {
    // FNV-1a over the canonical dump.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : echo.dump()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string render_csv(const BenchmarkTable& table) {
    std::string out = "method";
    for (const auto& c : table.columns) out += "," + c;
    out += "\n";
    for (const auto& row : table.rows) {
        out += row.method;
        for (const auto& c : table.columns) out += "," + fixed4(row.has(c) ? row.at(c) : NAN);
        out += "\n";
    }
    return out;
}

json render_json(const BenchmarkTable& table) {
    json rows = json::array();
    for (const auto& row : table.rows) {
        json r = {{"method", row.method}};
        for (const auto& c : table.columns) {
            const double v = row.has(c) ? row.at(c) : NAN;
            r[c] = std::isnan(v) ? json(nullptr) : json(std::round(v * 1e4) / 1e4);
        }
        rows.push_back(std::move(r));
    }
    return {{"level", table.level == BenchmarkLevel::Client ? "client" : "class"},
            {"metadata", {{"config_hash", table.config_hash}, {"timestamp", table.timestamp}}},
            {"columns", table.columns},
            {"rows", std::move(rows)}};
}

void emit_report(const BenchmarkTable& table, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("creating " + dir.string() + ": " + ec.message());
    write_text(dir / "results.csv", render_csv(table));
    write_text(dir / "results.json", render_json(table).dump(2) + "\n");
    write_text(dir / "config_echo.json", table.config_echo.dump(2) + "\n");
}

} // namespace fu
