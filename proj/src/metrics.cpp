#include "fu/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <utility>

#include "fu/error.hpp"

namespace fu {

double MetricReport::at(const std::string& key) const {
    auto it = values.find(key);
    if (it == values.end()) throw InputError("metric '" + key + "' missing from report for " + method);
    return it->second;
}

namespace {

double percent(std::size_t hits, std::size_t total) {
    return 100.0 * static_cast<double>(hits) / static_cast<double>(total);
}

// Percentage of samples (optionally filtered by label) predicted as `wanted`
// (or as their own label when wanted < 0).
template <typename Keep>
double accuracy_where(const ParamVector& params, const Dataset& data, Keep keep, int wanted,
                      const char* what) {
    const auto pred = predict(params, data.batch());
    std::size_t hits = 0, total = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!keep(data.labels[i])) continue;
        ++total;
        hits += pred[i] == (wanted < 0 ? data.labels[i] : wanted);
    }
    if (total == 0) throw InputError(std::string(what) + ": no samples to evaluate");
    return percent(hits, total);
}

} // namespace

double test_accuracy(const ParamVector& params, const Dataset& test) {
    return accuracy_where(params, test, [](int) { return true; }, -1, "test_accuracy");
}

double class_accuracy(const ParamVector& params, const Dataset& test, int label) {
    return accuracy_where(params, test, [label](int y) { return y == label; }, -1, "class_accuracy");
}

double rest_class_accuracy(const ParamVector& params, const Dataset& test, int label) {
    return accuracy_where(params, test, [label](int y) { return y != label; }, -1, "rest_class_accuracy");
}

double distance_gap(const ParamVector& params, const ParamVector& reference) {
    return l2_distance(params, reference);
}

double backdoor_success_rate(const ParamVector& params, const Dataset& triggered_test, int target_label) {
    return accuracy_where(params, triggered_test, [](int) { return true; }, target_label, "backdoor_success_rate");
}

double watermark_retention(const ParamVector& params, const WatermarkSet& wm) {
    return accuracy_where(params, wm, [](int) { return true; }, -1, "watermark_retention");
}

double mia_threshold_accuracy(std::span<const double> member_losses, std::span<const double> nonmember_losses) {
    const std::size_t n = std::min(member_losses.size(), nonmember_losses.size());
    if (n == 0) throw InputError("membership inference needs nonempty member and nonmember sets");

    std::vector<std::pair<double, bool>> pooled;
    pooled.reserve(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        pooled.emplace_back(member_losses[i], true);
        pooled.emplace_back(nonmember_losses[i], false);
    }
    std::sort(pooled.begin(), pooled.end());

    // Balanced sets: balanced accuracy = (TP + TN) / 2n, so maximize TP + TN.
    // Threshold below every loss: TP = 0, TN = n.
    std::size_t tp = 0, fp = 0, best = n;
    for (std::size_t i = 0; i < pooled.size();) {
        const double t = pooled[i].first;
        for (; i < pooled.size() && pooled[i].first == t; ++i) (pooled[i].second ? tp : fp) += 1;
        best = std::max(best, tp + (n - fp));
    }
    return 100.0 * static_cast<double>(best) / (2.0 * static_cast<double>(n));
}

double mia_attack_accuracy(const ParamVector& params, const Dataset& members, const Dataset& nonmembers) {
    if (members.empty() || nonmembers.empty())
        throw InputError("membership inference needs nonempty member and nonmember sets");
    const auto m = per_sample_loss(params, members.batch());
    const auto nm = per_sample_loss(params, nonmembers.batch());
    return mia_threshold_accuracy(m, nm);
}

MarkerSet build_em_markers(const ParamVector& params_end, const ClientDataset& client, std::size_t top_k) {
    const Dataset& data = client.data;
    if (top_k == 0) throw InputError("EM top_k must be positive");
    if (top_k > data.size())
        throw InputError("EM top_k " + std::to_string(top_k) + " exceeds client size " + std::to_string(data.size()));

    const auto losses = per_sample_loss(params_end, data.batch());
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return losses[a] > losses[b]; });
    order.resize(top_k);

    std::vector<std::size_t> votes(data.num_classes, 0);
    for (auto i : order) ++votes[data.labels[i]];
    const int majority = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());

    std::vector<std::size_t> chosen;
    for (auto i : order)
        if (data.labels[i] == majority) chosen.push_back(i);
    return {MarkerKind::ErroneousMemory, data.subset(chosen), majority};
}

std::vector<double> loss_variance(const std::vector<std::vector<double>>& traces) {
    if (traces.size() < 2) throw InputError("loss variance needs at least two recorded rounds");
    const std::size_t n = traces.front().size();
    for (const auto& row : traces)
        if (row.size() != n) throw InputError("loss traces have ragged rows");

    const double rounds = static_cast<double>(traces.size());
    std::vector<double> mean(n, 0.0), var(n, 0.0);
    for (const auto& row : traces)
        for (std::size_t i = 0; i < n; ++i) mean[i] += row[i];
    for (auto& m : mean) m /= rounds;
    for (const auto& row : traces)
        for (std::size_t i = 0; i < n; ++i) var[i] += (row[i] - mean[i]) * (row[i] - mean[i]);
    for (auto& v : var) v /= rounds;
    return var;
}

MarkerSet build_fm_markers(const std::vector<std::vector<double>>& loss_traces, const ClientDataset& client,
                           std::size_t top_k) {
    const auto var = loss_variance(loss_traces);
    if (var.size() != client.data.size()) throw InputError("loss traces do not match the client's sample count");
    if (top_k == 0) throw InputError("FM top_k must be positive");
    if (top_k > var.size())
        throw InputError("FM top_k " + std::to_string(top_k) + " exceeds client size " + std::to_string(var.size()));

    std::vector<std::size_t> order(var.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return var[a] > var[b]; });
    order.resize(top_k);
    return {MarkerKind::ForgettableMemory, client.data.subset(order), -1};
}

double marker_score(const ParamVector& params, const MarkerSet& markers) {
    if (markers.samples.empty()) throw InputError("marker set is empty");
    return mean_loss(params, markers.samples.batch());
}

void efficiency_report(const CommLedger& ledger, std::size_t rounds_used, MetricReport& report) {
    report.values["wall_time"] = ledger.wall_time;
    report.values["rounds"] = static_cast<double>(rounds_used);
    report.values["upload_bytes"] = static_cast<double>(ledger.upload_bytes);
    report.values["download_bytes"] = static_cast<double>(ledger.download_bytes);
}

void efficiency_report(const UnlearnOutcome& outcome, MetricReport& report) {
    efficiency_report(outcome.ledger, outcome.rounds_used, report);
}

} // namespace fu
