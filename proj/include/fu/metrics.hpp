#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fu/dataset.hpp"
#include "fu/model.hpp"
#include "fu/unlearn.hpp"

namespace fu {

/// Named metric values for one (method, dataset) cell.
struct MetricReport {
    std::string method;
    std::string dataset;
    std::map<std::string, double> values;

    double at(const std::string& key) const;
    bool has(const std::string& key) const { return values.contains(key); }
};

enum class MarkerKind { ErroneousMemory, ForgettableMemory };

struct MarkerSet {
    MarkerKind kind = MarkerKind::ErroneousMemory;
    Dataset samples;
    int marker_label = -1; // majority class, EM only
};

/// Percentage of argmax-correct predictions (ties to the lowest class).
double test_accuracy(const ParamVector& params, const Dataset& test);

/// Accuracy restricted to samples whose label is / is not `label`.
double class_accuracy(const ParamVector& params, const Dataset& test, int label);
double rest_class_accuracy(const ParamVector& params, const Dataset& test, int label);

/// l2 distance to the reference (retrained) model.
double distance_gap(const ParamVector& params, const ParamVector& reference);

/// Percentage of triggered samples classified as the attacker's target.
double backdoor_success_rate(const ParamVector& params, const Dataset& triggered_test, int target_label);

/// Best balanced accuracy (percent) of the attack "member iff loss <= t" over
/// every threshold t. Both sets are first truncated to the smaller size.
double mia_attack_accuracy(const ParamVector& params, const Dataset& members, const Dataset& nonmembers);
/// Same attack on precomputed losses.
double mia_threshold_accuracy(std::span<const double> member_losses, std::span<const double> nonmember_losses);

/// Percentage of watermark samples still classified as their implanted label.
double watermark_retention(const ParamVector& params, const WatermarkSet& wm);

/// Top-k highest-loss samples under the end-of-training model, restricted to
/// their majority true label (ties to the lowest label).
MarkerSet build_em_markers(const ParamVector& params_end, const ClientDataset& client, std::size_t top_k);

/// loss_traces[r][i]: loss of sample i after recorded round r. Picks the
/// top-k samples by population variance across rounds (ties by index).
MarkerSet build_fm_markers(const std::vector<std::vector<double>>& loss_traces, const ClientDataset& client,
                           std::size_t top_k);

/// Population variance of each column of the traces.
std::vector<double> loss_variance(const std::vector<std::vector<double>>& loss_traces);

/// Mean cross-entropy on the marker samples; higher means more forgotten.
double marker_score(const ParamVector& params, const MarkerSet& markers);
inline double em_score(const ParamVector& params, const MarkerSet& markers) { return marker_score(params, markers); }
inline double fm_score(const ParamVector& params, const MarkerSet& markers) { return marker_score(params, markers); }

/// wall_time, rounds, upload_bytes, download_bytes from an outcome's ledger.
void efficiency_report(const UnlearnOutcome& outcome, MetricReport& report);
void efficiency_report(const CommLedger& ledger, std::size_t rounds_used, MetricReport& report);

} // namespace fu
