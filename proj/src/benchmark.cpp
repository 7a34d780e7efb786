#include <algorithm>
#include <chrono>
#include <ctime>
#include <functional>
#include <cmath>
#include <limits>
#include <string>

#include "fu/error.hpp"
#include "fu/harness.hpp"
#include "fu/rng.hpp"

namespace fu {

namespace {

using Clock = std::chrono::steady_clock;
constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

Dataset first_per_class(const Dataset& data, std::size_t per_class) {
    if (per_class == 0) return data;
    std::vector<std::size_t> seen(data.num_classes, 0), rows;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (seen[data.labels[i]]++ < per_class) rows.push_back(i);
    return data.subset(rows);
}

Dataset first_n(const Dataset& data, std::size_t n) {
    if (n == 0 || n >= data.size()) return data;
    std::vector<std::size_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = i;
    return data.subset(rows);
}

int marker_client_of(const ForgetSpec& spec) {
    if (const auto* c = std::get_if<ForgetClient>(&spec)) return c->client_id;
    if (const auto* s = std::get_if<ForgetSamples>(&spec)) return s->client_id;
    return 0;
}

ClientDataset& client_by_id(std::vector<ClientDataset>& clients, int id) {
    for (auto& c : clients)
        if (c.client_id == id) return c;
    throw ConfigError("forget.client", "client " + std::to_string(id) + " does not exist");
}

Dataset with_label(const Dataset& data, int label) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (data.labels[i] == label) rows.push_back(i);
    return data.subset(rows);
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Times one unlearning request; wall_time covers the dispatch call only.
UnlearnOutcome timed(const std::function<UnlearnOutcome()>& run) {
    const auto start = Clock::now();
    UnlearnOutcome out = run();
    out.ledger.wall_time = std::chrono::duration<double>(Clock::now() - start).count();
    return out;
}

BenchmarkTable new_table(const ExperimentConfig& cfg) {
    BenchmarkTable t;
    t.level = cfg.level;
    t.columns = metric_columns(cfg.level);
    t.config_echo = cfg.to_json();
    t.config_hash = config_hash(t.config_echo);
    t.timestamp = utc_timestamp();
    return t;
}

} // namespace

const MetricReport& BenchmarkTable::row(const std::string& method) const {
    for (const auto& r : rows)
        if (r.method == method) return r;
    throw InputError("benchmark table has no row '" + method + "'");
}

std::vector<std::string> metric_columns(BenchmarkLevel level) {
    if (level == BenchmarkLevel::Client)
        return {"distance_gap", "test_accuracy", "ba",        "mia",    "watermark",    "em",
                "fm",           "wall_time",     "rounds",    "upload_bytes", "download_bytes"};
    return {"distance_gap", "target_accuracy", "rest_accuracy", "test_accuracy", "ba",           "mia",
            "em",           "wall_time",       "rounds",        "upload_bytes",  "download_bytes"};
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
    PreparedData out;
    const DatasetSource& src = cfg.dataset;
    if (src.kind == DatasetSource::Kind::Synthetic) {
        BlobParams test_params = src.blobs;
        test_params.per_class = src.test_per_class;
        out.train = synth_blobs(src.blobs, derive_seed(cfg.seed, {stream::kSynthetic, 0}));
        out.test = synth_blobs(test_params, derive_seed(cfg.seed, {stream::kSynthetic, 1}));
    } else {
        out.train = first_per_class(load_idx(src.train_images, src.train_labels), src.max_train_per_class);
        out.test = first_n(load_idx(src.test_images, src.test_labels), src.max_test);
        if (out.train.dim() != out.test.dim()) throw FormatError("train and test images differ in size");
        const std::size_t k = std::max(out.train.num_classes, out.test.num_classes);
        out.train.num_classes = out.test.num_classes = k;
    }
    const std::size_t dim = out.train.dim(), k = out.train.num_classes;

    out.federation = cfg.federation;
    out.federation.seed = cfg.seed;
    out.federation.model = cfg.arch == Arch::Mlp ? ModelSpec::mlp(dim, cfg.hidden, k) : ModelSpec::logreg(dim, k);

    if (cfg.clients > out.train.size())
        throw ConfigError("partition.clients", "more clients than training samples");
    out.clients = partition(out.train, cfg.clients, cfg.scheme, cfg.seed);
    out.marker_client = marker_client_of(cfg.forget);
    if (const auto* fc = std::get_if<ForgetClass>(&cfg.forget); fc && static_cast<std::size_t>(fc->label) >= k)
        throw ConfigError("forget.class", "class " + std::to_string(fc->label) + " does not exist");

    out.trigger = TriggerSpec::default_for(dim, k);
    if (cfg.attack.trigger) {
        TriggerSpec t = *cfg.attack.trigger;
        if (t.pixel_indices.empty()) t.pixel_indices = out.trigger.pixel_indices;
        out.trigger = t;
    }
    try {
        out.trigger.validate(dim, k);
    } catch (const InputError& e) {
        throw ConfigError("attack", e.what());
    }

    ClientDataset& marked = client_by_id(out.clients, out.marker_client);
    if (cfg.attack.backdoor)
        marked = inject_backdoor(marked, out.trigger, cfg.attack.backdoor_fraction,
                                 derive_seed(cfg.seed, {stream::kBackdoor}));
    out.watermark = Dataset(dim, k);
    if (cfg.attack.watermark_size > 0) {
        auto injected = inject_watermark(marked, cfg.attack.watermark_size, derive_seed(cfg.seed, {stream::kWatermark}),
                                         cfg.attack.watermark_replicas);
        marked = std::move(injected.client);
        out.watermark = std::move(injected.watermark);
    }
    out.triggered_test = make_triggered_testset(out.test, out.trigger);
    return out;
}

TrainedFederation train_federation(const PreparedData& data) {
    TrainedFederation out;
    const ClientDataset* marked = nullptr;
    for (const auto& c : data.clients)
        if (c.client_id == data.marker_client) marked = &c;

    RunOptions opts;
    opts.record_history = true;
    if (marked && !marked->data.empty()) {
        opts.observer = [&](std::size_t, const ParamVector& theta) {
            out.loss_traces.push_back(per_sample_loss(theta, marked->data.batch()));
        };
    }
    out.run = run_rounds(init_params(data.federation.model, data.federation.seed), data.clients, data.federation, opts);
    return out;
}

BenchmarkTable run_client_level_benchmark(const ExperimentConfig& cfg) {
    if (!std::holds_alternative<ForgetClient>(cfg.forget))
        throw ConfigError("forget", "client-level benchmark needs {\"client\": id}");
    BenchmarkTable table = new_table(cfg);

    const PreparedData data = prepare_data(cfg);
    const TrainedFederation trained = train_federation(data);
    const ParamVector& original = trained.run.final_params;
    const auto resolved = resolve_forget(data.clients, cfg.forget);

    ClientDataset marker_client{data.marker_client, resolved.forget};
    const std::size_t top_k = std::min(cfg.attack.top_k, resolved.forget.size());
    const MarkerSet em = build_em_markers(original, marker_client, top_k);
    const bool have_fm = trained.loss_traces.size() >= 2;
    const MarkerSet fm = have_fm ? build_fm_markers(trained.loss_traces, marker_client, top_k) : MarkerSet{};

    FederationState state{original, data.clients, &trained.run.history, data.federation};
    std::vector<std::pair<std::string, UnlearnOutcome>> outcomes;
    outcomes.emplace_back("retrain", timed([&] { return dispatch(UnlearnMethod::Retrain, state, cfg.forget, cfg.unlearn); }));
    for (auto m : cfg.methods) {
        if (m == UnlearnMethod::Retrain) continue;
        outcomes.emplace_back(std::string(method_name(m)),
                              timed([&] { return dispatch(m, state, cfg.forget, cfg.unlearn); }));
    }
    const ParamVector& reference = outcomes.front().second.params;

    auto evaluate = [&](const std::string& name, const ParamVector& params) {
        MetricReport r{name, cfg.dataset.name, {}};
        r.values["distance_gap"] = distance_gap(params, reference);
        r.values["test_accuracy"] = test_accuracy(params, data.test);
        r.values["ba"] = cfg.attack.backdoor && !data.triggered_test.empty()
                             ? backdoor_success_rate(params, data.triggered_test, data.trigger.target_label)
                             : kMissing;
        r.values["mia"] = mia_attack_accuracy(params, resolved.forget, data.test);
        r.values["watermark"] = data.watermark.empty() ? kMissing : watermark_retention(params, data.watermark);
        r.values["em"] = em_score(params, em);
        r.values["fm"] = have_fm ? fm_score(params, fm) : kMissing;
        return r;
    };

    MetricReport original_row = evaluate("original", original);
    efficiency_report(trained.run.ledger, trained.run.ledger.rounds_executed, original_row);
    table.rows.push_back(std::move(original_row));
    for (const auto& [name, outcome] : outcomes) {
        MetricReport r = evaluate(name, outcome.params);
        efficiency_report(outcome, r);
        table.rows.push_back(std::move(r));
    }
    return table;
}

BenchmarkTable run_class_level_benchmark(const ExperimentConfig& cfg) {
    const auto* fc = std::get_if<ForgetClass>(&cfg.forget);
    if (!fc) throw ConfigError("forget", "class-level benchmark needs {\"class\": c}");
    const int label = fc->label;
    BenchmarkTable table = new_table(cfg);

    const PreparedData data = prepare_data(cfg);
    const TrainedFederation trained = train_federation(data);
    const ParamVector& original = trained.run.final_params;
    const auto resolved = resolve_forget(data.clients, cfg.forget);
    const Dataset target_test = with_label(data.test, label);
    if (target_test.empty()) throw FormatError("test split holds no samples of class " + std::to_string(label));

    const ClientDataset forget_pool{-1, resolved.forget};
    const MarkerSet em = build_em_markers(original, forget_pool, std::min(cfg.attack.top_k, resolved.forget.size()));

    FederationState state{original, data.clients, &trained.run.history, data.federation};
    std::vector<std::pair<std::string, UnlearnOutcome>> outcomes;
    outcomes.emplace_back("retrain", timed([&] { return dispatch(UnlearnMethod::Retrain, state, cfg.forget, cfg.unlearn); }));
    outcomes.emplace_back("class_unlearn", timed([&] {
                              return class_unlearn(original, data.clients, label, data.federation, cfg.unlearn);
                          }));
    const ParamVector& reference = outcomes.front().second.params;

    auto evaluate = [&](const std::string& name, const ParamVector& params) {
        MetricReport r{name, cfg.dataset.name, {}};
        r.values["distance_gap"] = distance_gap(params, reference);
        r.values["target_accuracy"] = class_accuracy(params, data.test, label);
        r.values["rest_accuracy"] = rest_class_accuracy(params, data.test, label);
        r.values["test_accuracy"] = test_accuracy(params, data.test);
        r.values["ba"] = cfg.attack.backdoor && !data.triggered_test.empty()
                             ? backdoor_success_rate(params, data.triggered_test, data.trigger.target_label)
                             : kMissing;
        r.values["mia"] = mia_attack_accuracy(params, resolved.forget, target_test);
        r.values["em"] = em_score(params, em);
        return r;
    };

    MetricReport original_row = evaluate("original", original);
    efficiency_report(trained.run.ledger, trained.run.ledger.rounds_executed, original_row);
    table.rows.push_back(std::move(original_row));
    for (const auto& [name, outcome] : outcomes) {
        MetricReport r = evaluate(name, outcome.params);
        efficiency_report(outcome, r);
        table.rows.push_back(std::move(r));
    }
    return table;
}

BenchmarkTable run_benchmark(const ExperimentConfig& cfg) {
    return cfg.level == BenchmarkLevel::Client ? run_client_level_benchmark(cfg) : run_class_level_benchmark(cfg);
}

} // namespace fu
