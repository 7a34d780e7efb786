#include <cmath>
#include <fstream>
#include <set>
#include <string>

#include "fu/error.hpp"
#include "fu/harness.hpp"

namespace fu {

using nlohmann::json;

namespace {

// One JSON object of the config. Every read marks its key as known; finish()
// rejects whatever is left.
class Section {
public:
    Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected a JSON object");
    }

    std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json* find(const std::string& key) {
        seen_.insert(key);
        auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    std::size_t get_count(const std::string& key, std::size_t fallback, std::size_t min_value) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_number_integer()) throw ConfigError(key_path(key), "expected an integer");
        const auto raw = v->get<std::int64_t>();
        if (raw < static_cast<std::int64_t>(min_value))
            throw ConfigError(key_path(key), "must be >= " + std::to_string(min_value));
        return static_cast<std::size_t>(raw);
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() && v->get<std::int64_t>() < 0))
            throw ConfigError(key_path(key), "expected a non-negative integer");
        return v->get<std::uint64_t>();
    }

    // Accepts lo < x (or lo <= x when lo_inclusive) and x <= hi.
    double get_real(const std::string& key, double fallback, double lo, bool lo_inclusive,
                    double hi = INFINITY) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_number()) throw ConfigError(key_path(key), "expected a number");
        const double x = v->get<double>();
        const bool ok = std::isfinite(x) && (lo_inclusive ? x >= lo : x > lo) && x <= hi;
        if (!ok) {
            std::string range = std::string(lo_inclusive ? "[" : "(") + json(lo).dump() + ", " +
                                (std::isinf(hi) ? std::string("inf)") : json(hi).dump() + "]");
            throw ConfigError(key_path(key), "value " + v->dump() + " outside " + range);
        }
        return x;
    }

    bool get_bool(const std::string& key, bool fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_boolean()) throw ConfigError(key_path(key), "expected true or false");
        return v->get<bool>();
    }

    std::string get_string(const std::string& key, const std::string& fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_string()) throw ConfigError(key_path(key), "expected a string");
        return v->get<std::string>();
    }

    std::vector<std::size_t> get_index_list(const std::string& key) {
        const json* v = find(key);
        std::vector<std::size_t> out;
        if (!v) return out;
        if (!v->is_array()) throw ConfigError(key_path(key), "expected an array of indices");
        for (const auto& e : *v) {
            if (!e.is_number_integer() || e.get<std::int64_t>() < 0)
                throw ConfigError(key_path(key), "expected non-negative integers");
            out.push_back(e.get<std::size_t>());
        }
        return out;
    }

    void finish() const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it)
            if (!seen_.contains(it.key())) throw ConfigError(key_path(it.key()), "unknown key");
    }

private:
    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    if (path.is_relative() && !base.empty()) path = base / path;
    return path.lexically_normal();
}

DatasetSource parse_dataset(const json& node, const std::filesystem::path& base) {
    DatasetSource src;
    if (node.is_string()) {
        if (node.get<std::string>() != "synthetic")
            throw ConfigError("dataset", "string form only accepts \"synthetic\"; use an object for idx data");
        return src;
    }
    Section s(node, "dataset");
    const std::string kind = s.get_string("source", "synthetic");
    if (kind == "synthetic") {
        src.kind = DatasetSource::Kind::Synthetic;
        src.name = s.get_string("name", "synthetic");
        src.blobs.num_classes = s.get_count("classes", src.blobs.num_classes, 2);
        src.blobs.dim = s.get_count("dim", src.blobs.dim, 1);
        src.blobs.per_class = s.get_count("per_class", src.blobs.per_class, 1);
        src.blobs.spread = s.get_real("spread", src.blobs.spread, 0.0, true);
        src.test_per_class = s.get_count("test_per_class", src.test_per_class, 1);
        if (src.blobs.dim < src.blobs.num_classes)
            throw ConfigError("dataset.dim", "must be at least the number of classes");
    } else if (kind == "idx") {
        src.kind = DatasetSource::Kind::Idx;
        src.name = s.get_string("name", "idx");
        for (auto [key, dest] : {std::pair{"train_images", &src.train_images}, std::pair{"train_labels", &src.train_labels},
                                 std::pair{"test_images", &src.test_images}, std::pair{"test_labels", &src.test_labels}}) {
            const std::string p = s.get_string(key, "");
            if (p.empty()) throw ConfigError(s.key_path(key), "required for idx datasets");
            *dest = resolve(base, p);
        }
        src.max_train_per_class = s.get_count("max_train_per_class", 0, 0);
        src.max_test = s.get_count("max_test", 0, 0);
    } else {
        throw ConfigError("dataset.source", "expected \"synthetic\" or \"idx\", got \"" + kind + "\"");
    }
    s.finish();
    return src;
}

ForgetSpec parse_forget(const json& node, std::size_t n_clients) {
    Section s(node, "forget");
    const json* client = s.find("client");
    const json* klass = s.find("class");
    const json* samples = s.find("samples");
    s.finish();

    auto as_id = [](const json* v, const char* key) {
        if (!v->is_number_integer() || v->get<std::int64_t>() < 0)
            throw ConfigError(std::string("forget.") + key, "expected a non-negative integer");
        return v->get<int>();
    };
    if (klass) {
        if (client || samples) throw ConfigError("forget.class", "cannot be combined with client or samples");
        return ForgetClass{as_id(klass, "class")};
    }
    if (!client) throw ConfigError("forget", "needs \"client\" or \"class\"");
    const int id = as_id(client, "client");
    if (static_cast<std::size_t>(id) >= n_clients)
        throw ConfigError("forget.client", "client " + std::to_string(id) + " does not exist");
    if (!samples) return ForgetClient{id};

    if (!samples->is_array() || samples->empty()) throw ConfigError("forget.samples", "expected a nonempty array");
    ForgetSamples fs{id, {}};
    for (const auto& e : *samples) {
        if (!e.is_number_integer() || e.get<std::int64_t>() < 0)
            throw ConfigError("forget.samples", "expected non-negative integers");
        fs.indices.push_back(e.get<std::size_t>());
    }
    return fs;
}

json forget_to_json(const ForgetSpec& spec) {
    if (const auto* c = std::get_if<ForgetClient>(&spec)) return {{"client", c->client_id}};
    if (const auto* k = std::get_if<ForgetClass>(&spec)) return {{"class", k->label}};
    const auto& s = std::get<ForgetSamples>(spec);
    return {{"client", s.client_id}, {"samples", s.indices}};
}

} // namespace

ExperimentConfig parse_config_json(const json& doc, const std::filesystem::path& base_dir) {
    ExperimentConfig cfg;
    Section root(doc, "");

    cfg.seed = root.get_u64("seed", cfg.seed);
    const std::string level = root.get_string("level", "client");
    if (level == "client") cfg.level = BenchmarkLevel::Client;
    else if (level == "class") cfg.level = BenchmarkLevel::Class;
    else throw ConfigError("level", "expected \"client\" or \"class\"");
    cfg.output_dir = resolve(base_dir, root.get_string("output_dir", "results"));

    if (const json* d = root.find("dataset")) cfg.dataset = parse_dataset(*d, base_dir);

    if (const json* p = root.find("partition")) {
        Section s(*p, "partition");
        cfg.clients = s.get_count("clients", cfg.clients, 2);
        const std::string scheme = s.get_string("scheme", "iid");
        const double alpha = s.get_real("alpha", 0.5, 0.0, false);
        if (scheme == "iid") cfg.scheme = IidScheme{};
        else if (scheme == "dirichlet") cfg.scheme = DirichletScheme{alpha};
        else throw ConfigError("partition.scheme", "expected \"iid\" or \"dirichlet\"");
        s.finish();
    }

    if (const json* m = root.find("model")) {
        Section s(*m, "model");
        const std::string arch = s.get_string("arch", "mlp");
        if (arch == "mlp") cfg.arch = Arch::Mlp;
        else if (arch == "logreg") cfg.arch = Arch::LogReg;
        else throw ConfigError("model.arch", "expected \"mlp\" or \"logreg\"");
        cfg.hidden = s.get_count("hidden", cfg.hidden, 1);
        s.finish();
    }

    FederationConfig& fed = cfg.federation;
    if (const json* f = root.find("federation")) {
        Section s(*f, "federation");
        fed.rounds = s.get_count("rounds", fed.rounds, 1);
        fed.local_epochs = s.get_count("local_epochs", fed.local_epochs, 1);
        fed.lr = s.get_real("lr", fed.lr, 0.0, false);
        fed.batch_size = s.get_count("batch_size", fed.batch_size, 1);
        fed.history_interval = s.get_count("history_interval", fed.history_interval, 1);
        fed.client_fraction = s.get_real("client_fraction", fed.client_fraction, 0.0, false, 1.0);
        s.finish();
    }
    fed.seed = cfg.seed;

    if (const json* a = root.find("attack")) {
        Section s(*a, "attack");
        AttackSettings& at = cfg.attack;
        at.backdoor = s.get_bool("backdoor", at.backdoor);
        const bool custom = s.find("trigger_pixels") || s.find("trigger_value") || s.find("target_label");
        const auto pixels = s.get_index_list("trigger_pixels");
        const double value = s.get_real("trigger_value", 1.0, 0.0, true, 1.0);
        const std::size_t target = s.get_count("target_label", 0, 0);
        // Empty pixel list: default pixels for the data's dimension.
        if (custom) at.trigger = TriggerSpec{pixels, value, static_cast<int>(target)};
        at.backdoor_fraction = s.get_real("backdoor_fraction", at.backdoor_fraction, 0.0, false, 1.0);
        at.watermark_size = s.get_count("watermark_size", at.watermark_size, 0);
        at.watermark_replicas = s.get_count("watermark_replicas", at.watermark_replicas, 1);
        at.top_k = s.get_count("top_k", at.top_k, 1);
        s.finish();
    }

    if (const json* f = root.find("forget")) cfg.forget = parse_forget(*f, cfg.clients);
    if (cfg.level == BenchmarkLevel::Class && !std::holds_alternative<ForgetClass>(cfg.forget))
        throw ConfigError("forget", "class-level runs need {\"class\": c}");

    if (const json* m = root.find("methods")) {
        if (!m->is_array() || m->empty()) throw ConfigError("methods", "expected a nonempty array of method names");
        cfg.methods.clear();
        for (const auto& e : *m) {
            if (!e.is_string()) throw ConfigError("methods", "expected method names");
            auto parsed = parse_method(e.get<std::string>());
            if (!parsed) throw ConfigError("methods", "unknown method \"" + e.get<std::string>() + "\"");
            if (std::find(cfg.methods.begin(), cfg.methods.end(), *parsed) == cfg.methods.end())
                cfg.methods.push_back(*parsed);
        }
    }

    if (const json* u = root.find("unlearn")) {
        Section s(*u, "unlearn");
        UnlearnOptions& o = cfg.unlearn;
        o.finetune_rounds = s.get_count("finetune_rounds", o.finetune_rounds, 0);
        o.c2t_rounds = s.get_count("c2t_rounds", o.c2t_rounds, 0);
        o.calibration_epochs = s.get_count("calibration_epochs", o.calibration_epochs, 1);
        o.pga_radius_scale = s.get_real("pga_radius_scale", o.pga_radius_scale, 0.0, false);
        if (s.find("pga_lr")) o.pga_lr = s.get_real("pga_lr", 0.0, 0.0, true);
        o.pga_max_steps = s.get_count("pga_max_steps", o.pga_max_steps, 0);
        o.pga_stop_margin = s.get_real("pga_stop_margin", o.pga_stop_margin, -INFINITY, false);
        s.finish();
    }

    root.finish();
    return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("<file>", "cannot read " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("<file>", "malformed JSON in " + path.string() + ": " + e.what());
    }
    return parse_config_json(doc, path.parent_path());
}

json ExperimentConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["level"] = level == BenchmarkLevel::Client ? "client" : "class";
    j["output_dir"] = output_dir.string();
    if (dataset.kind == DatasetSource::Kind::Synthetic) {
        j["dataset"] = {{"source", "synthetic"},          {"name", dataset.name},
                        {"classes", dataset.blobs.num_classes}, {"dim", dataset.blobs.dim},
                        {"per_class", dataset.blobs.per_class}, {"spread", dataset.blobs.spread},
                        {"test_per_class", dataset.test_per_class}};
    } else {
        j["dataset"] = {{"source", "idx"},
                        {"name", dataset.name},
                        {"train_images", dataset.train_images.string()},
                        {"train_labels", dataset.train_labels.string()},
                        {"test_images", dataset.test_images.string()},
                        {"test_labels", dataset.test_labels.string()},
                        {"max_train_per_class", dataset.max_train_per_class},
                        {"max_test", dataset.max_test}};
    }
    j["partition"] = {{"clients", clients}};
    if (const auto* d = std::get_if<DirichletScheme>(&scheme)) {
        j["partition"]["scheme"] = "dirichlet";
        j["partition"]["alpha"] = d->alpha;
    } else {
        j["partition"]["scheme"] = "iid";
    }
    j["model"] = {{"arch", arch == Arch::Mlp ? "mlp" : "logreg"}, {"hidden", arch == Arch::Mlp ? hidden : 0}};
    j["federation"] = {{"rounds", federation.rounds},
                       {"local_epochs", federation.local_epochs},
                       {"lr", federation.lr},
                       {"batch_size", federation.batch_size},
                       {"history_interval", federation.history_interval},
                       {"client_fraction", federation.client_fraction}};
    j["attack"] = {{"backdoor", attack.backdoor},
                   {"backdoor_fraction", attack.backdoor_fraction},
                   {"watermark_size", attack.watermark_size},
                   {"watermark_replicas", attack.watermark_replicas},
                   {"top_k", attack.top_k}};
    if (attack.trigger) {
        if (!attack.trigger->pixel_indices.empty()) j["attack"]["trigger_pixels"] = attack.trigger->pixel_indices;
        j["attack"]["trigger_value"] = attack.trigger->trigger_value;
        j["attack"]["target_label"] = attack.trigger->target_label;
    }
    j["forget"] = forget_to_json(forget);
    j["methods"] = json::array();
    for (auto m : methods) j["methods"].push_back(std::string(method_name(m)));
    j["unlearn"] = {{"finetune_rounds", unlearn.finetune_rounds},
                    {"c2t_rounds", unlearn.c2t_rounds},
                    {"calibration_epochs", unlearn.calibration_epochs},
                    {"pga_radius_scale", unlearn.pga_radius_scale},
                    {"pga_max_steps", unlearn.pga_max_steps},
                    {"pga_stop_margin", unlearn.pga_stop_margin}};
    if (unlearn.pga_lr) j["unlearn"]["pga_lr"] = *unlearn.pga_lr;
    return j;
}

} // namespace fu
