#include "fu/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "fu/error.hpp"
#include "fu/rng.hpp"

namespace fu {

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(std::size_t dim, std::size_t k) : features(0, dim), num_classes(k) {}

void Dataset::push_back(std::span<const double> x, int label, SampleTag tag) {
    if (x.size() != dim()) throw InputError("sample dimension mismatch");
    features.data.insert(features.data.end(), x.begin(), x.end());
    ++features.rows;
    labels.push_back(label);
    tags.push_back(tag);
}

void Dataset::append(const Dataset& other) {
    if (other.empty()) return;
    if (other.dim() != dim()) throw InputError("cannot append datasets of different dimension");
    features.data.insert(features.data.end(), other.features.data.begin(), other.features.data.end());
    features.rows += other.features.rows;
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
    tags.insert(tags.end(), other.tags.begin(), other.tags.end());
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    Dataset out(dim(), num_classes);
    out.features.data.reserve(rows.size() * dim());
    for (std::size_t r : rows) {
        if (r >= size()) throw InputError("row index " + std::to_string(r) + " out of range");
        out.push_back(features.row(r), labels[r], tags[r]);
    }
    return out;
}

void Dataset::validate() const {
    if (features.rows != labels.size() || tags.size() != labels.size() ||
        features.data.size() != features.rows * features.cols)
        throw InputError("dataset arrays have inconsistent lengths");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
            throw InputError("label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
}

std::size_t total_samples(std::span<const ClientDataset> clients) noexcept {
    std::size_t n = 0;
    for (const auto& c : clients) n += c.data.size();
    return n;
}

// ---------------------------------------------------------------------------
// Trigger

TriggerSpec TriggerSpec::default_for(std::size_t dim, std::size_t num_classes) {
    TriggerSpec t;
    if (dim == 784) {
        t.pixel_indices = {0, 1, 28, 29};
    } else {
        const std::size_t free = dim > num_classes ? dim - num_classes : 1;
        const std::size_t count = std::min<std::size_t>(4, free);
        for (std::size_t i = dim - count; i < dim; ++i) t.pixel_indices.push_back(i);
    }
    return t;
}

void TriggerSpec::validate(std::size_t dim, std::size_t num_classes) const {
    if (pixel_indices.empty()) throw InputError("trigger needs at least one pixel");
    for (auto i : pixel_indices)
        if (i >= dim) throw InputError("trigger pixel " + std::to_string(i) + " outside feature range");
    if (!(trigger_value >= 0.0 && trigger_value <= 1.0)) throw InputError("trigger value must lie in [0,1]");
    if (target_label < 0 || static_cast<std::size_t>(target_label) >= num_classes)
        throw InputError("trigger target label out of range");
}

// ---------------------------------------------------------------------------
// Synthetic data

Dataset synth_blobs(const BlobParams& p, std::uint64_t seed) {
    if (p.num_classes < 2) throw InputError("synthetic data needs at least 2 classes");
    if (p.dim < p.num_classes)
        throw InputError("synthetic dim " + std::to_string(p.dim) + " is smaller than class count " +
                         std::to_string(p.num_classes));
    if (!(p.spread >= 0.0) || !std::isfinite(p.spread)) throw InputError("synthetic spread must be >= 0");

    Engine eng(seed);
    std::normal_distribution<double> noise(0.0, p.spread > 0.0 ? p.spread : 1.0);
    Dataset out(p.dim, p.num_classes);
    out.features.data.reserve(p.num_classes * p.per_class * p.dim);
    std::vector<double> x(p.dim);
    for (std::size_t c = 0; c < p.num_classes; ++c) {
        for (std::size_t s = 0; s < p.per_class; ++s) {
            for (std::size_t j = 0; j < p.dim; ++j) {
                const double mean = j == c ? 0.8 : 0.0;
                const double eps = p.spread > 0.0 ? noise(eng) : 0.0;
                x[j] = std::clamp(mean + eps, 0.0, 1.0);
            }
            out.push_back(x, static_cast<int>(c));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Partitioning

std::vector<std::vector<std::size_t>> partition_indices(const Dataset& data, std::size_t n_clients,
                                                        const PartitionScheme& scheme, std::uint64_t seed) {
    const std::size_t n = data.size();
    if (n_clients < 2) throw InputError("partition needs at least 2 clients");
    if (n_clients > n)
        throw InputError("cannot split " + std::to_string(n) + " samples over " + std::to_string(n_clients) +
                         " clients");

    Engine eng(derive_seed(seed, {stream::kPartition}));
    std::vector<std::vector<std::size_t>> parts(n_clients);

    if (std::holds_alternative<IidScheme>(scheme)) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), eng);
        const std::size_t base = n / n_clients, extra = n % n_clients;
        std::size_t pos = 0;
        for (std::size_t c = 0; c < n_clients; ++c) {
            const std::size_t len = base + (c < extra ? 1 : 0);
            parts[c].assign(order.begin() + pos, order.begin() + pos + len);
            pos += len;
        }
    } else {
        const double alpha = std::get<DirichletScheme>(scheme).alpha;
        if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InputError("dirichlet alpha must be positive");
        std::gamma_distribution<double> gamma(alpha, 1.0);
        std::vector<std::vector<std::size_t>> by_class(data.num_classes);
        for (std::size_t i = 0; i < n; ++i) by_class[data.labels[i]].push_back(i);
        std::vector<double> share(n_clients);
        for (auto& members : by_class) {
            std::shuffle(members.begin(), members.end(), eng);
            double total = 0.0;
            for (auto& s : share) total += (s = gamma(eng));
            if (total <= 0.0) {
                // Every draw underflowed; give the whole class to one client.
                std::fill(share.begin(), share.end(), 0.0);
                share[std::uniform_int_distribution<std::size_t>(0, n_clients - 1)(eng)] = total = 1.0;
            }
            double cumulative = 0.0;
            std::size_t start = 0;
            for (std::size_t c = 0; c < n_clients; ++c) {
                cumulative += share[c] / total;
                std::size_t end = c + 1 == n_clients
                                      ? members.size()
                                      : std::min(members.size(), static_cast<std::size_t>(std::floor(
                                                                     cumulative * static_cast<double>(members.size()))));
                end = std::max(end, start);
                parts[c].insert(parts[c].end(), members.begin() + start, members.begin() + end);
                start = end;
            }
        }
    }
    for (auto& p : parts) std::sort(p.begin(), p.end());
    return parts;
}

std::vector<ClientDataset> partition(const Dataset& data, std::size_t n_clients, const PartitionScheme& scheme,
                                     std::uint64_t seed) {
    auto parts = partition_indices(data, n_clients, scheme, seed);
    std::vector<ClientDataset> clients;
    clients.reserve(n_clients);
    for (std::size_t c = 0; c < n_clients; ++c) clients.push_back({static_cast<int>(c), data.subset(parts[c])});
    return clients;
}

// ---------------------------------------------------------------------------
// Markers

ClientDataset inject_backdoor(const ClientDataset& client, const TriggerSpec& trig, double fraction,
                              std::uint64_t seed) {
    const std::size_t n = client.data.size();
    if (n == 0) throw InputError("cannot poison an empty client");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw InputError("backdoor fraction must lie in (0,1]");
    trig.validate(client.data.dim(), client.data.num_classes);

    // Guard against 0.3 * 400 = 120.00000000000001 rounding up.
    auto count = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
    count = std::clamp<std::size_t>(count, 1, n);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Engine eng(seed);
    std::shuffle(order.begin(), order.end(), eng);

    ClientDataset out = client;
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t r = order[k];
        auto row = out.data.features.row(r);
        for (auto px : trig.pixel_indices) row[px] = trig.trigger_value;
        out.data.labels[r] = trig.target_label;
        out.data.tags[r] = SampleTag::Backdoor;
    }
    return out;
}

Dataset make_triggered_testset(const Dataset& test, const TriggerSpec& trig) {
    Dataset out(test.dim(), test.num_classes);
    if (test.empty()) return out;
    trig.validate(test.dim(), test.num_classes);
    std::vector<double> x(test.dim());
    for (std::size_t r = 0; r < test.size(); ++r) {
        if (test.labels[r] == trig.target_label) continue;
        auto row = test.features.row(r);
        std::copy(row.begin(), row.end(), x.begin());
        for (auto px : trig.pixel_indices) x[px] = trig.trigger_value;
        out.push_back(x, test.labels[r], SampleTag::Backdoor);
    }
    return out;
}

WatermarkInjection inject_watermark(const ClientDataset& client, std::size_t wm_size, std::uint64_t seed,
                                    std::size_t replicas) {
    if (wm_size == 0) throw InputError("watermark size must be at least 1");
    if (replicas == 0) throw InputError("watermark replication must be at least 1");
    const std::size_t dim = client.data.dim(), k = client.data.num_classes;
    if (dim == 0 || k < 2) throw InputError("client dataset has no feature/class layout");

    Engine eng(seed);
    std::uniform_real_distribution<double> pixel(0.0, 1.0);
    std::uniform_int_distribution<int> label(0, static_cast<int>(k) - 1);

    WatermarkSet wm(dim, k);
    std::vector<double> x(dim);
    for (std::size_t i = 0; i < wm_size; ++i) {
        for (auto& v : x) v = pixel(eng);
        wm.push_back(x, label(eng), SampleTag::Watermark);
    }

    WatermarkInjection out{client, wm};
    for (std::size_t r = 0; r < replicas; ++r) out.client.data.append(wm);
    return out;
}

// ---------------------------------------------------------------------------
// Forget-set resolution

namespace {

const ClientDataset& find_client(std::span<const ClientDataset> clients, int id) {
    for (const auto& c : clients)
        if (c.client_id == id) return c;
    throw InputError("unknown client " + std::to_string(id));
}

} // namespace

ForgetResolution resolve_forget(std::span<const ClientDataset> clients, const ForgetSpec& spec) {
    if (clients.empty()) throw InputError("no clients to resolve a forget request against");
    const std::size_t dim = clients.front().data.dim();
    const std::size_t k = clients.front().data.num_classes;
    ForgetResolution out{Dataset(dim, k), {}};

    if (const auto* fc = std::get_if<ForgetClient>(&spec)) {
        out.forget = find_client(clients, fc->client_id).data;
        for (const auto& c : clients)
            if (c.client_id != fc->client_id) out.retain.push_back(c);
    } else if (const auto* fk = std::get_if<ForgetClass>(&spec)) {
        if (fk->label < 0 || static_cast<std::size_t>(fk->label) >= k)
            throw InputError("unknown class " + std::to_string(fk->label));
        for (const auto& c : clients) {
            std::vector<std::size_t> keep, drop;
            for (std::size_t r = 0; r < c.data.size(); ++r)
                (c.data.labels[r] == fk->label ? drop : keep).push_back(r);
            out.forget.append(c.data.subset(drop));
            out.retain.push_back({c.client_id, c.data.subset(keep)});
        }
    } else {
        const auto& fs = std::get<ForgetSamples>(spec);
        const ClientDataset& owner = find_client(clients, fs.client_id);
        std::set<std::size_t> listed;
        for (auto i : fs.indices) {
            if (i >= owner.data.size())
                throw InputError("sample " + std::to_string(i) + " not in client " + std::to_string(fs.client_id));
            if (!listed.insert(i).second) throw InputError("sample " + std::to_string(i) + " listed twice");
        }
        out.forget = owner.data.subset(fs.indices);
        for (const auto& c : clients) {
            if (c.client_id != fs.client_id) {
                out.retain.push_back(c);
                continue;
            }
            std::vector<std::size_t> keep;
            for (std::size_t r = 0; r < c.data.size(); ++r)
                if (!listed.contains(r)) keep.push_back(r);
            out.retain.push_back({c.client_id, c.data.subset(keep)});
        }
    }

    if (out.forget.empty()) throw InputError("forget request resolves to an empty set");
    return out;
}

} // namespace fu
