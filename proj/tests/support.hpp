#pragma once

// Shared fixtures and reference computations for the unit tests.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "fu/dataset.hpp"
#include "fu/fedsim.hpp"
#include "fu/model.hpp"

namespace fu::test {

inline Dataset small_blobs(std::size_t per_class = 40, double spread = 0.05, std::uint64_t seed = 7,
                           std::size_t k = 4, std::size_t d = 16) {
    return synth_blobs({k, d, per_class, spread}, seed);
}

inline std::vector<ClientDataset> blob_clients(std::size_t n_clients, std::size_t per_class = 40,
                                               std::uint64_t seed = 7) {
    return partition(small_blobs(per_class, 0.05, seed), n_clients, IidScheme{}, seed + 1);
}

inline FederationConfig blob_config(std::size_t rounds = 10, std::size_t hidden = 8) {
    FederationConfig cfg;
    cfg.model = ModelSpec::mlp(16, hidden, 4);
    cfg.rounds = rounds;
    cfg.local_epochs = 1;
    cfg.lr = 0.1;
    cfg.batch_size = 16;
    cfg.seed = 3;
    return cfg;
}

/// Central finite differences of the mean loss, one coordinate at a time.
inline std::vector<double> numeric_gradient(const ParamVector& params, const Batch& batch, double eps = 1e-6) {
    std::vector<double> g(params.size());
    ParamVector probe = params;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double x = params.values[i];
        probe.values[i] = x + eps;
        const double up = mean_loss(probe, batch);
        probe.values[i] = x - eps;
        const double down = mean_loss(probe, batch);
        probe.values[i] = x;
        g[i] = (up - down) / (2 * eps);
    }
    return g;
}

/// ||a - b|| / (||a|| + ||b||), 0 when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::sqrt(na) + std::sqrt(nb);
    return denom == 0 ? 0 : std::sqrt(diff) / denom;
}

/// Random model, inputs and labels for gradient checks. Inputs avoid exact
/// zeros and the parameters are scaled up so ReLU units are mixed.
struct GradCase {
    ParamVector params;
    std::vector<double> x;
    std::vector<int> y;
    Batch batch() const { return {x, y, params.spec.input_dim}; }
};

inline GradCase random_grad_case(std::uint64_t seed) {
    std::mt19937_64 eng(seed);
    std::uniform_int_distribution<std::size_t> dim(2, 7), cls(2, 5), hid(2, 6), n(1, 6);
    const std::size_t d = dim(eng), k = cls(eng), b = n(eng);
    const ModelSpec spec = (seed % 2) ? ModelSpec::mlp(d, hid(eng), k) : ModelSpec::logreg(d, k);
    GradCase c{init_params(spec, seed), {}, {}};
    std::uniform_real_distribution<double> u(0.05, 1.0), w(-1.0, 1.0);
    for (auto& v : c.params.values) v = w(eng);
    for (std::size_t i = 0; i < b * d; ++i) c.x.push_back(u(eng));
    std::uniform_int_distribution<int> lab(0, static_cast<int>(k) - 1);
    for (std::size_t i = 0; i < b; ++i) c.y.push_back(lab(eng));
    return c;
}

} // namespace fu::test
