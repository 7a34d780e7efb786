#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "doctest.h"

#include "fu/error.hpp"
#include "fu/metrics.hpp"
#include "support.hpp"

using namespace fu;

namespace {

// k-class dataset of one-hot inputs; sample i sits on coordinate dims[i].
Dataset one_hot(std::size_t k, const std::vector<int>& dims, const std::vector<int>& labels) {
    Dataset d(k, k);
    for (std::size_t i = 0; i < dims.size(); ++i) {
        std::vector<double> x(k, 0.0);
        x[dims[i]] = 1.0;
        d.push_back(x, labels[i]);
    }
    return d;
}

// LogReg that maps coordinate j to class j with high confidence.
ParamVector diagonal_model(std::size_t k, double scale = 40.0) {
    ParamVector p(ModelSpec::logreg(k, k));
    for (std::size_t j = 0; j < k; ++j) p.values[j * k + j] = scale;
    return p;
}

// Brute force over every split of the pooled losses into "called member" /
// "called non-member" that a single threshold can realize.
double mia_bruteforce(const std::vector<double>& m, const std::vector<double>& nm) {
    const std::size_t n = std::min(m.size(), nm.size());
    std::vector<std::pair<double, bool>> pool;
    for (std::size_t i = 0; i < n; ++i) pool.push_back({m[i], true}), pool.push_back({nm[i], false});
    std::size_t best = 0;
    for (std::uint32_t mask = 0; mask < (1u << pool.size()); ++mask) {
        double max_in = -INFINITY, min_out = INFINITY;
        std::size_t correct = 0;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            const bool called = mask >> i & 1;
            if (called) max_in = std::max(max_in, pool[i].first);
            else min_out = std::min(min_out, pool[i].first);
            correct += called == pool[i].second;
        }
        if (max_in < min_out) best = std::max(best, correct);
    }
    return 100.0 * static_cast<double>(best) / (2.0 * static_cast<double>(n));
}

} // namespace

TEST_SUITE("metrics") {

TEST_CASE("accuracy: tie-break and perfect predictor") {
    std::vector<int> dims, labels;
    for (int i = 0; i < 50; ++i) dims.push_back(i % 10), labels.push_back(i % 10);
    const auto data = one_hot(10, dims, labels);
    CHECK(test_accuracy(ParamVector(ModelSpec::logreg(10, 10)), data) == 10.0);
    CHECK(test_accuracy(diagonal_model(10), data) == 100.0);
    CHECK(class_accuracy(diagonal_model(10), data, 3) == 100.0);
    CHECK(rest_class_accuracy(ParamVector(ModelSpec::logreg(10, 10)), data, 0) == 0.0);
    CHECK_THROWS_AS(test_accuracy(diagonal_model(10), Dataset(10, 10)), InputError);
}

TEST_CASE("distance gap") {
    const auto s = ModelSpec::logreg(1, 2);
    const ParamVector a(s, {3, 4, 0, 0}), z(s);
    CHECK(distance_gap(a, z) == 5.0);
    CHECK(distance_gap(a, a) == 0.0);
    CHECK(distance_gap(z, a) == distance_gap(a, z));
    CHECK_THROWS_AS(distance_gap(a, ParamVector(ModelSpec::logreg(2, 2))), InputError);
}

TEST_CASE("backdoor success rate counts target predictions") {
    const auto data = one_hot(4, {0, 1, 2, 3, 0}, {1, 1, 1, 1, 2});
    CHECK(backdoor_success_rate(diagonal_model(4), data, 0) == 40.0);
}

TEST_CASE("backdoor and watermark at chance for random models") {
    const auto test = test::small_blobs(30, 0.05, 4, 10, 16);
    const auto trig = TriggerSpec::default_for(16, 10);
    const auto triggered = make_triggered_testset(test, trig);
    const auto wm = inject_watermark({0, test}, 64, 3).watermark;
    double ba = 0, ret = 0;
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto p = init_params(ModelSpec::mlp(16, 16, 10), s);
        ba += backdoor_success_rate(p, triggered, 0) / 10;
        ret += watermark_retention(p, wm) / 10;
    }
    CHECK(ba <= 100.0 / 10 + 10);
    CHECK(ret <= 10.0 + 10);
}

TEST_CASE("watermark retention of a memorizing model") {
    const auto wm = one_hot(4, {0, 1, 2, 3}, {0, 1, 2, 3});
    CHECK(watermark_retention(diagonal_model(4), wm) == 100.0);
}

TEST_CASE("MIA examples") {
    const auto data = test::small_blobs(10);
    const auto p = init_params(ModelSpec::mlp(16, 8, 4), 2);
    CHECK(mia_attack_accuracy(p, data, data) == 50.0);

    std::vector<double> zeros(8, 0.0), uniform(8, std::log(4.0));
    CHECK(mia_threshold_accuracy(zeros, uniform) == 100.0);
    // Larger member set is truncated to the non-member count.
    std::vector<double> long_members(30, 0.0);
    CHECK(mia_threshold_accuracy(long_members, uniform) == 100.0);
    CHECK_THROWS_AS(mia_threshold_accuracy({}, uniform), InputError);
}

TEST_CASE("MIA threshold sweep equals the brute-force optimum") {
    std::mt19937_64 eng(8);
    for (int t = 0; t < 300; ++t) {
        const std::size_t n = 1 + eng() % 10;
        std::vector<double> m(n), nm(n);
        // Coarse grid so ties between and within the sets are common.
        for (auto& v : m) v = 0.5 * (eng() % 8);
        for (auto& v : nm) v = 0.5 * (eng() % 8);
        CHECK(mia_threshold_accuracy(m, nm) == mia_bruteforce(m, nm));
    }
}

TEST_CASE("EM markers") {
    SUBCASE("the high-loss samples are selected") {
        // Samples 2, 6, 7, 8, 9 carry labels that disagree with their coordinate.
        const auto data = one_hot(4, {0, 1, 2, 3, 0, 1, 2, 3, 0, 1}, {0, 1, 1, 3, 0, 1, 1, 1, 1, 3});
        const auto em = build_em_markers(diagonal_model(4), {0, data}, 5);
        CHECK(em.kind == MarkerKind::ErroneousMemory);
        CHECK(em.marker_label == 1);
        CHECK(em.samples.size() == 4);
        for (int y : em.samples.labels) CHECK(y == 1);
    }
    SUBCASE("majority rule with equal losses") {
        ParamVector zero(ModelSpec::logreg(10, 10));
        const auto data = one_hot(10, {0, 1, 2, 3, 4, 5, 6}, {3, 3, 3, 9, 9, 1, 1});
        const auto em = build_em_markers(zero, {0, data}, 5);
        CHECK(em.marker_label == 3);
        CHECK(em.samples.size() == 3);
        CHECK(em_score(zero, em) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
        CHECK(std::abs(em_score(zero, em) - std::log(10.0)) <= 1e-9);
        CHECK(build_em_markers(zero, {0, data}, 5).samples == em.samples);
    }
    CHECK_THROWS_AS(build_em_markers(diagonal_model(4), {0, one_hot(4, {0}, {0})}, 0), InputError);
    CHECK(em_score(diagonal_model(4), {MarkerKind::ErroneousMemory, one_hot(4, {2}, {2}), 2}) < 1e-15);
}

TEST_CASE("FM markers") {
    CHECK(loss_variance({{0.0}, {2.0}}) == std::vector<double>{1.0});

    const auto data = one_hot(4, {0, 1, 2, 3, 0}, {0, 1, 2, 3, 0});
    const std::vector<std::vector<double>> flat(3, std::vector<double>(5, 0.7));
    const auto fm = build_fm_markers(flat, {0, data}, 2);
    CHECK(fm.samples == data.subset(std::vector<std::size_t>{0, 1}));

    const std::vector<std::vector<double>> traces{{0, 1, 0, 5, 0}, {0, 3, 0, 0, 1}, {0, 1, 0, 5, 0}};
    const auto picked = build_fm_markers(traces, {0, data}, 2);
    CHECK(picked.samples == data.subset(std::vector<std::size_t>{3, 1}));
    CHECK(build_fm_markers(traces, {0, data}, 2).samples == picked.samples);
    CHECK(fm_score(diagonal_model(4), picked) < 1e-12);

    CHECK_THROWS_AS(build_fm_markers({{0, 1, 2, 3, 4}}, {0, data}, 2), InputError);
}

TEST_CASE("efficiency report copies the ledger") {
    UnlearnOutcome o;
    o.ledger.charge_round(3, 100);
    o.ledger.charge_round(2, 100);
    o.ledger.wall_time = 1.5;
    o.rounds_used = 2;
    MetricReport r;
    efficiency_report(o, r);
    CHECK(r.at("rounds") == 2);
    CHECK(r.at("upload_bytes") == 5 * 100 * 8);
    CHECK(r.at("download_bytes") == 5 * 100 * 8);
    CHECK(r.at("wall_time") == 1.5);
    CHECK_THROWS_AS(r.at("ba"), InputError);
}

}
