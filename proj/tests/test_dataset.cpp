#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "doctest.h"

#include "fu/binary_io.hpp"
#include "fu/dataset.hpp"
#include "fu/error.hpp"
#include "fu/fedsim.hpp"
#include "support.hpp"

using namespace fu;

namespace {

std::vector<char> idx_images(std::uint32_t magic, std::uint32_t n, std::uint32_t rows, std::uint32_t cols,
                             const std::vector<unsigned char>& pixels) {
    ByteWriter w;
    w.put_u32_be(magic);
    w.put_u32_be(n);
    w.put_u32_be(rows);
    w.put_u32_be(cols);
    for (auto p : pixels) w.put_u8(p);
    return w.take();
}

std::vector<char> idx_labels(std::uint32_t magic, const std::vector<unsigned char>& labels) {
    ByteWriter w;
    w.put_u32_be(magic);
    w.put_u32_be(static_cast<std::uint32_t>(labels.size()));
    for (auto l : labels) w.put_u8(l);
    return w.take();
}

// Marsaglia-Tsang gamma sampler, with the U^(1/a) boost for shape < 1.
double gamma_mt(double a, std::mt19937_64& eng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> z(0.0, 1.0);
    if (a < 1) return gamma_mt(a + 1, eng) * std::pow(u(eng), 1.0 / a);
    const double d = a - 1.0 / 3, c = 1 / std::sqrt(9 * d);
    for (;;) {
        double x, v;
        do {
            x = z(eng);
            v = 1 + c * x;
        } while (v <= 0);
        v = v * v * v;
        const double uu = u(eng);
        if (std::log(uu) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
}

// Share of the dominant class on the most skewed client.
double max_top_share(const std::vector<std::vector<double>>& counts) {
    double best = 0;
    for (const auto& row : counts) {
        double total = 0, top = 0;
        for (double c : row) total += c, top = std::max(top, c);
        if (total > 0) best = std::max(best, top / total);
    }
    return best;
}

} // namespace

TEST_SUITE("datasets") {

TEST_CASE("IDX: handcrafted 2x2 images decode to scaled pixels") {
    const std::vector<unsigned char> px{0, 255, 128, 64, 1, 2, 3, 254};
    const auto d = parse_idx(idx_images(2051, 2, 2, 2, px), idx_labels(2049, {3, 1}));
    REQUIRE(d.size() == 2);
    CHECK(d.dim() == 4);
    CHECK(d.num_classes == 4);
    CHECK(d.labels == std::vector<int>{3, 1});
    for (std::size_t i = 0; i < px.size(); ++i) CHECK(d.features.data[i] == px[i] / 255.0);
    for (auto t : d.tags) CHECK(t == SampleTag::Clean);
}

TEST_CASE("IDX: malformed inputs are format errors") {
    const auto img = idx_images(2051, 2, 2, 2, {0, 1, 2, 3, 4, 5, 6, 7});
    CHECK_THROWS_AS(parse_idx(img, idx_labels(2051, {0, 1})), FormatError);
    CHECK_THROWS_AS(parse_idx(idx_images(2049, 2, 2, 2, {0, 1, 2, 3, 4, 5, 6, 7}), idx_labels(2049, {0, 1})),
                    FormatError);
    CHECK_THROWS_AS(parse_idx(idx_images(2051, 3, 2, 2, std::vector<unsigned char>(12, 0)),
                              idx_labels(2049, {0, 1})),
                    FormatError);
    CHECK_THROWS_AS(parse_idx(std::span(img).first(img.size() - 1), idx_labels(2049, {0, 1})), FormatError);
    CHECK_THROWS_AS(parse_idx(std::span(img).first(6), idx_labels(2049, {0, 1})), FormatError);
    CHECK_THROWS_AS(load_idx("/nonexistent/images", "/nonexistent/labels"), FormatError);
}

TEST_CASE("IDX: write then load is bit-exact") {
    auto data = test::small_blobs(5, 0.2, 3);
    // Quantize first so the byte encoding is lossless.
    const auto quantized = parse_idx(encode_idx(data).images, encode_idx(data).labels, 4);
    const auto again = encode_idx(quantized);
    const auto back = parse_idx(again.images, again.labels, 4);
    CHECK(back.features == quantized.features);
    CHECK(back.labels == quantized.labels);
    CHECK(again.images == encode_idx(data).images);

    const auto dir = std::filesystem::temp_directory_path() / "fu_idx_test";
    write_idx(quantized, dir / "img", dir / "lab");
    CHECK(load_idx(dir / "img", dir / "lab", 4) == quantized);
    std::filesystem::remove_all(dir);
}

TEST_CASE("synthetic blobs") {
    const auto flat = synth_blobs({4, 16, 10, 0.0}, 1);
    for (std::size_t i = 0; i < flat.size(); ++i) {
        const auto row = flat.features.row(i);
        for (std::size_t j = 0; j < 16; ++j) CHECK(row[j] == (int(j) == flat.labels[i] ? 0.8 : 0.0));
    }
    CHECK(synth_blobs({4, 16, 10, 0.05}, 9) == synth_blobs({4, 16, 10, 0.05}, 9));
    CHECK_FALSE(synth_blobs({4, 16, 10, 0.05}, 9) == synth_blobs({4, 16, 10, 0.05}, 10));
    CHECK_THROWS_AS(synth_blobs({4, 3, 10, 0.05}, 1), InputError);

    const auto noisy = synth_blobs({4, 16, 10, 0.5}, 2);
    CHECK(*std::min_element(noisy.features.data.begin(), noisy.features.data.end()) >= 0.0);
    CHECK(*std::max_element(noisy.features.data.begin(), noisy.features.data.end()) <= 1.0);
}

TEST_CASE("blobs are separable by centrally trained logistic regression") {
    const auto train = synth_blobs({4, 16, 100, 0.05}, 21);
    const auto held = synth_blobs({4, 16, 50, 0.05}, 22);
    auto p = init_params(ModelSpec::logreg(16, 4), 1);
    for (std::uint64_t e = 0; e < 20; ++e) p = sgd_epoch(p, train.batch(), 0.5, 16, e);
    const auto pred = predict(p, held.batch());
    std::size_t ok = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == held.labels[i];
    CHECK(double(ok) / pred.size() >= 0.98);
}

TEST_CASE("IID partition: equal split, disjoint cover") {
    const auto data = synth_blobs({10, 10, 100, 0.05}, 1);
    const auto parts = partition_indices(data, 10, IidScheme{}, 5);
    for (const auto& p : parts) CHECK(p.size() == 100);
    CHECK_THROWS_AS(partition_indices(synth_blobs({2, 2, 2, 0}, 1), 5, IidScheme{}, 1), InputError);
    CHECK_THROWS_AS(partition_indices(data, 1, IidScheme{}, 1), InputError);
}

TEST_CASE("partitions are disjoint and cover the data over random configs") {
    std::mt19937_64 eng(99);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t k = 2 + eng() % 5, per = 3 + eng() % 20;
        const auto data = synth_blobs({k, k + 1, per, 0.1}, eng());
        const std::size_t n_clients = 2 + eng() % std::min<std::size_t>(10, data.size() - 1);
        const PartitionScheme scheme = trial % 2 ? PartitionScheme{DirichletScheme{0.05 + (eng() % 100) / 20.0}}
                                                 : PartitionScheme{IidScheme{}};
        const auto parts = partition_indices(data, n_clients, scheme, eng());
        REQUIRE(parts.size() == n_clients);
        std::vector<int> seen(data.size(), 0);
        for (const auto& p : parts)
            for (auto i : p) ++seen[i];
        CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
    }
}

TEST_CASE("Dirichlet(0.1) partition is label-skewed like an independent sampler predicts") {
    // Independent simulation of the per-class proportions.
    std::mt19937_64 eng(2024);
    int skewed_draws = 0;
    for (int draw = 0; draw < 200; ++draw) {
        std::vector<std::vector<double>> counts(10, std::vector<double>(10));
        for (int c = 0; c < 10; ++c) {
            std::vector<double> g(10);
            double s = 0;
            for (auto& x : g) s += x = gamma_mt(0.1, eng);
            for (int j = 0; j < 10; ++j) counts[j][c] = 50 * g[j] / s;
        }
        skewed_draws += max_top_share(counts) > 0.5;
    }
    REQUIRE(skewed_draws >= 195); // the property holds almost surely at alpha = 0.1

    const auto data = synth_blobs({10, 10, 50, 0.05}, 4);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto clients = partition(data, 10, DirichletScheme{0.1}, seed);
        std::vector<std::vector<double>> counts(10, std::vector<double>(10));
        for (const auto& c : clients)
            for (int y : c.data.labels) counts[c.client_id][y] += 1;
        CHECK(max_top_share(counts) > 0.5);
    }
}

TEST_CASE("backdoor injection") {
    const auto client = test::blob_clients(4)[1];
    const auto trig = TriggerSpec::default_for(16, 4);
    CHECK(trig.pixel_indices == std::vector<std::size_t>{12, 13, 14, 15});

    const auto one = inject_backdoor(client, trig, 1e-6, 1);
    CHECK(std::count(one.data.tags.begin(), one.data.tags.end(), SampleTag::Backdoor) == 1);

    const auto p = inject_backdoor(client, trig, 0.3, 2);
    const auto n = client.data.size();
    CHECK(std::size_t(std::count(p.data.tags.begin(), p.data.tags.end(), SampleTag::Backdoor)) ==
          std::size_t(std::ceil(0.3 * n)));
    for (std::size_t i = 0; i < n; ++i) {
        if (p.data.tags[i] == SampleTag::Backdoor) {
            CHECK(p.data.labels[i] == trig.target_label);
            for (auto px : trig.pixel_indices) CHECK(p.data.features(i, px) == trig.trigger_value);
        } else {
            CHECK(p.data.labels[i] == client.data.labels[i]);
            CHECK(std::equal(p.data.features.row(i).begin(), p.data.features.row(i).end(),
                             client.data.features.row(i).begin()));
        }
    }
    CHECK(inject_backdoor(client, trig, 0.3, 2).data == p.data);

    ClientDataset fifty{0, test::small_blobs(13).subset(std::vector<std::size_t>(50, 0))};
    const auto all = inject_backdoor(fifty, trig, 1.0, 3);
    CHECK(std::count(all.data.tags.begin(), all.data.tags.end(), SampleTag::Backdoor) == 50);
}

TEST_CASE("triggered test set drops target-class samples") {
    Dataset test(16, 4);
    std::vector<double> x(16, 0.3);
    for (int i = 0; i < 100; ++i) test.push_back(x, i < 12 ? 0 : 1 + i % 3);
    const auto trig = TriggerSpec::default_for(16, 4);
    const auto t = make_triggered_testset(test, trig);
    CHECK(t.size() == 88);
    for (std::size_t i = 0; i < t.size(); ++i) {
        CHECK(t.labels[i] != 0);
        for (auto px : trig.pixel_indices) CHECK(t.features(i, px) == 1.0);
    }
}

TEST_CASE("watermark injection") {
    const auto client = test::blob_clients(4)[0];
    const auto wm = inject_watermark(client, 64, 5);
    CHECK(wm.client.data.size() == client.data.size() + 320);
    CHECK(wm.watermark.size() == 64);
    for (int y : wm.watermark.labels) CHECK((y >= 0 && y < 4));
    for (std::size_t i = client.data.size(); i < wm.client.data.size(); ++i)
        CHECK(wm.client.data.tags[i] == SampleTag::Watermark);
    // Original rows untouched.
    for (std::size_t i = 0; i < client.data.size(); ++i) CHECK(wm.client.data.labels[i] == client.data.labels[i]);
    CHECK(inject_watermark(client, 64, 5).watermark == wm.watermark);
    CHECK_FALSE(inject_watermark(client, 64, 6).watermark == wm.watermark);
}

TEST_CASE("resolve_forget variants and sample conservation") {
    const auto clients = test::blob_clients(10, 25);
    const auto total = total_samples(clients);

    const auto by_client = resolve_forget(clients, ForgetClient{3});
    CHECK(by_client.retain.size() == 9);
    CHECK(by_client.forget.size() == clients[3].data.size());
    CHECK(by_client.forget.size() + total_samples(by_client.retain) == total);

    const auto by_class = resolve_forget(clients, ForgetClass{2});
    for (const auto& c : by_class.retain)
        CHECK(std::count(c.data.labels.begin(), c.data.labels.end(), 2) == 0);
    CHECK(by_class.forget.size() == 25);
    CHECK(by_class.forget.size() + total_samples(by_class.retain) == total);

    const auto by_samples = resolve_forget(clients, ForgetSamples{2, {0, 1}});
    CHECK(by_samples.forget.size() == 2);
    const auto it = std::find_if(by_samples.retain.begin(), by_samples.retain.end(),
                                 [](const ClientDataset& c) { return c.client_id == 2; });
    REQUIRE(it != by_samples.retain.end());
    CHECK(it->data.size() == clients[2].data.size() - 2);
    CHECK(by_samples.forget.size() + total_samples(by_samples.retain) == total);

    CHECK_THROWS_AS(resolve_forget(clients, ForgetClient{42}), InputError);
    CHECK_THROWS_AS(resolve_forget(clients, ForgetClass{7}), InputError);
    CHECK_THROWS_AS(resolve_forget(clients, ForgetSamples{2, {}}), InputError);
    CHECK_THROWS_AS(resolve_forget(clients, ForgetSamples{2, {0, 0}}), InputError);
    CHECK_THROWS_AS(resolve_forget(clients, ForgetSamples{2, {10000}}), InputError);
}

}
