#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include "fu/model.hpp"

namespace fu {

enum class SampleTag : std::uint8_t { Clean = 0, Backdoor = 1, Watermark = 2 };

/// Features in [0,1], labels in [0, num_classes), one provenance tag per sample.
struct Dataset {
    Matrix features;
    std::vector<int> labels;
    std::vector<SampleTag> tags;
    std::size_t num_classes = 0;

    Dataset() = default;
    Dataset(std::size_t dim, std::size_t num_classes);

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t dim() const noexcept { return features.cols; }
    bool empty() const noexcept { return labels.empty(); }

    Batch batch() const { return {features.data, labels, features.cols}; }

    void push_back(std::span<const double> x, int label, SampleTag tag = SampleTag::Clean);
    void append(const Dataset& other);
    Dataset subset(std::span<const std::size_t> rows) const;
    /// Checks parallel-array lengths and label range.
    void validate() const;

    bool operator==(const Dataset&) const = default;
};

struct ClientDataset {
    int client_id = 0;
    Dataset data;
};

struct TriggerSpec {
    std::vector<std::size_t> pixel_indices;
    double trigger_value = 1.0;
    int target_label = 0;

    /// {0,1,28,29} for 784-dim inputs; otherwise the trailing coordinates not
    /// used as class directions by synth_blobs (up to four).
    static TriggerSpec default_for(std::size_t dim, std::size_t num_classes);
    void validate(std::size_t dim, std::size_t num_classes) const;
};

/// Clean copy of implanted watermark samples.
using WatermarkSet = Dataset;

struct ForgetClient {
    int client_id;
};
struct ForgetClass {
    int label;
};
struct ForgetSamples {
    int client_id;
    std::vector<std::size_t> indices;
};
using ForgetSpec = std::variant<ForgetClient, ForgetClass, ForgetSamples>;

// --- IDX container --------------------------------------------------------

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803; // 2051
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801; // 2049

/// Parses an IDX image/label pair. Pixels are scaled by 1/255, tags are Clean.
/// num_classes == 0 infers max(label) + 1 (at least 2).
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::size_t num_classes = 0);
Dataset parse_idx(std::span<const char> image_bytes, std::span<const char> label_bytes,
                  std::size_t num_classes = 0);

struct IdxBytes {
    std::vector<char> images;
    std::vector<char> labels;
};

/// Encodes features as round(255 * x) bytes. Square dims are stored as
/// side x side images, anything else as 1 x dim.
IdxBytes encode_idx(const Dataset& data);
void write_idx(const Dataset& data, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path);

// --- Generation and partitioning ------------------------------------------

struct BlobParams {
    std::size_t num_classes = 4;
    std::size_t dim = 16;
    std::size_t per_class = 100;
    double spread = 0.05;
};

/// Class c is centred on 0.8 * e_c with isotropic Gaussian noise, clipped to [0,1].
Dataset synth_blobs(const BlobParams& params, std::uint64_t seed);

struct IidScheme {};
struct DirichletScheme {
    double alpha = 0.5;
};
using PartitionScheme = std::variant<IidScheme, DirichletScheme>;

/// Disjoint row-index sets covering [0, n), one per client.
std::vector<std::vector<std::size_t>> partition_indices(const Dataset& data, std::size_t n_clients,
                                                        const PartitionScheme& scheme, std::uint64_t seed);
/// Materializes partition_indices as clients 0..n_clients-1.
std::vector<ClientDataset> partition(const Dataset& data, std::size_t n_clients, const PartitionScheme& scheme,
                                     std::uint64_t seed);

// --- Markers and attacks ---------------------------------------------------

/// Poisons a seeded ceil(fraction * n) subset: trigger pixels set, label set
/// to the target, tag Backdoor. Other samples are untouched.
ClientDataset inject_backdoor(const ClientDataset& client, const TriggerSpec& trig, double fraction,
                              std::uint64_t seed);

/// Stamps the trigger on every test sample whose true label differs from the
/// target. Labels keep their ground truth.
Dataset make_triggered_testset(const Dataset& test, const TriggerSpec& trig);

struct WatermarkInjection {
    ClientDataset client;
    WatermarkSet watermark;
};

/// Appends wm_size uniform-noise samples with random labels, each replicated
/// `replicas` times with tag Watermark.
WatermarkInjection inject_watermark(const ClientDataset& client, std::size_t wm_size, std::uint64_t seed,
                                    std::size_t replicas = 5);

struct ForgetResolution {
    Dataset forget;
    std::vector<ClientDataset> retain;
};

ForgetResolution resolve_forget(std::span<const ClientDataset> clients, const ForgetSpec& spec);

std::size_t total_samples(std::span<const ClientDataset> clients) noexcept;

} // namespace fu
