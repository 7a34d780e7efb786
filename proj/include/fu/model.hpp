#pragma once

// Softmax classifiers over flat parameter vectors: multinomial logistic
// regression and a one-hidden-layer ReLU MLP, with hand-written backprop.
//
// Parameter layout (row-major, input-major):
//   LogReg: W[input_dim][num_classes], b[num_classes]
//   Mlp:    W1[input_dim][hidden], b1[hidden], W2[hidden][num_classes], b2[num_classes]

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fu {

enum class Arch : std::uint32_t { LogReg = 0, Mlp = 1 };

struct ModelSpec {
    Arch arch = Arch::LogReg;
    std::size_t input_dim = 0;
    std::size_t num_classes = 0;
    std::size_t hidden = 0; // 0 for LogReg

    static ModelSpec logreg(std::size_t input_dim, std::size_t num_classes);
    static ModelSpec mlp(std::size_t input_dim, std::size_t hidden, std::size_t num_classes);

    std::size_t param_count() const noexcept;
    void validate() const;
    std::string describe() const;

    bool operator==(const ModelSpec&) const = default;
};

struct ParamVector {
    ModelSpec spec;
    std::vector<double> values;

    ParamVector() = default;
    explicit ParamVector(const ModelSpec& s) : spec(s), values(s.param_count(), 0.0) {}
    ParamVector(const ModelSpec& s, std::vector<double> v);

    std::size_t size() const noexcept { return values.size(); }
    bool all_finite() const noexcept;

    bool operator==(const ParamVector&) const = default;
};

// Flat-vector arithmetic. Binary operations require matching specs.
double l2_norm(std::span<const double> v) noexcept;
double l2_distance(const ParamVector& a, const ParamVector& b);
ParamVector operator+(const ParamVector& a, const ParamVector& b);
ParamVector operator-(const ParamVector& a, const ParamVector& b);
ParamVector operator*(double s, const ParamVector& a);
/// y += alpha * x
void axpy(double alpha, const ParamVector& x, ParamVector& y);

/// Row-major dense matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    bool operator==(const Matrix&) const = default;
};

/// Non-owning view of n samples: n x dim features plus n labels.
struct Batch {
    std::span<const double> features;
    std::span<const int> labels;
    std::size_t dim = 0;

    std::size_t size() const noexcept { return labels.size(); }
};

inline constexpr double kProbFloor = 1e-12;

/// Glorot-uniform weights, zero biases. Deterministic in (spec, seed).
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

/// Row-wise class probabilities for an n x input_dim feature matrix.
Matrix forward(const ParamVector& params, const Matrix& features);
Matrix forward(const ParamVector& params, std::span<const double> features, std::size_t dim);

/// Max-subtracted softmax of a single logit row, in place.
void softmax_inplace(std::span<double> logits) noexcept;

struct LossGrad {
    double loss = 0.0;
    ParamVector grad;
};

/// Mean cross-entropy (probabilities clamped to [1e-12, 1]) and its gradient.
LossGrad loss_and_grad(const ParamVector& params, const Batch& batch);

/// Mean cross-entropy only.
double mean_loss(const ParamVector& params, const Batch& batch);

/// Cross-entropy of every sample.
std::vector<double> per_sample_loss(const ParamVector& params, const Batch& batch);

/// Argmax class per sample, ties to the lowest index.
std::vector<int> predict(const ParamVector& params, const Batch& batch);

/// One pass of mini-batch SGD over `data` in a seeded Fisher-Yates order.
/// The last partial batch is kept. lr == 0 leaves params bit-identical.
ParamVector sgd_epoch(const ParamVector& params, const Batch& data, double lr, std::size_t batch_size,
                      std::uint64_t seed);

// Serialization ("FUPV" container, little-endian).
inline constexpr std::uint32_t kParamFormatVersion = 1;
class ByteWriter;
class ByteReader;
void encode_params(const ParamVector& params, ByteWriter& out);
ParamVector decode_params(ByteReader& in);
std::vector<char> serialize_params(const ParamVector& params);
ParamVector deserialize_params(std::span<const char> bytes, const std::string& context = "param blob");

} // namespace fu
