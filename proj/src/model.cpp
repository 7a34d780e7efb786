#include "fu/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fu/binary_io.hpp"
#include "fu/error.hpp"
#include "fu/rng.hpp"

namespace fu {

// ---------------------------------------------------------------------------
// ModelSpec / ParamVector

ModelSpec ModelSpec::logreg(std::size_t input_dim, std::size_t num_classes) {
    ModelSpec s{Arch::LogReg, input_dim, num_classes, 0};
    s.validate();
    return s;
}

ModelSpec ModelSpec::mlp(std::size_t input_dim, std::size_t hidden, std::size_t num_classes) {
    ModelSpec s{Arch::Mlp, input_dim, num_classes, hidden};
    s.validate();
    return s;
}

std::size_t ModelSpec::param_count() const noexcept {
    if (arch == Arch::LogReg) return input_dim * num_classes + num_classes;
    return input_dim * hidden + hidden + hidden * num_classes + num_classes;
}

void ModelSpec::validate() const {
    if (input_dim == 0) throw InputError("model input_dim must be positive");
    if (num_classes < 2) throw InputError("model num_classes must be at least 2");
    if (arch == Arch::Mlp && hidden == 0) throw InputError("mlp hidden width must be positive");
    if (arch == Arch::LogReg && hidden != 0) throw InputError("logreg takes no hidden width");
    if (arch != Arch::LogReg && arch != Arch::Mlp) throw InputError("unknown architecture tag");
}

std::string ModelSpec::describe() const {
    if (arch == Arch::LogReg)
        return "logreg(" + std::to_string(input_dim) + "->" + std::to_string(num_classes) + ")";
    return "mlp(" + std::to_string(input_dim) + "->" + std::to_string(hidden) + "->" +
           std::to_string(num_classes) + ")";
}

ParamVector::ParamVector(const ModelSpec& s, std::vector<double> v) : spec(s), values(std::move(v)) {
    if (values.size() != spec.param_count())
        throw InputError("parameter vector length " + std::to_string(values.size()) + " does not match " +
                         spec.describe());
}

bool ParamVector::all_finite() const noexcept {
    return std::all_of(values.begin(), values.end(), [](double x) { return std::isfinite(x); });
}

double l2_norm(std::span<const double> v) noexcept {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

static void require_same_spec(const ParamVector& a, const ParamVector& b) {
    if (a.spec != b.spec || a.size() != b.size())
        throw InputError("parameter shape mismatch: " + a.spec.describe() + " vs " + b.spec.describe());
}

double l2_distance(const ParamVector& a, const ParamVector& b) {
    require_same_spec(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a.values[i] - b.values[i];
        s += d * d;
    }
    return std::sqrt(s);
}

ParamVector operator+(const ParamVector& a, const ParamVector& b) {
    require_same_spec(a, b);
    ParamVector out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += b.values[i];
    return out;
}

ParamVector operator-(const ParamVector& a, const ParamVector& b) {
    require_same_spec(a, b);
    ParamVector out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] -= b.values[i];
    return out;
}

ParamVector operator*(double s, const ParamVector& a) {
    ParamVector out = a;
    for (double& x : out.values) x *= s;
    return out;
}

void axpy(double alpha, const ParamVector& x, ParamVector& y) {
    require_same_spec(x, y);
    for (std::size_t i = 0; i < y.size(); ++i) y.values[i] += alpha * x.values[i];
}

// ---------------------------------------------------------------------------
// Per-sample kernel

namespace {

struct Offsets {
    std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0;
};

Offsets offsets_of(const ModelSpec& s) {
    Offsets o;
    if (s.arch == Arch::LogReg) {
        o.w1 = 0;
        o.b1 = s.input_dim * s.num_classes;
        return o;
    }
    o.w1 = 0;
    o.b1 = s.input_dim * s.hidden;
    o.w2 = o.b1 + s.hidden;
    o.b2 = o.w2 + s.hidden * s.num_classes;
    return o;
}

// Evaluates one sample at a time. Feature vectors are mostly sparse for image
// data, so zero inputs are skipped in both passes.
class SampleKernel {
public:
    explicit SampleKernel(const ParamVector& params)
        : spec_(params.spec), p_(params.values.data()), off_(offsets_of(params.spec)),
          pre_(spec_.hidden), hidden_(spec_.hidden), dhidden_(spec_.hidden), probs_(spec_.num_classes) {}

    // Fills probs_. Returns nothing; see probs().
    void forward(const double* x) {
        const std::size_t d = spec_.input_dim, k = spec_.num_classes;
        if (spec_.arch == Arch::LogReg) {
            std::copy_n(p_ + off_.b1, k, probs_.data());
            for (std::size_t i = 0; i < d; ++i) {
                const double xi = x[i];
                if (xi == 0.0) continue;
                const double* w = p_ + off_.w1 + i * k;
                for (std::size_t c = 0; c < k; ++c) probs_[c] += xi * w[c];
            }
        } else {
            const std::size_t h = spec_.hidden;
            std::copy_n(p_ + off_.b1, h, pre_.data());
            for (std::size_t i = 0; i < d; ++i) {
                const double xi = x[i];
                if (xi == 0.0) continue;
                const double* w = p_ + off_.w1 + i * h;
                for (std::size_t j = 0; j < h; ++j) pre_[j] += xi * w[j];
            }
            for (std::size_t j = 0; j < h; ++j) hidden_[j] = pre_[j] > 0.0 ? pre_[j] : 0.0;
            std::copy_n(p_ + off_.b2, k, probs_.data());
            for (std::size_t j = 0; j < h; ++j) {
                const double hj = hidden_[j];
                if (hj == 0.0) continue;
                const double* w = p_ + off_.w2 + j * k;
                for (std::size_t c = 0; c < k; ++c) probs_[c] += hj * w[c];
            }
        }
        softmax_inplace(probs_);
    }

    // Cross-entropy of the last forward() against `label`.
    double loss(int label) const { return -std::log(std::max(probs_[label], kProbFloor)); }

    // Accumulates scale * d(loss)/d(params) for the last forward() into g.
    void backward(const double* x, int label, double scale, double* g) {
        if (probs_[label] < kProbFloor) return; // loss is clamped flat here
        const std::size_t d = spec_.input_dim, k = spec_.num_classes;
        probs_[label] -= 1.0; // probs_ now holds dL/dz
        const std::vector<double>& dz = probs_;
        if (spec_.arch == Arch::LogReg) {
            for (std::size_t c = 0; c < k; ++c) g[off_.b1 + c] += scale * dz[c];
            for (std::size_t i = 0; i < d; ++i) {
                const double xi = x[i];
                if (xi == 0.0) continue;
                double* gw = g + off_.w1 + i * k;
                const double s = scale * xi;
                for (std::size_t c = 0; c < k; ++c) gw[c] += s * dz[c];
            }
            return;
        }
        const std::size_t h = spec_.hidden;
        for (std::size_t c = 0; c < k; ++c) g[off_.b2 + c] += scale * dz[c];
        for (std::size_t j = 0; j < h; ++j) {
            const double* w = p_ + off_.w2 + j * k;
            double back = 0.0;
            for (std::size_t c = 0; c < k; ++c) back += w[c] * dz[c];
            dhidden_[j] = pre_[j] > 0.0 ? back : 0.0;
            const double hj = hidden_[j];
            if (hj == 0.0) continue;
            double* gw = g + off_.w2 + j * k;
            const double s = scale * hj;
            for (std::size_t c = 0; c < k; ++c) gw[c] += s * dz[c];
        }
        for (std::size_t j = 0; j < h; ++j) g[off_.b1 + j] += scale * dhidden_[j];
        for (std::size_t i = 0; i < d; ++i) {
            const double xi = x[i];
            if (xi == 0.0) continue;
            double* gw = g + off_.w1 + i * h;
            const double s = scale * xi;
            for (std::size_t j = 0; j < h; ++j) gw[j] += s * dhidden_[j];
        }
    }

    const std::vector<double>& probs() const noexcept { return probs_; }

private:
    const ModelSpec& spec_;
    const double* p_;
    Offsets off_;
    std::vector<double> pre_, hidden_, dhidden_, probs_;
};

void check_batch(const ParamVector& params, const Batch& batch, bool allow_empty) {
    if (batch.dim != params.spec.input_dim)
        throw InputError("feature dimension " + std::to_string(batch.dim) + " does not match model input " +
                         std::to_string(params.spec.input_dim));
    if (batch.features.size() != batch.size() * batch.dim)
        throw InputError("feature buffer size does not match label count");
    if (!allow_empty && batch.size() == 0) throw InputError("empty batch");
    for (int y : batch.labels)
        if (y < 0 || static_cast<std::size_t>(y) >= params.spec.num_classes)
            throw InputError("label " + std::to_string(y) + " out of range");
}

// Sum of losses over `rows`, accumulating scale * grad into g when non-null.
double accumulate(const ParamVector& params, const Batch& batch, std::span<const std::size_t> rows,
                  double scale, double* g) {
    SampleKernel kernel(params);
    double total = 0.0;
    for (std::size_t r : rows) {
        const double* x = batch.features.data() + r * batch.dim;
        kernel.forward(x);
        total += kernel.loss(batch.labels[r]);
        if (g) kernel.backward(x, batch.labels[r], scale, g);
    }
    return total;
}

std::vector<std::size_t> iota_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
}

} // namespace

void softmax_inplace(std::span<double> z) noexcept {
    const double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double& v : z) {
        v = std::exp(v - m);
        sum += v;
    }
    for (double& v : z) v /= sum;
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    ParamVector p(spec);
    Engine eng(seed);
    auto fill = [&](std::size_t offset, std::size_t fan_in, std::size_t fan_out) {
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (std::size_t i = 0; i < fan_in * fan_out; ++i) p.values[offset + i] = dist(eng);
    };
    const Offsets o = offsets_of(spec);
    if (spec.arch == Arch::LogReg) {
        fill(o.w1, spec.input_dim, spec.num_classes);
    } else {
        fill(o.w1, spec.input_dim, spec.hidden);
        fill(o.w2, spec.hidden, spec.num_classes);
    }
    return p;
}

Matrix forward(const ParamVector& params, std::span<const double> features, std::size_t dim) {
    if (dim != params.spec.input_dim)
        throw InputError("feature dimension " + std::to_string(dim) + " does not match model input " +
                         std::to_string(params.spec.input_dim));
    if (features.size() % dim != 0) throw InputError("feature buffer is not a whole number of rows");
    const std::size_t n = features.size() / dim;
    Matrix out(n, params.spec.num_classes);
    SampleKernel kernel(params);
    for (std::size_t r = 0; r < n; ++r) {
        kernel.forward(features.data() + r * dim);
        std::copy(kernel.probs().begin(), kernel.probs().end(), out.row(r).begin());
    }
    return out;
}

Matrix forward(const ParamVector& params, const Matrix& features) {
    if (features.cols != params.spec.input_dim)
        throw InputError("feature dimension " + std::to_string(features.cols) + " does not match model input " +
                         std::to_string(params.spec.input_dim));
    return forward(params, features.data, features.cols);
}

LossGrad loss_and_grad(const ParamVector& params, const Batch& batch) {
    check_batch(params, batch, false);
    LossGrad out{0.0, ParamVector(params.spec)};
    const double scale = 1.0 / static_cast<double>(batch.size());
    const auto rows = iota_rows(batch.size());
    out.loss = accumulate(params, batch, rows, scale, out.grad.values.data()) * scale;
    return out;
}

double mean_loss(const ParamVector& params, const Batch& batch) {
    check_batch(params, batch, false);
    const auto rows = iota_rows(batch.size());
    return accumulate(params, batch, rows, 0.0, nullptr) / static_cast<double>(batch.size());
}

std::vector<double> per_sample_loss(const ParamVector& params, const Batch& batch) {
    check_batch(params, batch, true);
    std::vector<double> out(batch.size());
    SampleKernel kernel(params);
    for (std::size_t r = 0; r < batch.size(); ++r) {
        kernel.forward(batch.features.data() + r * batch.dim);
        out[r] = kernel.loss(batch.labels[r]);
    }
    return out;
}

std::vector<int> predict(const ParamVector& params, const Batch& batch) {
    check_batch(params, batch, true);
    std::vector<int> out(batch.size());
    SampleKernel kernel(params);
    for (std::size_t r = 0; r < batch.size(); ++r) {
        kernel.forward(batch.features.data() + r * batch.dim);
        const auto& p = kernel.probs();
        out[r] = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    }
    return out;
}

ParamVector sgd_epoch(const ParamVector& params, const Batch& data, double lr, std::size_t batch_size,
                      std::uint64_t seed) {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw InputError("learning rate must be a finite value >= 0");
    if (batch_size == 0) throw InputError("batch size must be positive");
    check_batch(params, data, false);
    if (lr == 0.0) return params;

    auto order = iota_rows(data.size());
    Engine eng(seed);
    std::shuffle(order.begin(), order.end(), eng);

    ParamVector theta = params;
    std::vector<double> grad(theta.size());
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t len = std::min(batch_size, order.size() - start);
        std::fill(grad.begin(), grad.end(), 0.0);
        accumulate(theta, data, std::span(order).subspan(start, len), 1.0 / static_cast<double>(len),
                   grad.data());
        for (std::size_t i = 0; i < grad.size(); ++i) theta.values[i] -= lr * grad[i];
    }
    return theta;
}

// ---------------------------------------------------------------------------
// Serialization

void encode_params(const ParamVector& params, ByteWriter& out) {
    out.put_bytes("FUPV");
    out.put_u32(kParamFormatVersion);
    out.put_u32(static_cast<std::uint32_t>(params.spec.arch));
    out.put_u32(static_cast<std::uint32_t>(params.spec.input_dim));
    out.put_u32(static_cast<std::uint32_t>(params.spec.hidden));
    out.put_u32(static_cast<std::uint32_t>(params.spec.num_classes));
    out.put_u64(params.values.size());
    for (double v : params.values) out.put_f64(v);
}

ParamVector decode_params(ByteReader& in) {
    if (in.get_bytes(4) != "FUPV") throw FormatError(in.context() + ": bad parameter magic");
    if (std::uint32_t v = in.get_u32(); v != kParamFormatVersion)
        throw FormatError(in.context() + ": unsupported parameter version " + std::to_string(v));
    const std::uint32_t arch = in.get_u32();
    if (arch > static_cast<std::uint32_t>(Arch::Mlp))
        throw FormatError(in.context() + ": unknown architecture tag " + std::to_string(arch));
    ModelSpec spec;
    spec.arch = static_cast<Arch>(arch);
    spec.input_dim = in.get_u32();
    spec.hidden = in.get_u32();
    spec.num_classes = in.get_u32();
    try {
        spec.validate();
    } catch (const InputError& e) {
        throw FormatError(in.context() + ": " + e.what());
    }
    const std::uint64_t len = in.get_u64();
    if (len != spec.param_count())
        throw FormatError(in.context() + ": length " + std::to_string(len) + " does not match " + spec.describe());
    in.need(len * 8);
    std::vector<double> values(len);
    for (auto& v : values) v = in.get_f64();
    return ParamVector(spec, std::move(values));
}

std::vector<char> serialize_params(const ParamVector& params) {
    ByteWriter w;
    encode_params(params, w);
    return w.take();
}

ParamVector deserialize_params(std::span<const char> bytes, const std::string& context) {
    ByteReader r(bytes, context);
    ParamVector p = decode_params(r);
    if (r.remaining() != 0) throw FormatError(context + ": trailing bytes after parameter blob");
    return p;
}

} // namespace fu
