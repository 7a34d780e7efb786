#include <algorithm>
#include <cmath>
#include <string>

#include "fu/binary_io.hpp"
#include "fu/dataset.hpp"
#include "fu/error.hpp"

namespace fu {

Dataset parse_idx(std::span<const char> image_bytes, std::span<const char> label_bytes, std::size_t num_classes) {
    ByteReader img(image_bytes, "idx images");
    ByteReader lab(label_bytes, "idx labels");

    if (std::uint32_t m = img.get_u32_be(); m != kIdxImageMagic)
        throw FormatError("idx images: bad magic " + std::to_string(m) + " (expected 2051)");
    if (std::uint32_t m = lab.get_u32_be(); m != kIdxLabelMagic)
        throw FormatError("idx labels: bad magic " + std::to_string(m) + " (expected 2049)");

    const std::size_t n_images = img.get_u32_be();
    const std::size_t rows = img.get_u32_be();
    const std::size_t cols = img.get_u32_be();
    const std::size_t n_labels = lab.get_u32_be();
    if (n_images != n_labels)
        throw FormatError("idx: " + std::to_string(n_images) + " images but " + std::to_string(n_labels) + " labels");
    const std::size_t dim = rows * cols;
    if (dim == 0) throw FormatError("idx images: zero-sized image");

    img.need(n_images * dim);
    lab.need(n_labels);
    if (img.remaining() != n_images * dim) throw FormatError("idx images: trailing bytes");
    if (lab.remaining() != n_labels) throw FormatError("idx labels: trailing bytes");

    std::vector<int> labels(n_labels);
    int max_label = 0;
    for (auto& y : labels) {
        y = lab.get_u8();
        max_label = std::max(max_label, y);
    }
    if (num_classes == 0) num_classes = std::max<std::size_t>(2, static_cast<std::size_t>(max_label) + 1);
    if (static_cast<std::size_t>(max_label) >= num_classes)
        throw FormatError("idx labels: label " + std::to_string(max_label) + " exceeds class count " +
                          std::to_string(num_classes));

    Dataset out(dim, num_classes);
    out.features = Matrix(n_images, dim);
    for (double& v : out.features.data) v = static_cast<double>(img.get_u8()) / 255.0;
    out.labels = std::move(labels);
    out.tags.assign(n_images, SampleTag::Clean);
    return out;
}

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::size_t num_classes) {
    const auto images = read_file(images_path);
    const auto labels = read_file(labels_path);
    try {
        return parse_idx(images, labels, num_classes);
    } catch (const FormatError& e) {
        throw FormatError(images_path.string() + " / " + labels_path.string() + ": " + e.what());
    }
}

IdxBytes encode_idx(const Dataset& data) {
    data.validate();
    const std::size_t dim = data.dim();
    std::size_t side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(dim))));
    std::uint32_t rows = 1, cols = static_cast<std::uint32_t>(dim);
    if (side * side == dim) rows = cols = static_cast<std::uint32_t>(side);

    ByteWriter img;
    img.put_u32_be(kIdxImageMagic);
    img.put_u32_be(static_cast<std::uint32_t>(data.size()));
    img.put_u32_be(rows);
    img.put_u32_be(cols);
    for (double v : data.features.data)
        img.put_u8(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));

    ByteWriter lab;
    lab.put_u32_be(kIdxLabelMagic);
    lab.put_u32_be(static_cast<std::uint32_t>(data.size()));
    for (int y : data.labels) {
        if (y > 255) throw InputError("idx labels are single bytes; label " + std::to_string(y) + " too large");
        lab.put_u8(static_cast<std::uint8_t>(y));
    }
    return {img.take(), lab.take()};
}

void write_idx(const Dataset& data, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path) {
    auto bytes = encode_idx(data);
    write_file(images_path, bytes.images);
    write_file(labels_path, bytes.labels);
}

} // namespace fu
