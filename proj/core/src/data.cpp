#include "ltx/data.hpp"

#include "binary_io.hpp"
#include "ltx/error.hpp"
#include "ltx/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

namespace ltx::data {

namespace {

constexpr std::string_view kDatasetMagic = "LTXD1\n";

float object_intensity(double u)
{
    float v = static_cast<float>(kObjectMin + (1.0 - kObjectMin) * u);
    if (static_cast<double>(v) < kObjectMin) {
        v = std::nextafter(v, 1.0F);
    }
    return v;
}

float background_intensity(double u)
{
    float v = static_cast<float>(kBackgroundMax * u);
    if (static_cast<double>(v) > kBackgroundMax) {
        v = std::nextafter(v, 0.0F);
    }
    return v;
}

void stamp(std::vector<std::uint8_t>& footprint, std::size_t size, const std::vector<std::uint8_t>& shape,
           std::size_t side, std::size_t row, std::size_t col)
{
    for (std::size_t i = 0; i < side; ++i) {
        for (std::size_t j = 0; j < side; ++j) {
            if (shape[i * side + j] != 0) {
                footprint[(row + i) * size + col + j] = 1;
            }
        }
    }
}

std::uint32_t checked_u32(std::size_t v, const char* what)
{
    if (v > std::numeric_limits<std::uint32_t>::max()) {
        throw ContractError(std::string(what) + " does not fit in 32 bits");
    }
    return static_cast<std::uint32_t>(v);
}

}  // namespace

Tensor Dataset::batch(std::span<const std::size_t> indices) const
{
    const std::size_t per = channels * height * width;
    Tensor out({indices.size(), channels, height, width});
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const Tensor& img = samples.at(indices[b]).image;
        std::copy_n(img.ptr(), per, out.ptr() + b * per);
    }
    return out;
}

Dataset Dataset::slice(std::size_t first, std::size_t count) const
{
    if (first + count > samples.size()) {
        throw ContractError("Dataset::slice out of range");
    }
    Dataset out{channels, height, width, classes, {}};
    out.samples.assign(samples.begin() + static_cast<std::ptrdiff_t>(first),
                       samples.begin() + static_cast<std::ptrdiff_t>(first + count));
    return out;
}

std::vector<std::uint8_t> shape_stamp(ShapeKind kind, std::size_t side)
{
    std::vector<std::uint8_t> m(side * side, 0);
    const std::size_t bar = (side / 3) | 1U;
    const std::size_t lo = (side - std::min(bar, side)) / 2;
    for (std::size_t i = 0; i < side; ++i) {
        for (std::size_t j = 0; j < side; ++j) {
            bool on = false;
            switch (kind) {
            case ShapeKind::square: on = true; break;
            case ShapeKind::plus: on = (i >= lo && i < lo + bar) || (j >= lo && j < lo + bar); break;
            case ShapeKind::diagonal_stripe: on = (i > j ? i - j : j - i) <= 1; break;
            case ShapeKind::ring: on = i == 0 || j == 0 || i + 1 == side || j + 1 == side; break;
            }
            m[i * side + j] = on ? 1 : 0;
        }
    }
    return m;
}

Dataset gen_synthetic(const GenOptions& o)
{
    if (o.size < 12) {
        throw ContractError("gen_synthetic: image size must be at least 12, got " + std::to_string(o.size));
    }
    if (o.classes < 1 || o.classes > kMaxShapeClasses) {
        throw ContractError("gen_synthetic: classes must be in [1, 4], got " + std::to_string(o.classes));
    }
    if (o.channels < 1) {
        throw ContractError("gen_synthetic: channels must be positive");
    }
    if (o.two_object && o.classes < 2) {
        throw ContractError("gen_synthetic: two-object samples need at least 2 classes");
    }
    const std::size_t S = o.size;
    const std::size_t side = S / 4;
    const std::size_t quadrant = S / 2;
    if (side == 0 || side > quadrant) {
        throw ContractError("gen_synthetic: shape of side " + std::to_string(side) + " cannot fit");
    }
    std::vector<std::vector<std::uint8_t>> shapes;
    for (std::size_t k = 0; k < o.classes; ++k) {
        shapes.push_back(shape_stamp(static_cast<ShapeKind>(k), side));
    }

    SplitMix64 rng(o.seed);
    Dataset ds{o.channels, S, S, o.classes, {}};
    ds.samples.reserve(o.n);
    for (std::size_t i = 0; i < o.n; ++i) {
        SyntheticSample s;
        s.label = static_cast<std::uint32_t>(i % o.classes);
        s.footprint.assign(S * S, 0);
        if (!o.two_object) {
            const std::size_t row = rng.below(S - side + 1);
            const std::size_t col = rng.below(S - side + 1);
            stamp(s.footprint, S, shapes[s.label], side, row, col);
        } else {
            const auto second = static_cast<std::uint32_t>((s.label + 1 + rng.below(o.classes - 1)) % o.classes);
            const std::size_t qa = rng.below(4);
            const std::size_t qb = (qa + 1 + rng.below(3)) % 4;
            s.second_label = second;
            s.second_footprint.assign(S * S, 0);
            const std::size_t ra = (qa / 2) * quadrant + rng.below(quadrant - side + 1);
            const std::size_t ca = (qa % 2) * quadrant + rng.below(quadrant - side + 1);
            const std::size_t rb = (qb / 2) * quadrant + rng.below(quadrant - side + 1);
            const std::size_t cb = (qb % 2) * quadrant + rng.below(quadrant - side + 1);
            stamp(s.footprint, S, shapes[s.label], side, ra, ca);
            stamp(s.second_footprint, S, shapes[second], side, rb, cb);
        }
        s.image = Tensor({o.channels, S, S});
        for (std::size_t c = 0; c < o.channels; ++c) {
            for (std::size_t p = 0; p < S * S; ++p) {
                const double u = rng.uniform();
                const bool object = s.footprint[p] != 0 || (!s.second_footprint.empty() && s.second_footprint[p] != 0);
                s.image[c * S * S + p] = object ? object_intensity(u) : background_intensity(u);
            }
        }
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

std::string encode_dataset(const Dataset& ds)
{
    if (ds.samples.empty()) {
        throw ContractError("write_dataset: dataset is empty");
    }
    detail::ByteWriter w;
    w.bytes(kDatasetMagic);
    w.u32(checked_u32(ds.samples.size(), "sample count"));
    w.u32(checked_u32(ds.channels, "channels"));
    w.u32(checked_u32(ds.height, "height"));
    w.u32(checked_u32(ds.width, "width"));
    w.u32(checked_u32(ds.classes, "classes"));
    const std::size_t per = ds.channels * ds.height * ds.width;
    for (const auto& s : ds.samples) {
        if (s.image.size() != per) {
            throw ContractError("write_dataset: image " + shape_string(s.image.dims()) + " does not match header");
        }
        for (double v : s.image.data()) {
            w.f32(static_cast<float>(v));
        }
    }
    for (const auto& s : ds.samples) {
        w.u32(s.label);
    }
    for (const auto& s : ds.samples) {
        // Two-object samples store the union of both objects.
        for (std::size_t p = 0; p < ds.height * ds.width; ++p) {
            const bool on = s.footprint.at(p) != 0 || (!s.second_footprint.empty() && s.second_footprint[p] != 0);
            w.u8(on ? 1 : 0);
        }
    }
    return w.take();
}

Dataset decode_dataset(std::string_view bytes)
{
    detail::ByteReader r(bytes);
    r.expect_magic(kDatasetMagic, "LTXD1 dataset");
    Dataset ds;
    const std::size_t n = r.u32("header (sample count)");
    ds.channels = r.u32("header (channels)");
    ds.height = r.u32("header (height)");
    ds.width = r.u32("header (width)");
    ds.classes = r.u32("header (classes)");
    if (n == 0 || ds.channels == 0 || ds.height == 0 || ds.width == 0) {
        throw FormatError("LTXD1 header has a zero dimension", 6);
    }
    const std::size_t per = ds.channels * ds.height * ds.width;
    r.need(n * per * 4, "pixel section");
    ds.samples.resize(n);
    for (auto& s : ds.samples) {
        s.image = Tensor({ds.channels, ds.height, ds.width});
        for (double& v : s.image.values()) {
            v = static_cast<double>(r.f32("pixel section"));
        }
    }
    r.need(n * 4, "label section");
    for (auto& s : ds.samples) {
        const std::size_t at = r.position();
        s.label = r.u32("label section");
        if (ds.classes > 0 && s.label >= ds.classes) {
            throw FormatError("label " + std::to_string(s.label) + " out of range for " + std::to_string(ds.classes) +
                                  " classes",
                              at);
        }
    }
    r.need(n * ds.height * ds.width, "footprint section");
    for (auto& s : ds.samples) {
        const std::string_view fp = r.bytes(ds.height * ds.width, "footprint section");
        s.footprint.assign(fp.begin(), fp.end());
    }
    if (r.remaining() != 0) {
        throw FormatError("trailing bytes after footprint section", r.position());
    }
    return ds;
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "' for reading");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("failed writing '" + path.string() + "'");
    }
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path)
{
    write_file(path, encode_dataset(dataset));
}

Dataset read_dataset(const std::filesystem::path& path)
{
    return decode_dataset(read_file(path));
}

}  // namespace ltx::data
