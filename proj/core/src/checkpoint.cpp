#include "ltx/checkpoint.hpp"

#include "binary_io.hpp"
#include "ltx/data.hpp"
#include "ltx/error.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

namespace ltx {

namespace {

constexpr std::string_view kCheckpointMagic = "LTXC1\n";

}  // namespace

std::string format_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string Checkpoint::meta_or(std::string_view key, std::string fallback) const
{
    const auto it = meta.find(std::string(key));
    return it == meta.end() ? std::move(fallback) : it->second;
}

std::string encode_checkpoint(const Checkpoint& ckpt)
{
    detail::ByteWriter w;
    w.bytes(kCheckpointMagic);
    w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& e : ckpt.tensors.entries()) {
        if (e.name.empty() || e.name.size() > std::numeric_limits<std::uint16_t>::max()) {
            throw FormatError("checkpoint tensor name length out of range: '" + e.name + "'");
        }
        if (e.value.rank() > std::numeric_limits<std::uint8_t>::max()) {
            throw FormatError("checkpoint tensor '" + e.name + "' has too many dims");
        }
        w.u16(static_cast<std::uint16_t>(e.name.size()));
        w.bytes(e.name);
        w.u8(static_cast<std::uint8_t>(e.value.rank()));
        for (std::size_t d : e.value.dims()) {
            w.u32(static_cast<std::uint32_t>(d));
        }
        for (double v : e.value.data()) {
            w.f32(static_cast<float>(v));
        }
    }
    std::string meta;
    for (const auto& [key, value] : ckpt.meta) {
        if (key.empty() || key.find_first_of("=\n") != std::string::npos || value.find('\n') != std::string::npos) {
            throw FormatError("checkpoint metadata entry '" + key + "' is not a single key=value line");
        }
        meta += key + "=" + value + "\n";
    }
    if (meta.size() > std::numeric_limits<std::uint16_t>::max()) {
        throw FormatError("checkpoint metadata exceeds 65535 bytes");
    }
    w.u16(static_cast<std::uint16_t>(meta.size()));
    w.bytes(meta);
    return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes)
{
    detail::ByteReader r(bytes);
    r.expect_magic(kCheckpointMagic, "LTXC1 checkpoint");
    Checkpoint ckpt;
    const std::uint32_t count = r.u32("tensor count");
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::size_t name_at = r.position();
        const std::uint16_t len = r.u16("tensor name length");
        if (len == 0) {
            throw FormatError("empty tensor name", name_at);
        }
        std::string name(r.bytes(len, "tensor name"));
        if (ckpt.tensors.contains(name)) {
            throw FormatError("duplicate tensor name '" + name + "'", name_at);
        }
        const std::uint8_t ndim = r.u8("tensor rank");
        Shape dims;
        for (std::uint8_t i = 0; i < ndim; ++i) {
            const std::size_t at = r.position();
            const std::uint32_t d = r.u32("tensor dims");
            if (d == 0) {
                throw FormatError("tensor '" + name + "' has a zero dimension", at);
            }
            dims.push_back(d);
        }
        const std::size_t n = shape_size(dims);
        r.need(n * 4, "tensor data");
        std::vector<double> values(n);
        for (double& v : values) {
            v = static_cast<double>(r.f32("tensor data"));
        }
        ckpt.tensors.add(std::move(name), Tensor(std::move(dims), std::move(values)));
    }
    const std::uint16_t meta_len = r.u16("metadata length");
    const std::size_t meta_at = r.position();
    const std::string_view meta = r.bytes(meta_len, "metadata");
    std::size_t start = 0;
    while (start < meta.size()) {
        std::size_t end = meta.find('\n', start);
        if (end == std::string_view::npos) {
            end = meta.size();
        }
        const std::string_view line = meta.substr(start, end - start);
        if (!line.empty()) {
            const std::size_t eq = line.find('=');
            if (eq == std::string_view::npos || eq == 0) {
                throw FormatError("metadata line without key=value", meta_at + start);
            }
            ckpt.meta[std::string(line.substr(0, eq))] = std::string(line.substr(eq + 1));
        }
        start = end + 1;
    }
    if (r.remaining() != 0) {
        throw FormatError("trailing bytes after metadata", r.position());
    }
    return ckpt;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path)
{
    data::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path)
{
    return decode_checkpoint(data::read_file(path));
}

std::string encode_pgm(const Tensor& map)
{
    if (map.rank() != 2) {
        throw ContractError("write_pgm: expected a 2-D map, got " + shape_string(map.dims()));
    }
    const std::size_t h = map.dim(0);
    const std::size_t w = map.dim(1);
    std::ostringstream os;
    os << "P2\n" << w << ' ' << h << "\n255\n";
    for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
            const double v = map.at(i, j);
            if (!(v >= 0.0 && v <= 1.0)) {
                throw ContractError("write_pgm: value " + format_double(v) + " outside [0,1]");
            }
            if (j > 0) {
                os << ' ';
            }
            os << static_cast<int>(std::floor(v * 255.0 + 0.5));
        }
        os << '\n';
    }
    return os.str();
}

void write_pgm(const Tensor& map, const std::filesystem::path& path)
{
    data::write_file(path, encode_pgm(map));
}

std::string encode_map_csv(const Tensor& map)
{
    if (map.rank() != 2) {
        throw ContractError("map csv: expected a 2-D map, got " + shape_string(map.dims()));
    }
    std::string out;
    for (std::size_t i = 0; i < map.dim(0); ++i) {
        for (std::size_t j = 0; j < map.dim(1); ++j) {
            if (j > 0) {
                out += ',';
            }
            out += format_double(map.at(i, j));
        }
        out += '\n';
    }
    return out;
}

void write_map_csv(const Tensor& map, const std::filesystem::path& path)
{
    data::write_file(path, encode_map_csv(map));
}

Tensor read_map_csv(const std::filesystem::path& path)
{
    const std::string text = data::read_file(path);
    std::vector<double> values;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::size_t count = 0;
        const char* p = line.data();
        const char* end = line.data() + line.size();
        while (p < end) {
            double v = 0.0;
            const auto res = std::from_chars(p, end, v);
            if (res.ec != std::errc{}) {
                throw FormatError("map csv: bad number on row " + std::to_string(rows));
            }
            values.push_back(v);
            ++count;
            p = res.ptr;
            if (p < end && *p == ',') {
                ++p;
            }
        }
        if (rows > 0 && count != cols) {
            throw FormatError("map csv: ragged row " + std::to_string(rows));
        }
        cols = count;
        ++rows;
    }
    if (rows == 0) {
        throw FormatError("map csv: empty file");
    }
    return Tensor({rows, cols}, std::move(values));
}

}  // namespace ltx
