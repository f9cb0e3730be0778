#pragma once

#include "ltx/params.hpp"
#include "ltx/tensor.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace ltx {

/// Named tensors plus key=value metadata (family, epoch, monitor, ...).
///
/// On disk every tensor is float32; `tensors` should already hold
/// float32-representable values for a bit-exact round trip.
struct Checkpoint {
    ParamSet tensors;
    std::map<std::string, std::string> meta;

    std::string meta_or(std::string_view key, std::string fallback) const;
};

/// LTXC1 encoding. Metadata is written as sorted `key=value` lines.
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// ASCII "P2" heatmap, maxval 255, value round-half-up(m * 255).
/// Throws ContractError for values outside [0,1].
std::string encode_pgm(const Tensor& map);
void write_pgm(const Tensor& map, const std::filesystem::path& path);

/// Shortest decimal that parses back to exactly `v`.
std::string format_double(double v);

/// Map rows as comma-separated shortest round-trip decimals.
std::string encode_map_csv(const Tensor& map);
void write_map_csv(const Tensor& map, const std::filesystem::path& path);
Tensor read_map_csv(const std::filesystem::path& path);

}  // namespace ltx
