#pragma once

#include "ltx/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ltx::data {

/// One labelled image with the exact pixels of its object.
///
/// Two-object samples additionally carry the second object's class and
/// footprint; `footprint` then covers only the first object.
struct SyntheticSample {
    Tensor image;                          // [C,S,S], float32-representable values in [0,1]
    std::uint32_t label = 0;
    std::vector<std::uint8_t> footprint;   // S*S, 1 on object pixels
    std::optional<std::uint32_t> second_label;
    std::vector<std::uint8_t> second_footprint;
};

struct Dataset {
    std::size_t channels = 1;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t classes = 0;
    std::vector<SyntheticSample> samples;

    std::size_t size() const noexcept { return samples.size(); }
    bool empty() const noexcept { return samples.empty(); }

    /// Stack the selected images into [B,C,H,W].
    Tensor batch(std::span<const std::size_t> indices) const;
    /// Contiguous sub-range [first, first+count).
    Dataset slice(std::size_t first, std::size_t count) const;
};

enum class ShapeKind : std::uint32_t { square = 0, plus = 1, diagonal_stripe = 2, ring = 3 };

inline constexpr std::size_t kMaxShapeClasses = 4;
inline constexpr double kObjectMin = 0.7;
inline constexpr double kBackgroundMax = 0.3;

struct GenOptions {
    std::size_t n = 0;
    std::size_t classes = 4;
    std::size_t size = 28;
    std::size_t channels = 1;
    std::uint64_t seed = 0;
    bool two_object = false;
};

/// Object mask of side size/4 for one shape class.
std::vector<std::uint8_t> shape_stamp(ShapeKind kind, std::size_t side);

/// Deterministic corpus; a pure function of the options.
///
/// Draw order per sample: object placement (row, col), then, for two-object
/// samples, the second class and the two quadrants before placements; then
/// one uniform per pixel in channel/row/column order.
Dataset gen_synthetic(const GenOptions& options);

/// LTXD1 encoding (little-endian).
std::string encode_dataset(const Dataset& dataset);
Dataset decode_dataset(std::string_view bytes);

void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

/// Whole-file helpers shared by the binary formats.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace ltx::data
