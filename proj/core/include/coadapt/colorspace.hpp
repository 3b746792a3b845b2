#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "coadapt/image.hpp"

namespace coadapt::color {

// CIELAB with D65 reference white and the 2 degree observer. The white point
// is the image of sRGB (1,1,1) under the linear-RGB -> XYZ matrix, so white
// maps to exactly (100, 0, 0).

inline constexpr double kDefaultRangeTolerance = 1e-9;
inline constexpr double kStdFloor = 1e-6;

/// Per-pixel conversions (gamma-encoded sRGB in [0,1] <-> L*a*b*).
std::array<double, 3> srgb_to_lab(const std::array<double, 3>& rgb);
/// Unclamped inverse; out-of-gamut colors may leave [0,1].
std::array<double, 3> lab_to_srgb_unclamped(const std::array<double, 3>& lab);

/// Throws std::invalid_argument if `img` is not kSrgbUnit or any sample
/// falls outside [-tolerance, 1 + tolerance]. Samples inside the tolerance
/// band are clamped before conversion.
Image rgb_to_lab(const Image& img, double tolerance = kDefaultRangeTolerance);

/// Inverse of rgb_to_lab followed by per-channel clamping to [0,1].
Image lab_to_rgb(const Image& img);

struct ChannelStats {
  std::array<double, 3> mean{};
  std::array<double, 3> std{};
};

/// Per-channel mean and population standard deviation.
ChannelStats channel_stats(const Image& img);

/// Shifts `src` so each channel has the target mean and deviation:
/// (x - src.mean) / max(src.std, eps) * tgt.std + tgt.mean.
/// The result keeps the space tag of `img` and is not clamped.
Image match_statistics(const Image& img, const ChannelStats& src,
                       const ChannelStats& tgt, double eps = kStdFloor);

/// LAB translation of `src` toward the color statistics of `tgt`, before the
/// conversion back to sRGB. Both inputs are kSrgbUnit.
Image translate_to_lab(const Image& src, const Image& tgt, double eps = kStdFloor);

/// Full translation: translate_to_lab followed by lab_to_rgb.
Image translate(const Image& src, const Image& tgt, double eps = kStdFloor);
/// Same, with the target's LAB statistics precomputed.
Image translate(const Image& src, const ChannelStats& tgt_lab, double eps = kStdFloor);

/// Statistics matching directly on sRGB channels, clamped to [0,1]. Only for
/// side-by-side comparison with the LAB route; the pipelines never use it.
Image translate_rgb_space(const Image& src, const Image& tgt, double eps = kStdFloor);

// ---------------------------------------------------------------------------
// Batch translation over image lists.

/// Newline-separated paths; blank lines and lines starting with '#' are
/// skipped. Relative paths are resolved against the list file's directory.
std::vector<std::filesystem::path> read_image_list(const std::filesystem::path& list_file);

/// Target index paired with source `source_index`:
/// Rng(derive_seed(seed, source_index)).uniform_index(target_count).
std::size_t pick_target(std::uint64_t seed, std::size_t source_index,
                        std::size_t target_count);

struct TranslationItem {
  std::filesystem::path source;
  std::filesystem::path target;
  std::filesystem::path output;
  std::optional<std::string> error;
};

struct TranslationReport {
  std::vector<TranslationItem> items;
  std::size_t failures() const;
};

/// Translates every listed source image toward one uniformly drawn target
/// image and writes 8-bit PNGs under `out_dir`, keeping each source's path
/// relative to its list file. Unreadable files are recorded per item and do
/// not stop the batch.
TranslationReport translate_dataset(const std::filesystem::path& source_list,
                                    const std::filesystem::path& target_list,
                                    const std::filesystem::path& out_dir,
                                    std::uint64_t seed);

}  // namespace coadapt::color
