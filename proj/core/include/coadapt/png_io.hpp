#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "coadapt/image.hpp"

namespace coadapt::io {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit quantization used for all image files: floor(v * 255 + 0.5),
/// clamped to [0, 255].
std::uint8_t quantize(double v);

/// Reads any PNG as 8-bit RGB; values are scaled to [0,1].
Image read_rgb_png(const std::filesystem::path& path);
void write_rgb_png(const std::filesystem::path& path, const Image& img);

/// Single-channel 8-bit PNG holding one class id per pixel.
LabelMap read_label_png(const std::filesystem::path& path);
void write_label_png(const std::filesystem::path& path, const LabelMap& labels);

/// RGB visualization of a label map (fixed palette; ignore id drawn black).
void write_label_visualization(const std::filesystem::path& path, const LabelMap& labels,
                               int ignore_id = kDefaultIgnoreId);

}  // namespace coadapt::io
