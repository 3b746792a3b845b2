#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace coadapt {

enum class ColorSpace { kSrgbUnit, kLab };

std::string_view to_string(ColorSpace space);

/// H x W x 3 raster, interleaved (row-major, channel fastest).
/// kSrgbUnit images hold gamma-encoded sRGB in [0,1]; kLab images hold
/// L* in [0,100] and a*, b* in roughly [-128,127].
class Image {
 public:
  Image() = default;
  Image(int height, int width, ColorSpace space);
  Image(int height, int width, ColorSpace space, std::vector<double> data);

  static Image filled(int height, int width, ColorSpace space, double c0,
                      double c1, double c2);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }
  ColorSpace space() const { return space_; }
  bool empty() const { return data_.empty(); }

  double& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  double at(int y, int x, int c) const { return data_[index(y, x, c)]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool operator==(const Image&) const = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) * 3 + static_cast<std::size_t>(c);
  }

  int height_ = 0;
  int width_ = 0;
  ColorSpace space_ = ColorSpace::kSrgbUnit;
  std::vector<double> data_;
};

inline constexpr int kDefaultIgnoreId = 255;

/// H x W class ids; pixels equal to the ignore id carry no supervision.
class LabelMap {
 public:
  LabelMap() = default;
  LabelMap(int height, int width, int fill = 0);
  LabelMap(int height, int width, std::vector<int> ids);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return ids_.size(); }

  int& at(int y, int x) { return ids_[static_cast<std::size_t>(y) * width_ + x]; }
  int at(int y, int x) const { return ids_[static_cast<std::size_t>(y) * width_ + x]; }
  int& operator[](std::size_t i) { return ids_[i]; }
  int operator[](std::size_t i) const { return ids_[i]; }

  std::span<int> ids() { return ids_; }
  std::span<const int> ids() const { return ids_; }

  std::size_t count(int id) const;

  bool operator==(const LabelMap&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<int> ids_;
};

/// C x H x W per-pixel class distribution (channel-major planes).
struct ProbMap {
  int classes = 0;
  int height = 0;
  int width = 0;
  std::vector<double> values;

  std::size_t plane_size() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  double at(int c, std::size_t pixel) const {
    return values[static_cast<std::size_t>(c) * plane_size() + pixel];
  }
  std::span<const double> plane(int c) const {
    return std::span<const double>(values).subspan(
        static_cast<std::size_t>(c) * plane_size(), plane_size());
  }
};

/// Channel-wise argmax of a probability map; ties go to the lowest class id.
LabelMap argmax(const ProbMap& probs);

}  // namespace coadapt
