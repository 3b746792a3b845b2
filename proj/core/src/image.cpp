#include "coadapt/image.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace coadapt {

std::string_view to_string(ColorSpace space) {
  switch (space) {
    case ColorSpace::kSrgbUnit:
      return "srgb";
    case ColorSpace::kLab:
      return "lab";
  }
  return "unknown";
}

Image::Image(int height, int width, ColorSpace space)
    : Image(height, width, space,
            std::vector<double>(static_cast<std::size_t>(std::max(height, 0)) *
                                static_cast<std::size_t>(std::max(width, 0)) * 3)) {}

Image::Image(int height, int width, ColorSpace space, std::vector<double> data)
    : height_(height), width_(width), space_(space), data_(std::move(data)) {
  if (height < 0 || width < 0) {
    throw std::invalid_argument("Image: negative dimensions");
  }
  if (data_.size() != pixel_count() * 3) {
    throw std::invalid_argument("Image: data length " + std::to_string(data_.size()) +
                                " does not match " + std::to_string(height) + "x" +
                                std::to_string(width) + "x3");
  }
}

Image Image::filled(int height, int width, ColorSpace space, double c0, double c1,
                    double c2) {
  Image img(height, width, space);
  auto d = img.data();
  for (std::size_t i = 0; i < d.size(); i += 3) {
    d[i] = c0;
    d[i + 1] = c1;
    d[i + 2] = c2;
  }
  return img;
}

LabelMap::LabelMap(int height, int width, int fill)
    : height_(height),
      width_(width),
      ids_(static_cast<std::size_t>(std::max(height, 0)) *
               static_cast<std::size_t>(std::max(width, 0)),
           fill) {}

LabelMap::LabelMap(int height, int width, std::vector<int> ids)
    : height_(height), width_(width), ids_(std::move(ids)) {
  if (ids_.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    throw std::invalid_argument("LabelMap: id count does not match dimensions");
  }
}

std::size_t LabelMap::count(int id) const {
  return static_cast<std::size_t>(std::count(ids_.begin(), ids_.end(), id));
}

LabelMap argmax(const ProbMap& probs) {
  LabelMap out(probs.height, probs.width);
  const std::size_t n = probs.plane_size();
  for (std::size_t p = 0; p < n; ++p) {
    int best = 0;
    double best_v = probs.at(0, p);
    for (int c = 1; c < probs.classes; ++c) {
      const double v = probs.at(c, p);
      if (v > best_v) {
        best_v = v;
        best = c;
      }
    }
    out[p] = best;
  }
  return out;
}

}  // namespace coadapt
