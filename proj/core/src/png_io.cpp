#include "coadapt/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <vector>

namespace coadapt::io {
namespace {

struct PngReader {
  png_image image;
  PngReader() {
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngReader() { png_image_free(&image); }
  PngReader(const PngReader&) = delete;
  PngReader& operator=(const PngReader&) = delete;
};

std::vector<std::uint8_t> read_png(const std::filesystem::path& path, png_uint_32 format,
                                   int& height, int& width) {
  PngReader reader;
  if (!png_image_begin_read_from_file(&reader.image, path.c_str())) {
    throw IoError("cannot read PNG '" + path.string() + "': " + reader.image.message);
  }
  reader.image.format = format;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(reader.image));
  if (!png_image_finish_read(&reader.image, nullptr, buffer.data(), 0, nullptr)) {
    throw IoError("cannot decode PNG '" + path.string() + "': " + reader.image.message);
  }
  height = static_cast<int>(reader.image.height);
  width = static_cast<int>(reader.image.width);
  return buffer;
}

void write_png(const std::filesystem::path& path, png_uint_32 format, int height, int width,
               const std::vector<std::uint8_t>& buffer) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    const std::string message = image.message;
    png_image_free(&image);
    throw IoError("cannot write PNG '" + path.string() + "': " + message);
  }
  png_image_free(&image);
}

constexpr std::array<std::array<std::uint8_t, 3>, 8> kVisPalette = {{
    {70, 130, 180},   // sky
    {128, 64, 128},   // road
    {70, 70, 70},     // building
    {0, 0, 142},      // vehicle
    {107, 142, 35},   // vegetation
    {220, 20, 60},
    {250, 170, 30},
    {190, 153, 153},
}};

}  // namespace

std::uint8_t quantize(double v) {
  const double q = std::floor(v * 255.0 + 0.5);
  return static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
}

Image read_rgb_png(const std::filesystem::path& path) {
  int h = 0;
  int w = 0;
  const auto bytes = read_png(path, PNG_FORMAT_RGB, h, w);
  std::vector<double> data(bytes.size());
  std::transform(bytes.begin(), bytes.end(), data.begin(),
                 [](std::uint8_t b) { return static_cast<double>(b) / 255.0; });
  return Image(h, w, ColorSpace::kSrgbUnit, std::move(data));
}

void write_rgb_png(const std::filesystem::path& path, const Image& img) {
  if (img.space() != ColorSpace::kSrgbUnit) {
    throw std::invalid_argument("write_rgb_png: image is not sRGB");
  }
  std::vector<std::uint8_t> bytes(img.data().size());
  std::transform(img.data().begin(), img.data().end(), bytes.begin(), quantize);
  write_png(path, PNG_FORMAT_RGB, img.height(), img.width(), bytes);
}

LabelMap read_label_png(const std::filesystem::path& path) {
  int h = 0;
  int w = 0;
  const auto bytes = read_png(path, PNG_FORMAT_GRAY, h, w);
  return LabelMap(h, w, std::vector<int>(bytes.begin(), bytes.end()));
}

void write_label_png(const std::filesystem::path& path, const LabelMap& labels) {
  std::vector<std::uint8_t> bytes(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int id = labels[i];
    if (id < 0 || id > 255) {
      throw std::invalid_argument("write_label_png: id " + std::to_string(id) +
                                  " does not fit in 8 bits");
    }
    bytes[i] = static_cast<std::uint8_t>(id);
  }
  write_png(path, PNG_FORMAT_GRAY, labels.height(), labels.width(), bytes);
}

void write_label_visualization(const std::filesystem::path& path, const LabelMap& labels,
                               int ignore_id) {
  std::vector<std::uint8_t> bytes(labels.size() * 3, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int id = labels[i];
    if (id == ignore_id || id < 0) {
      continue;
    }
    const auto& rgb = kVisPalette[static_cast<std::size_t>(id) % kVisPalette.size()];
    std::copy(rgb.begin(), rgb.end(), bytes.begin() + static_cast<std::ptrdiff_t>(i * 3));
  }
  write_png(path, PNG_FORMAT_RGB, labels.height(), labels.width(), bytes);
}

}  // namespace coadapt::io
