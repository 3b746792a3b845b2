#include "coadapt/colorspace.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace coadapt::color {
namespace {

// Linear sRGB -> XYZ (D65).
constexpr double kRgbToXyz[3][3] = {
    {0.4124564, 0.3575761, 0.1804375},
    {0.2126729, 0.7151522, 0.0721750},
    {0.0193339, 0.1191920, 0.9503041},
};

struct Matrix3 {
  double m[3][3];
};

Matrix3 invert(const double a[3][3]) {
  const double c00 = a[1][1] * a[2][2] - a[1][2] * a[2][1];
  const double c01 = a[1][2] * a[2][0] - a[1][0] * a[2][2];
  const double c02 = a[1][0] * a[2][1] - a[1][1] * a[2][0];
  const double det = a[0][0] * c00 + a[0][1] * c01 + a[0][2] * c02;
  const double inv = 1.0 / det;
  Matrix3 r{};
  r.m[0][0] = c00 * inv;
  r.m[0][1] = (a[0][2] * a[2][1] - a[0][1] * a[2][2]) * inv;
  r.m[0][2] = (a[0][1] * a[1][2] - a[0][2] * a[1][1]) * inv;
  r.m[1][0] = c01 * inv;
  r.m[1][1] = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) * inv;
  r.m[1][2] = (a[0][2] * a[1][0] - a[0][0] * a[1][2]) * inv;
  r.m[2][0] = c02 * inv;
  r.m[2][1] = (a[0][1] * a[2][0] - a[0][0] * a[2][1]) * inv;
  r.m[2][2] = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) * inv;
  return r;
}

const Matrix3& xyz_to_rgb() {
  static const Matrix3 m = invert(kRgbToXyz);
  return m;
}

// Reference white = XYZ of linear (1,1,1).
constexpr double kWhite[3] = {
    kRgbToXyz[0][0] + kRgbToXyz[0][1] + kRgbToXyz[0][2],
    kRgbToXyz[1][0] + kRgbToXyz[1][1] + kRgbToXyz[1][2],
    kRgbToXyz[2][0] + kRgbToXyz[2][1] + kRgbToXyz[2][2],
};

constexpr double kDelta = 6.0 / 29.0;
constexpr double kDeltaCube = kDelta * kDelta * kDelta;
constexpr double kDecodeThreshold = 0.04045;
constexpr double kEncodeThreshold = kDecodeThreshold / 12.92;

double decode_gamma(double c) {
  return c <= kDecodeThreshold ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double encode_gamma(double l) {
  return l <= kEncodeThreshold ? 12.92 * l : 1.055 * std::pow(l, 1.0 / 2.4) - 0.055;
}

double lab_f(double t) {
  return t > kDeltaCube ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}

double lab_f_inv(double u) {
  return u > kDelta ? u * u * u : 3.0 * kDelta * kDelta * (u - 4.0 / 29.0);
}

void require_space(const Image& img, ColorSpace expected, const char* op) {
  if (img.space() != expected) {
    throw std::invalid_argument(std::string(op) + ": expected " +
                                std::string(to_string(expected)) + " image, got " +
                                std::string(to_string(img.space())));
  }
}

}  // namespace

std::array<double, 3> srgb_to_lab(const std::array<double, 3>& rgb) {
  const double lin[3] = {decode_gamma(rgb[0]), decode_gamma(rgb[1]), decode_gamma(rgb[2])};
  double xyz[3];
  for (int i = 0; i < 3; ++i) {
    xyz[i] = kRgbToXyz[i][0] * lin[0] + kRgbToXyz[i][1] * lin[1] + kRgbToXyz[i][2] * lin[2];
  }
  const double fx = lab_f(xyz[0] / kWhite[0]);
  const double fy = lab_f(xyz[1] / kWhite[1]);
  const double fz = lab_f(xyz[2] / kWhite[2]);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

std::array<double, 3> lab_to_srgb_unclamped(const std::array<double, 3>& lab) {
  const double fy = (lab[0] + 16.0) / 116.0;
  const double fx = fy + lab[1] / 500.0;
  const double fz = fy - lab[2] / 200.0;
  const double xyz[3] = {kWhite[0] * lab_f_inv(fx), kWhite[1] * lab_f_inv(fy),
                         kWhite[2] * lab_f_inv(fz)};
  const auto& inv = xyz_to_rgb().m;
  std::array<double, 3> rgb{};
  for (int i = 0; i < 3; ++i) {
    const double lin = inv[i][0] * xyz[0] + inv[i][1] * xyz[1] + inv[i][2] * xyz[2];
    rgb[i] = encode_gamma(lin);
  }
  return rgb;
}

Image rgb_to_lab(const Image& img, double tolerance) {
  require_space(img, ColorSpace::kSrgbUnit, "rgb_to_lab");
  Image out(img.height(), img.width(), ColorSpace::kLab);
  const auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); i += 3) {
    std::array<double, 3> rgb{src[i], src[i + 1], src[i + 2]};
    for (double& v : rgb) {
      if (!(v >= -tolerance && v <= 1.0 + tolerance)) {
        throw std::invalid_argument("rgb_to_lab: sample " + std::to_string(v) +
                                    " at index " + std::to_string(i / 3) +
                                    " outside [0,1]");
      }
      v = std::clamp(v, 0.0, 1.0);
    }
    const auto lab = srgb_to_lab(rgb);
    dst[i] = lab[0];
    dst[i + 1] = lab[1];
    dst[i + 2] = lab[2];
  }
  return out;
}

Image lab_to_rgb(const Image& img) {
  require_space(img, ColorSpace::kLab, "lab_to_rgb");
  Image out(img.height(), img.width(), ColorSpace::kSrgbUnit);
  const auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); i += 3) {
    const auto rgb = lab_to_srgb_unclamped({src[i], src[i + 1], src[i + 2]});
    for (int c = 0; c < 3; ++c) {
      // NaN cannot arise from finite LAB input, but clamp maps it to 0 anyway.
      dst[i + c] = std::isnan(rgb[c]) ? 0.0 : std::clamp(rgb[c], 0.0, 1.0);
    }
  }
  return out;
}

ChannelStats channel_stats(const Image& img) {
  // Welford's update per channel.
  ChannelStats stats;
  std::array<double, 3> m2{};
  const auto d = img.data();
  double n = 0.0;
  for (std::size_t i = 0; i < d.size(); i += 3) {
    n += 1.0;
    for (int c = 0; c < 3; ++c) {
      const double x = d[i + c];
      const double delta = x - stats.mean[c];
      stats.mean[c] += delta / n;
      m2[c] += delta * (x - stats.mean[c]);
    }
  }
  if (n > 0.0) {
    for (int c = 0; c < 3; ++c) {
      stats.std[c] = std::sqrt(std::max(m2[c], 0.0) / n);
    }
  }
  return stats;
}

Image match_statistics(const Image& img, const ChannelStats& src,
                       const ChannelStats& tgt, double eps) {
  Image out = img;
  auto d = out.data();
  std::array<double, 3> gain{};
  for (int c = 0; c < 3; ++c) {
    gain[c] = tgt.std[c] / std::max(src.std[c], eps);
  }
  for (std::size_t i = 0; i < d.size(); i += 3) {
    for (int c = 0; c < 3; ++c) {
      d[i + c] = (d[i + c] - src.mean[c]) * gain[c] + tgt.mean[c];
    }
  }
  return out;
}

Image translate_to_lab(const Image& src, const Image& tgt, double eps) {
  const Image src_lab = rgb_to_lab(src);
  const Image tgt_lab = rgb_to_lab(tgt);
  return match_statistics(src_lab, channel_stats(src_lab), channel_stats(tgt_lab), eps);
}

Image translate(const Image& src, const Image& tgt, double eps) {
  return lab_to_rgb(translate_to_lab(src, tgt, eps));
}

Image translate(const Image& src, const ChannelStats& tgt_lab, double eps) {
  const Image src_lab = rgb_to_lab(src);
  return lab_to_rgb(match_statistics(src_lab, channel_stats(src_lab), tgt_lab, eps));
}

Image translate_rgb_space(const Image& src, const Image& tgt, double eps) {
  require_space(src, ColorSpace::kSrgbUnit, "translate_rgb_space");
  require_space(tgt, ColorSpace::kSrgbUnit, "translate_rgb_space");
  Image out = match_statistics(src, channel_stats(src), channel_stats(tgt), eps);
  for (double& v : out.data()) {
    v = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

}  // namespace coadapt::color
