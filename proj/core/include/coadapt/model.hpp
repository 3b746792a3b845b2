#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "coadapt/image.hpp"
#include "coadapt/tensor.hpp"

namespace coadapt::nn {

using autograd::Tensor;

struct ModelConfig {
  int feature_width = 16;
  int class_count = 5;

  bool operator==(const ModelConfig&) const = default;
};

struct NamedParam {
  std::string name;
  Tensor tensor;
};

/// Per-pixel segmentation network:
///   conv3x3(3->F) -> relu -> conv3x3(F->F) -> relu -> conv1x1(F->C)
/// Output logits keep the input's spatial size.
class SegNetMicro {
 public:
  /// Kaiming-uniform weights, U(-b, b) with b = sqrt(6 / fan_in), drawn from
  /// Rng(seed) in the order conv1.weight, conv2.weight, head.weight (each in
  /// row-major order); biases are zero.
  static SegNetMicro init(const ModelConfig& cfg, std::uint64_t seed);
  static SegNetMicro zeros(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }

  /// x is [3,H,W]; returns logits [C,H,W].
  Tensor forward(const Tensor& x) const;
  Tensor forward(const Image& img) const;

  /// Handles alias the model's storage.
  std::vector<NamedParam> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

  /// Deep copy with independent storage.
  SegNetMicro clone() const;

  void save(const std::filesystem::path& path, const std::string& domain_id) const;
  /// Returns the model; `domain_id` receives the stored id when non-null.
  static SegNetMicro load(const std::filesystem::path& path, std::string* domain_id = nullptr);

 private:
  explicit SegNetMicro(const ModelConfig& cfg);

  ModelConfig cfg_;
  Tensor conv1_w_, conv1_b_;
  Tensor conv2_w_, conv2_b_;
  Tensor head_w_, head_b_;
};

/// Channels-first [3,H,W] view of an sRGB image (no gradient).
Tensor image_to_tensor(const Image& img);

/// N models of identical hyper-shape, one per source domain.
struct ModelSet {
  std::vector<SegNetMicro> models;
  std::vector<std::string> domain_ids;

  std::size_t size() const { return models.size(); }
  /// Throws std::invalid_argument unless N >= 1, ids match models, and all
  /// models share one ModelConfig.
  void validate() const;

  /// Writes model_<i>.ckpt per model plus models.json listing them.
  void save(const std::filesystem::path& dir) const;
  static ModelSet load(const std::filesystem::path& dir);
};

}  // namespace coadapt::nn
