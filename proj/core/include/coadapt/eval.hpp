#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coadapt/image.hpp"
#include "coadapt/model.hpp"

namespace coadapt::data {
class Dataset;
}

namespace coadapt::eval {

/// C x C pixel counts; rows are ground truth, columns are predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes);

  int classes() const { return classes_; }
  std::uint64_t at(int gt, int pred) const {
    return counts_[static_cast<std::size_t>(gt) * static_cast<std::size_t>(classes_) +
                   static_cast<std::size_t>(pred)];
  }
  std::uint64_t total() const;

  /// Adds one count per pixel whose ground truth is not `ignore_id`.
  /// Throws std::invalid_argument on shape mismatch or out-of-range ids.
  void accumulate(const LabelMap& pred, const LabelMap& gt, int ignore_id = kDefaultIgnoreId);

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;

  static ConfusionMatrix from_counts(int classes, std::vector<std::uint64_t> counts);

 private:
  int classes_;
  std::vector<std::uint64_t> counts_;
};

struct IouReport {
  std::vector<std::optional<double>> per_class;  // nullopt: class absent from gt and pred
  std::optional<double> mean;                    // nullopt: every class undefined
};

/// IoU_c = tp / (row_c + col_c - tp); undefined classes are left out of
/// the mean.
IouReport miou(const ConfusionMatrix& cm);

struct InferMode {
  enum class Kind { kSingle, kEnsemble };
  Kind kind = Kind::kEnsemble;
  std::size_t index = 0;

  static InferMode ensemble() { return {Kind::kEnsemble, 0}; }
  static InferMode single(std::size_t i) { return {Kind::kSingle, i}; }
  /// Accepts "ensemble" or "single:<i>".
  static InferMode parse(std::string_view text);
  std::string to_string() const;
};

/// argmax of the chosen model's softmax, or of the logit-averaged ensemble.
LabelMap infer(const nn::ModelSet& models, const Image& img, InferMode mode);

/// Confusion matrix of `mode` predictions over a labeled dataset.
ConfusionMatrix evaluate(const nn::ModelSet& models, const data::Dataset& dataset,
                         InferMode mode, int ignore_id = kDefaultIgnoreId);

/// Index of the single model with the highest mIoU on `validation`
/// (lowest index wins ties).
std::size_t select_best_model(const nn::ModelSet& models, const data::Dataset& validation,
                              int ignore_id = kDefaultIgnoreId);

/// Aligned text table of per-class IoU plus the mean.
std::string format_iou_table(const IouReport& report,
                             const std::vector<std::string>& class_names = {});

}  // namespace coadapt::eval
