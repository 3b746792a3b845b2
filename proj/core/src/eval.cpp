#include "coadapt/eval.hpp"

#include <charconv>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "coadapt/data.hpp"
#include "coadapt/pseudolabel.hpp"

namespace coadapt::eval {

ConfusionMatrix::ConfusionMatrix(int classes)
    : classes_(classes),
      counts_(static_cast<std::size_t>(classes) * static_cast<std::size_t>(classes), 0) {
  if (classes < 1) {
    throw std::invalid_argument("ConfusionMatrix: needs at least one class");
  }
}

ConfusionMatrix ConfusionMatrix::from_counts(int classes, std::vector<std::uint64_t> counts) {
  ConfusionMatrix cm(classes);
  if (counts.size() != cm.counts_.size()) {
    throw std::invalid_argument("ConfusionMatrix: expected C*C counts");
  }
  cm.counts_ = std::move(counts);
  return cm;
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

void ConfusionMatrix::accumulate(const LabelMap& pred, const LabelMap& gt, int ignore_id) {
  if (pred.height() != gt.height() || pred.width() != gt.width()) {
    throw std::invalid_argument("accumulate: prediction and ground truth differ in size");
  }
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const int g = gt[i];
    if (g == ignore_id) {
      continue;
    }
    const int p = pred[i];
    if (g < 0 || g >= classes_ || p < 0 || p >= classes_) {
      throw std::invalid_argument("accumulate: class id out of range (gt " + std::to_string(g) +
                                  ", pred " + std::to_string(p) + ")");
    }
    ++counts_[static_cast<std::size_t>(g) * static_cast<std::size_t>(classes_) +
              static_cast<std::size_t>(p)];
  }
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) {
    throw std::invalid_argument("ConfusionMatrix: class count mismatch");
  }
  for (std::size_t i = 0; i < counts_.size(); ++i) {
    counts_[i] += other.counts_[i];
  }
  return *this;
}

IouReport miou(const ConfusionMatrix& cm) {
  const int n = cm.classes();
  IouReport report;
  report.per_class.resize(static_cast<std::size_t>(n));
  double sum = 0.0;
  int defined = 0;
  for (int c = 0; c < n; ++c) {
    std::uint64_t row = 0;
    std::uint64_t col = 0;
    for (int k = 0; k < n; ++k) {
      row += cm.at(c, k);
      col += cm.at(k, c);
    }
    const std::uint64_t tp = cm.at(c, c);
    const std::uint64_t denom = row + col - tp;
    if (denom == 0) {
      continue;
    }
    const double iou = static_cast<double>(tp) / static_cast<double>(denom);
    report.per_class[static_cast<std::size_t>(c)] = iou;
    sum += iou;
    ++defined;
  }
  if (defined > 0) {
    report.mean = sum / defined;
  }
  return report;
}

InferMode InferMode::parse(std::string_view text) {
  if (text == "ensemble") {
    return ensemble();
  }
  constexpr std::string_view prefix = "single:";
  if (text.substr(0, prefix.size()) == prefix) {
    const auto digits = text.substr(prefix.size());
    std::size_t index = 0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), index);
    if (ec == std::errc() && ptr == digits.data() + digits.size() && !digits.empty()) {
      return single(index);
    }
  }
  throw std::invalid_argument("mode must be 'ensemble' or 'single:<i>', got '" +
                              std::string(text) + "'");
}

std::string InferMode::to_string() const {
  return kind == Kind::kEnsemble ? "ensemble" : "single:" + std::to_string(index);
}

LabelMap infer(const nn::ModelSet& models, const Image& img, InferMode mode) {
  models.validate();
  autograd::NoGradGuard no_grad;
  const auto x = nn::image_to_tensor(img);
  if (mode.kind == InferMode::Kind::kSingle) {
    if (mode.index >= models.size()) {
      throw std::out_of_range("infer: model index " + std::to_string(mode.index) +
                              " but only " + std::to_string(models.size()) + " models");
    }
    return argmax(pseudo::softmax_probability(models.models[mode.index].forward(x)));
  }
  std::vector<autograd::Tensor> logits;
  logits.reserve(models.size());
  for (const auto& m : models.models) {
    logits.push_back(m.forward(x));
  }
  return argmax(pseudo::ensemble_probability(logits));
}

ConfusionMatrix evaluate(const nn::ModelSet& models, const data::Dataset& dataset,
                         InferMode mode, int ignore_id) {
  if (!dataset.has_labels()) {
    throw std::invalid_argument("evaluate: dataset '" + dataset.name() + "' has no labels");
  }
  ConfusionMatrix cm(dataset.class_count());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& sample = dataset.get(i);
    cm.accumulate(infer(models, sample.image, mode), *sample.label, ignore_id);
  }
  return cm;
}

std::size_t select_best_model(const nn::ModelSet& models, const data::Dataset& validation,
                              int ignore_id) {
  std::size_t best = 0;
  double best_score = -1.0;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto report = miou(evaluate(models, validation, InferMode::single(i), ignore_id));
    const double score = report.mean.value_or(-1.0);
    if (score > best_score) {
      best_score = score;
      best = i;
    }
  }
  return best;
}

std::string format_iou_table(const IouReport& report,
                             const std::vector<std::string>& class_names) {
  std::string out;
  char line[128];
  std::snprintf(line, sizeof line, "%-14s %8s\n", "class", "IoU");
  out += line;
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    const std::string name =
        c < class_names.size() ? class_names[c] : "class_" + std::to_string(c);
    if (report.per_class[c]) {
      std::snprintf(line, sizeof line, "%-14s %8.2f\n", name.c_str(), 100.0 * *report.per_class[c]);
    } else {
      std::snprintf(line, sizeof line, "%-14s %8s\n", name.c_str(), "n/a");
    }
    out += line;
  }
  if (report.mean) {
    std::snprintf(line, sizeof line, "%-14s %8.2f\n", "mIoU", 100.0 * *report.mean);
  } else {
    std::snprintf(line, sizeof line, "%-14s %8s\n", "mIoU", "n/a");
  }
  out += line;
  return out;
}

}  // namespace coadapt::eval
