#include "coadapt/pseudolabel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

namespace coadapt::pseudo {

void PseudoLabelConfig::validate() const {
  if (!(keep_proportion > 0.0 && keep_proportion <= 1.0)) {
    throw std::invalid_argument("keep_proportion must be in (0, 1], got " +
                                std::to_string(keep_proportion));
  }
  if (!(max_thresh > 0.0 && max_thresh <= 1.0)) {
    throw std::invalid_argument("max_thresh must be in (0, 1], got " +
                                std::to_string(max_thresh));
  }
}

ProbMap softmax_probability(const Tensor& logits) {
  const Tensor* one = &logits;
  return ensemble_probability(std::span<const Tensor>(one, 1));
}

ProbMap ensemble_probability(std::span<const Tensor> logit_maps) {
  if (logit_maps.empty()) {
    throw std::invalid_argument("ensemble_probability: no logit maps");
  }
  const auto& shape = logit_maps.front().shape();
  if (shape.size() != 3) {
    throw std::invalid_argument("ensemble_probability: expected [C,H,W] logits");
  }
  for (const auto& m : logit_maps) {
    if (m.shape() != shape) {
      throw std::invalid_argument("ensemble_probability: shape mismatch " +
                                  autograd::shape_string(m.shape()) + " vs " +
                                  autograd::shape_string(shape));
    }
  }
  ProbMap out;
  out.classes = static_cast<int>(shape[0]);
  out.height = static_cast<int>(shape[1]);
  out.width = static_cast<int>(shape[2]);
  out.values.assign(autograd::shape_numel(shape), 0.0);
  for (const auto& m : logit_maps) {
    const auto d = m.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      out.values[i] += d[i];
    }
  }
  const double inv_n = 1.0 / static_cast<double>(logit_maps.size());
  const std::size_t plane = out.plane_size();
  const auto classes = static_cast<std::size_t>(out.classes);
  for (std::size_t p = 0; p < plane; ++p) {
    double mx = -INFINITY;
    for (std::size_t c = 0; c < classes; ++c) {
      double& v = out.values[c * plane + p];
      v *= inv_n;
      mx = std::max(mx, v);
    }
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      double& v = out.values[c * plane + p];
      v = std::exp(v - mx);
      z += v;
    }
    for (std::size_t c = 0; c < classes; ++c) {
      out.values[c * plane + p] /= z;
    }
  }
  return out;
}

LabelMap generate_pseudo_labels(const ProbMap& probs, const PseudoLabelConfig& cfg) {
  cfg.validate();
  if (cfg.ignore_id >= 0 && cfg.ignore_id < probs.classes) {
    throw std::invalid_argument("ignore_id " + std::to_string(cfg.ignore_id) +
                                " collides with a class id");
  }
  const LabelMap predicted = argmax(probs);
  LabelMap out = predicted;
  const std::size_t plane = probs.plane_size();
  std::vector<double> scratch;
  scratch.reserve(plane);

  for (int c = 0; c < probs.classes; ++c) {
    const std::size_t n_c = predicted.count(c);
    if (n_c == 0) {
      continue;
    }
    const auto p_c = probs.plane(c);
    scratch.clear();
    if (cfg.scope == ThresholdScope::kFullPlane) {
      scratch.assign(p_c.begin(), p_c.end());
    } else {
      for (std::size_t p = 0; p < plane; ++p) {
        if (predicted[p] == c) {
          scratch.push_back(p_c[p]);
        }
      }
    }
    const double pos = std::floor(static_cast<double>(n_c) * cfg.keep_proportion);
    const auto idx = static_cast<std::size_t>(
        std::clamp(pos, 0.0, static_cast<double>(scratch.size() - 1)));
    // Descending order statistic at idx.
    std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(idx),
                     scratch.end(), std::greater<>());
    const double t = std::min(scratch[idx], cfg.max_thresh);
    for (std::size_t p = 0; p < plane; ++p) {
      if (predicted[p] == c && p_c[p] <= t) {
        out[p] = cfg.ignore_id;
      }
    }
  }
  return out;
}

std::vector<LabelMap> refresh_pseudo_labels(const nn::ModelSet& models,
                                            std::span<const Image> images,
                                            const PseudoLabelConfig& cfg) {
  models.validate();
  autograd::NoGradGuard no_grad;
  std::vector<LabelMap> out;
  out.reserve(images.size());
  std::vector<Tensor> logits;
  for (const auto& img : images) {
    const Tensor x = nn::image_to_tensor(img);
    logits.clear();
    for (const auto& m : models.models) {
      logits.push_back(m.forward(x));
    }
    out.push_back(generate_pseudo_labels(ensemble_probability(logits), cfg));
  }
  return out;
}

}  // namespace coadapt::pseudo
