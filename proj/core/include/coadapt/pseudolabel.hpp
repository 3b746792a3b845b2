#pragma once

#include <span>
#include <vector>

#include "coadapt/image.hpp"
#include "coadapt/model.hpp"
#include "coadapt/tensor.hpp"

namespace coadapt::pseudo {

using autograd::Tensor;

/// Which probabilities the per-class threshold is read from.
enum class ThresholdScope {
  kFullPlane,      // sort the whole class-c probability plane (default)
  kPredictedOnly,  // sort only pixels whose argmax is c
};

struct PseudoLabelConfig {
  double keep_proportion = 0.5;  // alpha
  double max_thresh = 0.9;       // tau
  int ignore_id = kDefaultIgnoreId;
  ThresholdScope scope = ThresholdScope::kFullPlane;

  /// Throws std::invalid_argument unless alpha and tau are in (0, 1].
  void validate() const;
};

/// softmax over channels of the mean of the given [C,H,W] logit maps.
ProbMap ensemble_probability(std::span<const Tensor> logit_maps);

/// Softmax of a single logit map.
ProbMap softmax_probability(const Tensor& logits);

/// Confidence-filtered hard labels:
///   labels = argmax(p)
///   for each class c with n_c = #(labels == c) > 0:
///     sorted = p[c] in descending order
///     t = min(sorted[clamp(floor(n_c * alpha), 0, len - 1)], tau)
///     pixels with labels == c and p[c] <= t become ignore_id
/// The argmax is taken on the unfiltered map, so filtering one class never
/// changes the counts used for another.
LabelMap generate_pseudo_labels(const ProbMap& probs, const PseudoLabelConfig& cfg);

/// Per image: forward every model without recording gradients, ensemble,
/// filter.
std::vector<LabelMap> refresh_pseudo_labels(const nn::ModelSet& models,
                                            std::span<const Image> images,
                                            const PseudoLabelConfig& cfg);

}  // namespace coadapt::pseudo
