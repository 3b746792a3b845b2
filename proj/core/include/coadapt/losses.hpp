#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "coadapt/image.hpp"
#include "coadapt/tensor.hpp"

namespace coadapt::losses {

using autograd::Tensor;

/// Mean negative log-likelihood of `labels` under softmax(logits) over the
/// non-ignored pixels. An all-ignored map yields 0 with zero gradient.
Tensor cross_entropy(const Tensor& logits, const LabelMap& labels,
                     int ignore_id = kDefaultIgnoreId);

enum class TeacherGradient {
  kDetached,   // only the student receives gradient
  kSymmetric,  // gradient also flows into the teacher logits
};

/// Per-pixel mean of KL(softmax(teacher) || softmax(student)); always >= 0.
Tensor kl_teach(const Tensor& teacher_logits, const Tensor& student_logits,
                TeacherGradient mode = TeacherGradient::kDetached);

/// Logits of model i and of peer k on one image drawn from domain k.
struct PeerPair {
  Tensor student;  // model i on the peer's image
  Tensor teacher;  // peer k on its own image
};

/// Average of kl_teach(teacher, student) over the peers of one model; 0 when
/// there are no peers.
Tensor collaborative_src_loss(std::span<const PeerPair> peers,
                              TeacherGradient mode = TeacherGradient::kDetached);

struct LossWeights {
  double lambda_src_col = 0.5;
  double lambda_tgt_seg = 0.1;
  std::int64_t cur_it = 0;
  std::int64_t max_its = 1;

  /// Throws std::invalid_argument unless 0 <= cur_it <= max_its, max_its > 0
  /// and both weights are non-negative.
  void validate() const;
};

/// (cur_it / max_its) * lambda_tgt_seg.
double ramp_weight(const LossWeights& w);

/// seg_src + lambda_src_col * col_src + ramp_weight(w) * seg_tgt. Branches
/// with a zero coefficient are dropped from the graph entirely.
Tensor total_objective(const Tensor& seg_src, const Tensor& col_src, const Tensor& seg_tgt,
                       const LossWeights& w);

}  // namespace coadapt::losses
