#include "coadapt/losses.hpp"

#include <stdexcept>
#include <string>

namespace coadapt::losses {

using namespace autograd;

Tensor cross_entropy(const Tensor& logits, const LabelMap& labels, int ignore_id) {
  if (logits.rank() != 3 || logits.dim(1) != static_cast<std::size_t>(labels.height()) ||
      logits.dim(2) != static_cast<std::size_t>(labels.width())) {
    throw std::invalid_argument("cross_entropy: logits " + shape_string(logits.shape()) +
                                " do not match labels " + std::to_string(labels.height()) +
                                "x" + std::to_string(labels.width()));
  }
  return masked_nll(log_softmax_channels(logits), labels.ids(), ignore_id);
}

Tensor kl_teach(const Tensor& teacher_logits, const Tensor& student_logits,
                TeacherGradient mode) {
  if (teacher_logits.shape() != student_logits.shape() || teacher_logits.rank() != 3) {
    throw std::invalid_argument("kl_teach: shape mismatch " +
                                shape_string(teacher_logits.shape()) + " vs " +
                                shape_string(student_logits.shape()));
  }
  const Tensor teacher =
      mode == TeacherGradient::kDetached ? detach(teacher_logits) : teacher_logits;
  const Tensor log_p = log_softmax_channels(teacher);
  const Tensor log_q = log_softmax_channels(student_logits);
  const Tensor p = exp(log_p);
  const double pixels = static_cast<double>(teacher.dim(1) * teacher.dim(2));
  return scale(sum(mul(p, sub(log_p, log_q))), 1.0 / pixels);
}

Tensor collaborative_src_loss(std::span<const PeerPair> peers, TeacherGradient mode) {
  if (peers.empty()) {
    return Tensor::scalar(0.0);
  }
  Tensor total = kl_teach(peers[0].teacher, peers[0].student, mode);
  for (std::size_t k = 1; k < peers.size(); ++k) {
    total = add(total, kl_teach(peers[k].teacher, peers[k].student, mode));
  }
  return scale(total, 1.0 / static_cast<double>(peers.size()));
}

void LossWeights::validate() const {
  if (max_its <= 0) {
    throw std::invalid_argument("LossWeights: max_its must be positive");
  }
  if (cur_it < 0 || cur_it > max_its) {
    throw std::invalid_argument("LossWeights: cur_it " + std::to_string(cur_it) +
                                " outside [0, " + std::to_string(max_its) + "]");
  }
  if (lambda_src_col < 0.0 || lambda_tgt_seg < 0.0) {
    throw std::invalid_argument("LossWeights: weights must be non-negative");
  }
}

double ramp_weight(const LossWeights& w) {
  w.validate();
  return static_cast<double>(w.cur_it) / static_cast<double>(w.max_its) * w.lambda_tgt_seg;
}

Tensor total_objective(const Tensor& seg_src, const Tensor& col_src, const Tensor& seg_tgt,
                       const LossWeights& w) {
  Tensor total = seg_src;
  if (w.lambda_src_col != 0.0 && col_src.defined()) {
    total = add(total, scale(col_src, w.lambda_src_col));
  }
  const double ramp = ramp_weight(w);
  if (ramp != 0.0 && seg_tgt.defined()) {
    total = add(total, scale(seg_tgt, ramp));
  }
  return total;
}

}  // namespace coadapt::losses
