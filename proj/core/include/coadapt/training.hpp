#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "coadapt/data.hpp"
#include "coadapt/losses.hpp"
#include "coadapt/model.hpp"
#include "coadapt/pseudolabel.hpp"

namespace coadapt::train {

enum class Strategy { kEndToEnd, kStageWise };

struct BranchFlags {
  bool use_translation = true;  // LAB translation of source images toward target
  bool use_src_col = true;      // KL teaching between source models
  bool use_tgt_col = true;      // ensemble pseudo labels on target images

  bool operator==(const BranchFlags&) const = default;
};

struct TrainConfig {
  double lr0 = 2.5e-4;
  double momentum = 0.9;
  double poly_power = 0.9;
  std::int64_t max_its = 5000;
  std::int64_t early_stop_it = 5000;
  int batch_size = 1;
  double lambda_src_col = 0.5;
  double lambda_tgt_seg = 0.1;
  Strategy strategy = Strategy::kEndToEnd;
  std::int64_t stage_pretrain_its = 0;
  std::uint64_t seed = 0;
  BranchFlags branches;

  /// Train one model on the concatenation of all sources (data combination).
  bool union_sources = false;
  /// Ramp the target weight over early_stop_it instead of max_its.
  bool ramp_over_early_stop = false;
  losses::TeacherGradient teacher_gradient = losses::TeacherGradient::kDetached;
  pseudo::PseudoLabelConfig pseudo;
  nn::ModelConfig model;
  /// Write a ModelSet every K iterations (0: only the final one).
  std::int64_t checkpoint_every = 0;

  /// Throws std::invalid_argument on lr0 <= 0, max_its <= 0,
  /// early_stop_it outside [0, max_its], batch_size < 1 and similar.
  void validate() const;

  /// Full-scale schedules: 250000 iterations, early stop at 120000.
  static TrainConfig full_scale_end_to_end();
  static TrainConfig full_scale_stage_wise();
};

void to_json(nlohmann::json& j, const TrainConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, TrainConfig& cfg);

/// lr0 * (1 - it / max_its)^poly_power.
double poly_lr(const TrainConfig& cfg, std::int64_t it);

struct OptimizerState {
  std::vector<std::vector<double>> velocity;  // one buffer per parameter
  std::int64_t step = 0;
};

/// Classic momentum: v <- momentum * v + g; p <- p - lr * v. Parameters
/// without a gradient are treated as having g = 0. Throws std::domain_error
/// naming the parameter when a gradient is not finite.
void sgd_step(std::span<const nn::NamedParam> params, OptimizerState& state, double lr,
              double momentum);

struct ModelLosses {
  std::string domain;
  double ce_src = 0.0;
  double col = 0.0;
  double ce_tgt = 0.0;
  double total = 0.0;
};

struct IterationLog {
  std::string phase;  // "pretrain" or "collab"
  std::int64_t it = 0;
  double lr = 0.0;
  double ramp = 0.0;
  std::vector<ModelLosses> models;

  nlohmann::json to_json() const;
};

struct TrainOptions {
  /// Newline-delimited JSON metrics, one record per iteration.
  std::ostream* metrics = nullptr;
  /// When set, receives it_<n>/ periodic and final/ model sets.
  std::filesystem::path checkpoint_dir;
  std::function<void(const IterationLog&)> on_iteration;
};

struct TrainResult {
  nn::ModelSet models;
  std::vector<IterationLog> log;
};

/// Collaborative multi-source training. One model per source (or a single
/// model when union_sources is set). `target` supplies unlabeled images for
/// translation and pseudo labels; it may be null only when both
/// use_translation and use_tgt_col are off. Deterministic for a given
/// config and data. Throws std::runtime_error with iteration context when a
/// loss or gradient becomes non-finite.
TrainResult train_collaborative(std::span<const data::Dataset> sources,
                                const data::Dataset* target, const TrainConfig& cfg,
                                const TrainOptions& options = {});

/// Seed of the model trained on source `domain`.
std::uint64_t model_seed(const TrainConfig& cfg, const std::string& domain);

}  // namespace coadapt::train
