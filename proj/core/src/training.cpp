#include "coadapt/training.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <ostream>
#include <set>
#include <stdexcept>

#include "coadapt/colorspace.hpp"
#include "coadapt/rng.hpp"

namespace coadapt::train {

using autograd::Tensor;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("TrainConfig: " + msg); };
  if (!(lr0 > 0.0)) fail("lr0 must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) fail("momentum must be in [0, 1)");
  if (poly_power < 0.0) fail("poly_power must be >= 0");
  if (max_its <= 0) fail("max_its must be > 0");
  if (early_stop_it < 0 || early_stop_it > max_its) fail("early_stop_it must be in [0, max_its]");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (lambda_src_col < 0.0 || lambda_tgt_seg < 0.0) fail("loss weights must be >= 0");
  if (stage_pretrain_its < 0) fail("stage_pretrain_its must be >= 0");
  if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
  if (ramp_over_early_stop && early_stop_it == 0) fail("cannot ramp over an early stop of 0");
  pseudo.validate();
}

TrainConfig TrainConfig::full_scale_end_to_end() {
  TrainConfig cfg;
  cfg.max_its = 250000;
  cfg.early_stop_it = 120000;
  cfg.lambda_src_col = 0.5;
  cfg.lambda_tgt_seg = 0.1;
  cfg.strategy = Strategy::kEndToEnd;
  return cfg;
}

TrainConfig TrainConfig::full_scale_stage_wise() {
  TrainConfig cfg = full_scale_end_to_end();
  cfg.lambda_src_col = 9.5;
  cfg.lambda_tgt_seg = 0.1;
  cfg.strategy = Strategy::kStageWise;
  return cfg;
}

namespace {

std::string strategy_name(Strategy s) {
  return s == Strategy::kEndToEnd ? "end_to_end" : "stage_wise";
}

Strategy parse_strategy(const std::string& s) {
  if (s == "end_to_end") return Strategy::kEndToEnd;
  if (s == "stage_wise") return Strategy::kStageWise;
  throw std::invalid_argument("unknown strategy '" + s + "'");
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (const auto it = j.find(key); it != j.end()) {
    out = it->get<T>();
  }
}

void reject_unknown(const json& j, const std::set<std::string>& known, const char* where) {
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) {
      throw std::invalid_argument(std::string(where) + ": unknown key '" + key + "'");
    }
  }
}

}  // namespace

void to_json(json& j, const TrainConfig& cfg) {
  j = json{
      {"lr0", cfg.lr0},
      {"momentum", cfg.momentum},
      {"poly_power", cfg.poly_power},
      {"max_its", cfg.max_its},
      {"early_stop_it", cfg.early_stop_it},
      {"batch_size", cfg.batch_size},
      {"lambda_src_col", cfg.lambda_src_col},
      {"lambda_tgt_seg", cfg.lambda_tgt_seg},
      {"strategy", strategy_name(cfg.strategy)},
      {"stage_pretrain_its", cfg.stage_pretrain_its},
      {"seed", cfg.seed},
      {"use_translation", cfg.branches.use_translation},
      {"use_src_col", cfg.branches.use_src_col},
      {"use_tgt_col", cfg.branches.use_tgt_col},
      {"union_sources", cfg.union_sources},
      {"ramp_over_early_stop", cfg.ramp_over_early_stop},
      {"symmetric_teacher", cfg.teacher_gradient == losses::TeacherGradient::kSymmetric},
      {"keep_proportion", cfg.pseudo.keep_proportion},
      {"max_thresh", cfg.pseudo.max_thresh},
      {"ignore_id", cfg.pseudo.ignore_id},
      {"threshold_predicted_only", cfg.pseudo.scope == pseudo::ThresholdScope::kPredictedOnly},
      {"feature_width", cfg.model.feature_width},
      {"class_count", cfg.model.class_count},
      {"checkpoint_every", cfg.checkpoint_every},
  };
}

void from_json(const json& j, TrainConfig& cfg) {
  static const std::set<std::string> known = {
      "lr0", "momentum", "poly_power", "max_its", "early_stop_it", "batch_size",
      "lambda_src_col", "lambda_tgt_seg", "strategy", "stage_pretrain_its", "seed",
      "use_translation", "use_src_col", "use_tgt_col", "union_sources",
      "ramp_over_early_stop", "symmetric_teacher", "keep_proportion", "max_thresh",
      "ignore_id", "threshold_predicted_only", "feature_width", "class_count",
      "checkpoint_every"};
  reject_unknown(j, known, "TrainConfig");
  read_opt(j, "lr0", cfg.lr0);
  read_opt(j, "momentum", cfg.momentum);
  read_opt(j, "poly_power", cfg.poly_power);
  read_opt(j, "max_its", cfg.max_its);
  read_opt(j, "early_stop_it", cfg.early_stop_it);
  read_opt(j, "batch_size", cfg.batch_size);
  read_opt(j, "lambda_src_col", cfg.lambda_src_col);
  read_opt(j, "lambda_tgt_seg", cfg.lambda_tgt_seg);
  if (const auto it = j.find("strategy"); it != j.end()) {
    cfg.strategy = parse_strategy(it->get<std::string>());
  }
  read_opt(j, "stage_pretrain_its", cfg.stage_pretrain_its);
  read_opt(j, "seed", cfg.seed);
  read_opt(j, "use_translation", cfg.branches.use_translation);
  read_opt(j, "use_src_col", cfg.branches.use_src_col);
  read_opt(j, "use_tgt_col", cfg.branches.use_tgt_col);
  read_opt(j, "union_sources", cfg.union_sources);
  read_opt(j, "ramp_over_early_stop", cfg.ramp_over_early_stop);
  bool symmetric = cfg.teacher_gradient == losses::TeacherGradient::kSymmetric;
  read_opt(j, "symmetric_teacher", symmetric);
  cfg.teacher_gradient =
      symmetric ? losses::TeacherGradient::kSymmetric : losses::TeacherGradient::kDetached;
  read_opt(j, "keep_proportion", cfg.pseudo.keep_proportion);
  read_opt(j, "max_thresh", cfg.pseudo.max_thresh);
  read_opt(j, "ignore_id", cfg.pseudo.ignore_id);
  bool predicted_only = cfg.pseudo.scope == pseudo::ThresholdScope::kPredictedOnly;
  read_opt(j, "threshold_predicted_only", predicted_only);
  cfg.pseudo.scope =
      predicted_only ? pseudo::ThresholdScope::kPredictedOnly : pseudo::ThresholdScope::kFullPlane;
  read_opt(j, "feature_width", cfg.model.feature_width);
  read_opt(j, "class_count", cfg.model.class_count);
  read_opt(j, "checkpoint_every", cfg.checkpoint_every);
}

// ---------------------------------------------------------------------------
// Schedule and optimizer

double poly_lr(const TrainConfig& cfg, std::int64_t it) {
  if (it < 0 || it > cfg.max_its) {
    throw std::invalid_argument("poly_lr: iteration " + std::to_string(it) + " outside [0, " +
                                std::to_string(cfg.max_its) + "]");
  }
  const double frac = 1.0 - static_cast<double>(it) / static_cast<double>(cfg.max_its);
  return cfg.lr0 * std::pow(frac, cfg.poly_power);
}

void sgd_step(std::span<const nn::NamedParam> params, OptimizerState& state, double lr,
              double momentum) {
  if (state.velocity.empty()) {
    for (const auto& p : params) {
      state.velocity.emplace_back(p.tensor.numel(), 0.0);
    }
  }
  if (state.velocity.size() != params.size()) {
    throw std::invalid_argument("sgd_step: optimizer state does not match parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto g = params[i].tensor.grad();
    for (const double v : g) {
      if (!std::isfinite(v)) {
        throw std::domain_error("sgd_step: non-finite gradient in '" + params[i].name + "'");
      }
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].tensor;
    auto& v = state.velocity[i];
    if (v.size() != t.numel()) {
      throw std::invalid_argument("sgd_step: buffer shape mismatch for '" + params[i].name + "'");
    }
    const auto g = t.grad();
    const bool has_grad = !g.empty();
    auto p = t.mutable_data();
    for (std::size_t k = 0; k < v.size(); ++k) {
      v[k] = momentum * v[k] + (has_grad ? g[k] : 0.0);
      p[k] -= lr * v[k];
    }
  }
  ++state.step;
}

json IterationLog::to_json() const {
  json models_json = json::array();
  for (const auto& m : models) {
    models_json.push_back({{"domain", m.domain},
                           {"ce_src", m.ce_src},
                           {"col", m.col},
                           {"ce_tgt", m.ce_tgt},
                           {"total", m.total}});
  }
  return json{{"phase", phase}, {"it", it}, {"lr", lr}, {"ramp", ramp}, {"models", models_json}};
}

std::uint64_t model_seed(const TrainConfig& cfg, const std::string& domain) {
  return derive_seed(cfg.seed, hash_name("model/" + domain));
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

/// Endless reshuffled pass over a dataset.
class SampleStream {
 public:
  SampleStream(const data::Dataset& ds, std::uint64_t seed) : ds_(&ds), seed_(seed) {
    if (ds.empty()) {
      throw std::invalid_argument("training: dataset '" + ds.name() + "' is empty");
    }
    reshuffle();
  }

  const data::Sample& next() {
    if (pos_ == order_.size()) {
      ++epoch_;
      reshuffle();
    }
    return ds_->get(order_[pos_++]);
  }

 private:
  void reshuffle() {
    order_ = ds_->shuffled_order(derive_seed(seed_, epoch_));
    pos_ = 0;
  }

  const data::Dataset* ds_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

struct SourceState {
  std::string name;
  SampleStream stream;
  Rng translate_rng;
};

struct Drawn {
  Tensor input;
  const LabelMap* label;
};

/// LAB statistics of target images, computed on first use.
class TargetStats {
 public:
  explicit TargetStats(const data::Dataset* target)
      : target_(target), stats_(target ? target->size() : 0) {}

  std::size_t size() const { return stats_.size(); }

  const color::ChannelStats& get(std::size_t i) {
    if (!stats_[i]) {
      stats_[i] = color::channel_stats(color::rgb_to_lab(target_->get(i).image));
    }
    return *stats_[i];
  }

 private:
  const data::Dataset* target_;
  std::vector<std::optional<color::ChannelStats>> stats_;
};

Drawn draw_source(SourceState& src, TargetStats& target, bool translate) {
  const auto& sample = src.stream.next();
  if (!sample.label) {
    throw std::invalid_argument("training: source '" + src.name + "' has an unlabeled image");
  }
  if (!translate) {
    return {nn::image_to_tensor(sample.image), &*sample.label};
  }
  const auto t = static_cast<std::size_t>(src.translate_rng.uniform_index(target.size()));
  const Image translated = color::translate(sample.image, target.get(t));
  return {nn::image_to_tensor(translated), &*sample.label};
}

void check_finite_loss(double v, const std::string& phase, std::int64_t it,
                       const std::string& domain) {
  if (!std::isfinite(v)) {
    throw std::runtime_error("non-finite loss in " + phase + " iteration " + std::to_string(it) +
                             " for model '" + domain + "'");
  }
}

void step_with_context(std::span<const nn::NamedParam> params, OptimizerState& state, double lr,
                       double momentum, const std::string& phase, std::int64_t it,
                       const std::string& domain) {
  try {
    sgd_step(params, state, lr, momentum);
  } catch (const std::domain_error& e) {
    throw std::runtime_error(std::string(e.what()) + " in " + phase + " iteration " +
                             std::to_string(it) + " for model '" + domain + "'");
  }
}

Tensor accumulate(const Tensor& acc, const Tensor& term) {
  return acc.defined() ? autograd::add(acc, term) : term;
}

}  // namespace

TrainResult train_collaborative(std::span<const data::Dataset> sources,
                                const data::Dataset* target, const TrainConfig& cfg,
                                const TrainOptions& options) {
  cfg.validate();
  if (sources.empty()) {
    throw std::invalid_argument("train_collaborative: at least one labeled source required");
  }
  const bool need_target = cfg.branches.use_translation || cfg.branches.use_tgt_col;
  if (need_target && (target == nullptr || target->empty())) {
    throw std::invalid_argument(
        "train_collaborative: translation and target collaboration need target images");
  }
  for (const auto& s : sources) {
    if (s.class_count() != cfg.model.class_count) {
      throw std::invalid_argument("train_collaborative: source '" + s.name() + "' has " +
                                  std::to_string(s.class_count()) + " classes, model has " +
                                  std::to_string(cfg.model.class_count));
    }
  }

  // Model roster.
  std::vector<data::Dataset> union_holder;
  std::vector<const data::Dataset*> model_sources;
  if (cfg.union_sources) {
    union_holder.push_back(data::Dataset::concat("union", sources));
    model_sources.push_back(&union_holder.front());
  } else {
    for (const auto& s : sources) model_sources.push_back(&s);
  }
  const std::size_t n = model_sources.size();

  TrainResult result;
  std::vector<SourceState> states;
  std::vector<OptimizerState> optim(n);
  std::vector<std::vector<nn::NamedParam>> params;
  for (const auto* ds : model_sources) {
    const std::string& name = ds->name();
    for (const auto& id : result.models.domain_ids) {
      if (id == name) {
        throw std::invalid_argument("train_collaborative: duplicate source name '" + name + "'");
      }
    }
    result.models.models.push_back(nn::SegNetMicro::init(cfg.model, model_seed(cfg, name)));
    result.models.domain_ids.push_back(name);
    states.push_back({name, SampleStream(*ds, derive_seed(cfg.seed, hash_name("data/" + name))),
                      Rng(derive_seed(cfg.seed, hash_name("translate/" + name)))});
  }
  for (auto& m : result.models.models) params.push_back(m.parameters());

  TargetStats target_stats(cfg.branches.use_translation ? target : nullptr);
  std::optional<SampleStream> target_stream;
  if (cfg.branches.use_tgt_col) {
    target_stream.emplace(*target, derive_seed(cfg.seed, hash_name("target")));
  }

  auto emit = [&](IterationLog&& rec) {
    if (options.metrics) {
      *options.metrics << rec.to_json().dump() << "\n";
    }
    if (options.on_iteration) {
      options.on_iteration(rec);
    }
    result.log.push_back(std::move(rec));
  };

  const double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);

  // Stage-wise: source-only pre-training of every model.
  if (cfg.strategy == Strategy::kStageWise && cfg.stage_pretrain_its > 0) {
    TrainConfig pre = cfg;
    pre.max_its = cfg.stage_pretrain_its;
    for (std::int64_t it = 0; it < cfg.stage_pretrain_its; ++it) {
      IterationLog rec{"pretrain", it, poly_lr(pre, it), 0.0, {}};
      Tensor objective;
      for (std::size_t i = 0; i < n; ++i) {
        Tensor ce;
        for (int b = 0; b < cfg.batch_size; ++b) {
          const Drawn d = draw_source(states[i], target_stats, cfg.branches.use_translation);
          ce = accumulate(ce, losses::cross_entropy(result.models.models[i].forward(d.input),
                                                    *d.label, cfg.pseudo.ignore_id));
        }
        ce = autograd::scale(ce, inv_batch);
        check_finite_loss(ce.item(), "pretrain", it, states[i].name);
        rec.models.push_back({states[i].name, ce.item(), 0.0, 0.0, ce.item()});
        objective = accumulate(objective, ce);
      }
      autograd::backward(objective);
      for (std::size_t i = 0; i < n; ++i) {
        step_with_context(params[i], optim[i], rec.lr, cfg.momentum, "pretrain", it,
                          states[i].name);
        result.models.models[i].zero_grad();
      }
      emit(std::move(rec));
    }
    for (auto& o : optim) o = OptimizerState{};
  }

  const std::int64_t ramp_horizon = cfg.ramp_over_early_stop ? cfg.early_stop_it : cfg.max_its;
  const bool src_col = cfg.branches.use_src_col && n > 1;
  const bool tgt_col = cfg.branches.use_tgt_col;

  for (std::int64_t it = 0; it < cfg.early_stop_it; ++it) {
    losses::LossWeights weights{cfg.lambda_src_col, cfg.lambda_tgt_seg, it, ramp_horizon};
    IterationLog rec{"collab", it, poly_lr(cfg, it), losses::ramp_weight(weights), {}};

    std::vector<Tensor> ce_src(n), col(n), ce_tgt(n);
    for (int b = 0; b < cfg.batch_size; ++b) {
      std::vector<Drawn> drawn;
      drawn.reserve(n);
      for (std::size_t i = 0; i < n; ++i) {
        drawn.push_back(draw_source(states[i], target_stats, cfg.branches.use_translation));
      }
      // own[i] = model i on its own domain; also the teacher for its peers.
      std::vector<Tensor> own(n);
      for (std::size_t i = 0; i < n; ++i) {
        own[i] = result.models.models[i].forward(drawn[i].input);
        ce_src[i] = accumulate(
            ce_src[i], losses::cross_entropy(own[i], *drawn[i].label, cfg.pseudo.ignore_id));
      }
      if (src_col) {
        for (std::size_t i = 0; i < n; ++i) {
          std::vector<losses::PeerPair> pairs;
          for (std::size_t k = 0; k < n; ++k) {
            if (k == i) continue;
            pairs.push_back({result.models.models[i].forward(drawn[k].input), own[k]});
          }
          col[i] = accumulate(col[i], losses::collaborative_src_loss(pairs, cfg.teacher_gradient));
        }
      }
      if (tgt_col) {
        const Tensor x_t = nn::image_to_tensor(target_stream->next().image);
        std::vector<Tensor> logits(n), frozen(n);
        for (std::size_t i = 0; i < n; ++i) {
          logits[i] = result.models.models[i].forward(x_t);
          frozen[i] = autograd::detach(logits[i]);
        }
        const LabelMap pseudo_labels =
            pseudo::generate_pseudo_labels(pseudo::ensemble_probability(frozen), cfg.pseudo);
        for (std::size_t i = 0; i < n; ++i) {
          ce_tgt[i] = accumulate(
              ce_tgt[i], losses::cross_entropy(logits[i], pseudo_labels, cfg.pseudo.ignore_id));
        }
      }
    }

    Tensor objective;
    for (std::size_t i = 0; i < n; ++i) {
      const Tensor seg = autograd::scale(ce_src[i], inv_batch);
      const Tensor c = col[i].defined() ? autograd::scale(col[i], inv_batch) : Tensor::scalar(0.0);
      const Tensor t =
          ce_tgt[i].defined() ? autograd::scale(ce_tgt[i], inv_batch) : Tensor::scalar(0.0);
      const Tensor total = losses::total_objective(seg, c, t, weights);
      check_finite_loss(total.item(), "collab", it, states[i].name);
      rec.models.push_back({states[i].name, seg.item(), c.item(), t.item(), total.item()});
      objective = accumulate(objective, total);
    }
    autograd::backward(objective);
    for (std::size_t i = 0; i < n; ++i) {
      step_with_context(params[i], optim[i], rec.lr, cfg.momentum, "collab", it, states[i].name);
      result.models.models[i].zero_grad();
    }
    emit(std::move(rec));

    if (!options.checkpoint_dir.empty() && cfg.checkpoint_every > 0 &&
        (it + 1) % cfg.checkpoint_every == 0) {
      result.models.save(options.checkpoint_dir / ("it_" + std::to_string(it + 1)));
    }
  }

  if (!options.checkpoint_dir.empty()) {
    result.models.save(options.checkpoint_dir / "final");
  }
  return result;
}

}  // namespace coadapt::train
