#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>

#include "coadapt/data.hpp"
#include "coadapt/training.hpp"
#include "oracles.hpp"

using namespace coadapt;
using autograd::Tensor;
using train::TrainConfig;

namespace {

struct Fixture {
  std::vector<data::Dataset> sources;
  data::Dataset target;
};

Fixture small_benchmark(std::uint64_t seed = 1, int count = 6) {
  const auto b = data::generate_benchmark(3, count, 2, seed, 16, 16);
  Fixture f;
  for (const auto& s : b.sources) f.sources.push_back(data::Dataset::from_synth(s, 5));
  f.target = data::Dataset::from_synth(b.target_train, 5).without_labels();
  return f;
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.lr0 = 2e-2;
  cfg.max_its = 12;
  cfg.early_stop_it = 12;
  cfg.model = {4, 5};
  cfg.seed = 3;
  return cfg;
}

std::vector<double> flat_params(const nn::SegNetMicro& m) {
  std::vector<double> out;
  for (const auto& p : m.parameters()) out.insert(out.end(), p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

// Gives `p` the gradient `g` through a linear loss.
void set_grad(Tensor& p, const std::vector<double>& g) {
  p.zero_grad();
  autograd::backward(autograd::sum(autograd::mul(p, Tensor(p.shape(), g))));
}

}  // namespace

TEST(PolyLr, Endpoints) {
  TrainConfig cfg;
  cfg.lr0 = 2.5e-4;
  cfg.max_its = 250000;
  EXPECT_DOUBLE_EQ(train::poly_lr(cfg, 0), 2.5e-4);
  EXPECT_EQ(train::poly_lr(cfg, cfg.max_its), 0.0);
  EXPECT_NEAR(train::poly_lr(cfg, 125000), 2.5e-4 * std::pow(0.5, 0.9), 1e-18);
  EXPECT_NEAR(train::poly_lr(cfg, 125000), 1.3397e-4, 1e-8);
  EXPECT_THROW(train::poly_lr(cfg, -1), std::invalid_argument);
  EXPECT_THROW(train::poly_lr(cfg, cfg.max_its + 1), std::invalid_argument);
  double prev = 1.0;
  for (std::int64_t it = 0; it <= cfg.max_its; it += 5000) {
    const double lr = train::poly_lr(cfg, it);
    EXPECT_LT(lr, prev);
    prev = lr;
  }
}

TEST(Sgd, PlainStepWithoutMomentum) {
  Tensor p({3}, {1.0, 2.0, 3.0}, true);
  std::vector<nn::NamedParam> params{{"p", p}};
  train::OptimizerState st;
  set_grad(p, {0.5, -1.0, 0.0});
  train::sgd_step(params, st, 0.1, 0.0);
  EXPECT_DOUBLE_EQ(p.data()[0], 1.0 - 0.05);
  EXPECT_DOUBLE_EQ(p.data()[1], 2.0 + 0.1);
  EXPECT_EQ(p.data()[2], 3.0);
  EXPECT_EQ(st.step, 1);
}

TEST(Sgd, ZeroGradientLeavesFreshParametersAlone) {
  Tensor p({2}, {1.0, -1.0}, true);
  Tensor q({1}, {4.0}, true);  // never receives a gradient
  std::vector<nn::NamedParam> params{{"p", p}, {"q", q}};
  train::OptimizerState st;
  set_grad(p, {0.0, 0.0});
  train::sgd_step(params, st, 0.1, 0.9);
  EXPECT_EQ(p.data()[0], 1.0);
  EXPECT_EQ(p.data()[1], -1.0);
  EXPECT_EQ(q.data()[0], 4.0);
}

TEST(Sgd, MomentumTwoSteps) {
  const double lr = 0.1, m = 0.9, g = 0.3;
  Tensor p({1}, {1.0}, true);
  std::vector<nn::NamedParam> params{{"p", p}};
  train::OptimizerState st;
  set_grad(p, {g});
  train::sgd_step(params, st, lr, m);
  set_grad(p, {g});
  train::sgd_step(params, st, lr, m);
  EXPECT_NEAR(p.data()[0], 1.0 - lr * g - lr * (1.0 + m) * g, 1e-15);
}

TEST(Sgd, NonFiniteGradientNamesParameter) {
  Tensor p({2}, {1.0, 1.0}, true);
  std::vector<nn::NamedParam> params{{"conv9.weight", p}};
  train::OptimizerState st;
  set_grad(p, {0.0, std::numeric_limits<double>::quiet_NaN()});
  try {
    train::sgd_step(params, st, 0.1, 0.9);
    FAIL();
  } catch (const std::domain_error& e) {
    EXPECT_NE(std::string(e.what()).find("conv9.weight"), std::string::npos);
  }
  EXPECT_EQ(p.data()[0], 1.0);
}

TEST(Config, JsonRoundTrip) {
  TrainConfig cfg = TrainConfig::full_scale_stage_wise();
  cfg.seed = 99;
  cfg.branches.use_src_col = false;
  cfg.pseudo.keep_proportion = 0.25;
  cfg.pseudo.scope = pseudo::ThresholdScope::kPredictedOnly;
  cfg.teacher_gradient = losses::TeacherGradient::kSymmetric;
  cfg.model = {8, 7};
  nlohmann::json j = cfg;
  const auto back = j.get<TrainConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(back.strategy, train::Strategy::kStageWise);
  EXPECT_EQ(back.model, cfg.model);
  EXPECT_EQ(back.branches, cfg.branches);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(nlohmann::json({{"learning_rate", 0.1}}).get<TrainConfig>(), std::invalid_argument);
  EXPECT_THROW(nlohmann::json({{"strategy", "greedy"}}).get<TrainConfig>(), std::invalid_argument);
  const auto partial = nlohmann::json({{"max_its", 10}, {"early_stop_it", 5}}).get<TrainConfig>();
  EXPECT_EQ(partial.max_its, 10);
  EXPECT_EQ(partial.lr0, TrainConfig{}.lr0);

  auto bad = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    return c;
  };
  EXPECT_THROW(bad([](TrainConfig& c) { c.lr0 = 0; }).validate(), std::invalid_argument);
  EXPECT_THROW(bad([](TrainConfig& c) { c.early_stop_it = c.max_its + 1; }).validate(),
               std::invalid_argument);
  EXPECT_THROW(bad([](TrainConfig& c) { c.momentum = 1.0; }).validate(), std::invalid_argument);
  EXPECT_THROW(bad([](TrainConfig& c) { c.batch_size = 0; }).validate(), std::invalid_argument);
  EXPECT_THROW(bad([](TrainConfig& c) { c.pseudo.max_thresh = 0; }).validate(),
               std::invalid_argument);
  EXPECT_NO_THROW(TrainConfig{}.validate());
}

TEST(Config, FullScalePresets) {
  const auto e = TrainConfig::full_scale_end_to_end();
  EXPECT_EQ(e.max_its, 250000);
  EXPECT_EQ(e.early_stop_it, 120000);
  EXPECT_EQ(e.lambda_src_col, 0.5);
  EXPECT_EQ(e.lambda_tgt_seg, 0.1);
  EXPECT_EQ(e.lr0, 2.5e-4);
  EXPECT_EQ(e.momentum, 0.9);
  EXPECT_EQ(e.pseudo.keep_proportion, 0.5);
  EXPECT_EQ(e.pseudo.max_thresh, 0.9);
  const auto s = TrainConfig::full_scale_stage_wise();
  EXPECT_EQ(s.lambda_src_col, 9.5);
  EXPECT_EQ(s.strategy, train::Strategy::kStageWise);
}

TEST(Training, SingleSourceLossDecreases) {
  const auto f = small_benchmark(2, 8);
  auto cfg = small_config();
  cfg.branches = {false, false, false};
  cfg.max_its = cfg.early_stop_it = 80;
  const std::vector<data::Dataset> one{f.sources[0]};
  const auto r = train::train_collaborative(one, nullptr, cfg);
  ASSERT_EQ(r.log.size(), 80u);
  ASSERT_EQ(r.models.size(), 1u);
  auto dataset_loss = [&](const nn::SegNetMicro& m) {
    autograd::NoGradGuard ng;
    double s = 0;
    for (std::size_t i = 0; i < one[0].size(); ++i) {
      const auto& sample = one[0].get(i);
      s += losses::cross_entropy(m.forward(sample.image), *sample.label).item();
    }
    return s / static_cast<double>(one[0].size());
  };
  const auto initial = nn::SegNetMicro::init(cfg.model, train::model_seed(cfg, "source_a"));
  EXPECT_LT(dataset_loss(r.models.models[0]), 0.9 * dataset_loss(initial));
}

TEST(Training, ZeroWeightsDecoupleModels) {
  const auto f = small_benchmark();
  auto cfg = small_config();
  cfg.branches = {false, true, false};
  cfg.lambda_src_col = 0.0;
  const auto joint = train::train_collaborative(f.sources, nullptr, cfg);
  for (std::size_t i = 0; i < 2; ++i) {
    const std::vector<data::Dataset> one{f.sources[i]};
    const auto solo = train::train_collaborative(one, nullptr, cfg);
    EXPECT_EQ(flat_params(joint.models.models[i]), flat_params(solo.models.models[0]));
    EXPECT_EQ(joint.models.domain_ids[i], solo.models.domain_ids[0]);
  }
}

TEST(Training, LoggedTotalCombinesTerms) {
  const auto f = small_benchmark();
  auto cfg = small_config();
  const auto r = train::train_collaborative(f.sources, &f.target, cfg);
  ASSERT_EQ(r.log.size(), 12u);
  for (const auto& rec : r.log) {
    EXPECT_EQ(rec.phase, "collab");
    EXPECT_DOUBLE_EQ(rec.lr, train::poly_lr(cfg, rec.it));
    const double ramp = losses::ramp_weight({cfg.lambda_src_col, cfg.lambda_tgt_seg, rec.it, cfg.max_its});
    EXPECT_DOUBLE_EQ(rec.ramp, ramp);
    ASSERT_EQ(rec.models.size(), 2u);
    for (const auto& m : rec.models) {
      EXPECT_NEAR(m.total, m.ce_src + cfg.lambda_src_col * m.col + rec.ramp * m.ce_tgt, 1e-12);
      EXPECT_GE(m.col, 0.0);
      if (rec.it > 0) {
        EXPECT_GT(m.col, 0.0);
      }
    }
  }
}

TEST(Training, DeterministicAndSeedSensitive) {
  const auto f = small_benchmark();
  auto cfg = small_config();
  std::ostringstream m1, m2, m3;
  const auto a = train::train_collaborative(f.sources, &f.target, cfg, {&m1, {}, {}});
  const auto b = train::train_collaborative(f.sources, &f.target, cfg, {&m2, {}, {}});
  EXPECT_EQ(m1.str(), m2.str());
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(flat_params(a.models.models[i]), flat_params(b.models.models[i]));
  }
  cfg.seed += 1;
  train::train_collaborative(f.sources, &f.target, cfg, {&m3, {}, {}});
  EXPECT_NE(m1.str(), m3.str());
  // one JSON record per line
  std::istringstream lines(m1.str());
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["it"].get<int>(), count++);
    EXPECT_EQ(j["models"].size(), 2u);
  }
  EXPECT_EQ(count, 12);
}

TEST(Training, EarlyStopAndRampHorizon) {
  const auto f = small_benchmark();
  auto cfg = small_config();
  cfg.max_its = 20;
  cfg.early_stop_it = 8;
  auto r = train::train_collaborative(f.sources, &f.target, cfg);
  ASSERT_EQ(r.log.size(), 8u);
  EXPECT_DOUBLE_EQ(r.log.back().ramp, losses::ramp_weight({0.5, 0.1, 7, 20}));
  cfg.ramp_over_early_stop = true;
  r = train::train_collaborative(f.sources, &f.target, cfg);
  EXPECT_DOUBLE_EQ(r.log.back().ramp, losses::ramp_weight({0.5, 0.1, 7, 8}));
}

TEST(Training, CheckpointsAreWritten) {
  const auto f = small_benchmark();
  auto cfg = small_config();
  cfg.checkpoint_every = 5;
  const auto dir = oracle::temp_dir("train_ckpt");
  const auto r = train::train_collaborative(f.sources, &f.target, cfg, {nullptr, dir, {}});
  EXPECT_TRUE(std::filesystem::exists(dir / "it_5" / "models.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "it_10" / "models.json"));
  EXPECT_FALSE(std::filesystem::exists(dir / "it_15"));
  const auto final_set = nn::ModelSet::load(dir / "final");
  ASSERT_EQ(final_set.size(), 2u);
  EXPECT_EQ(flat_params(final_set.models[1]), flat_params(r.models.models[1]));
}

TEST(Training, StageWiseRunsPretrainFirst) {
  const auto f = small_benchmark();
  auto cfg = small_config();
  cfg.strategy = train::Strategy::kStageWise;
  cfg.stage_pretrain_its = 4;
  int pre = 0, collab = 0;
  std::string order;
  train::TrainOptions opts;
  opts.on_iteration = [&](const train::IterationLog& rec) {
    if (rec.phase == "pretrain") {
      ++pre;
      EXPECT_EQ(collab, 0);
      EXPECT_EQ(rec.models[0].col, 0.0);
      EXPECT_EQ(rec.models[0].total, rec.models[0].ce_src);
    } else {
      ++collab;
    }
  };
  train::train_collaborative(f.sources, &f.target, cfg, opts);
  EXPECT_EQ(pre, 4);
  EXPECT_EQ(collab, 12);
}

TEST(Training, UnionTrainsOneModel) {
  const auto f = small_benchmark();
  auto cfg = small_config();
  cfg.union_sources = true;
  cfg.branches = {true, false, false};
  const auto r = train::train_collaborative(f.sources, &f.target, cfg);
  ASSERT_EQ(r.models.size(), 1u);
  EXPECT_EQ(r.models.domain_ids[0], "union");
  EXPECT_EQ(r.log[0].models.size(), 1u);
}

TEST(Training, RejectsBadInputs) {
  const auto f = small_benchmark();
  auto cfg = small_config();
  EXPECT_THROW(train::train_collaborative(f.sources, nullptr, cfg), std::invalid_argument);
  EXPECT_THROW(train::train_collaborative({}, &f.target, cfg), std::invalid_argument);
  const std::vector<data::Dataset> dup{f.sources[0], f.sources[0]};
  EXPECT_THROW(train::train_collaborative(dup, &f.target, cfg), std::invalid_argument);
  const std::vector<data::Dataset> unlabeled{f.sources[0].without_labels()};
  cfg.branches = {false, false, false};
  EXPECT_THROW(train::train_collaborative(unlabeled, nullptr, cfg), std::invalid_argument);
  cfg.model.class_count = 4;
  EXPECT_THROW(train::train_collaborative(f.sources, nullptr, cfg), std::invalid_argument);
}

TEST(Training, NonFiniteLossIsReportedWithContext) {
  auto cfg = small_config();
  cfg.branches = {false, false, false};
  Image img(8, 8, ColorSpace::kSrgbUnit);
  img.at(3, 3, 1) = std::numeric_limits<double>::quiet_NaN();
  const std::vector<data::Dataset> bad{
      data::Dataset::from_memory("broken", 5, {img}, {LabelMap(8, 8, 1)})};
  try {
    train::train_collaborative(bad, nullptr, cfg);
    FAIL() << "expected a non-finite loss";
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("collab iteration 0"), std::string::npos) << msg;
    EXPECT_NE(msg.find("broken"), std::string::npos) << msg;
  }
}
