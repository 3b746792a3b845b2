#include <gtest/gtest.h>

#include <random>

#include "coadapt/data.hpp"
#include "coadapt/eval.hpp"
#include "oracles.hpp"

using namespace coadapt;
using eval::ConfusionMatrix;
using eval::InferMode;

namespace {

LabelMap random_labels(std::mt19937_64& gen, int h, int w, int classes) {
  LabelMap l(h, w);
  std::uniform_int_distribution<int> d(0, classes - 1);
  for (auto& id : l.ids()) id = d(gen);
  return l;
}

// IoU straight from pixel sets.
std::optional<double> naive_mean_iou(const std::vector<LabelMap>& preds,
                                     const std::vector<LabelMap>& gts, int classes) {
  double sum = 0;
  int defined = 0;
  for (int c = 0; c < classes; ++c) {
    double inter = 0, uni = 0;
    for (std::size_t k = 0; k < preds.size(); ++k) {
      for (std::size_t i = 0; i < gts[k].size(); ++i) {
        if (gts[k][i] == kDefaultIgnoreId) continue;
        const bool p = preds[k][i] == c;
        const bool g = gts[k][i] == c;
        inter += p && g;
        uni += p || g;
      }
    }
    if (uni > 0) {
      sum += inter / uni;
      ++defined;
    }
  }
  if (defined == 0) return std::nullopt;
  return sum / defined;
}

nn::ModelSet two_models() {
  nn::ModelSet set;
  set.models = {nn::SegNetMicro::init({4, 3}, 1), nn::SegNetMicro::init({4, 3}, 2)};
  set.domain_ids = {"a", "b"};
  return set;
}

}  // namespace

TEST(Confusion, PerfectPredictionIsDiagonal) {
  std::mt19937_64 gen(1);
  const auto gt = random_labels(gen, 6, 7, 4);
  ConfusionMatrix cm(4);
  cm.accumulate(gt, gt);
  EXPECT_EQ(cm.total(), 42u);
  for (int g = 0; g < 4; ++g) {
    for (int p = 0; p < 4; ++p) {
      if (g != p) EXPECT_EQ(cm.at(g, p), 0u);
    }
    EXPECT_EQ(cm.at(g, g), gt.count(g));
  }
  const auto r = eval::miou(cm);
  ASSERT_TRUE(r.mean);
  EXPECT_EQ(*r.mean, 1.0);
}

TEST(Confusion, IgnoredPixelsAreSkipped) {
  ConfusionMatrix cm(3);
  cm.accumulate(LabelMap(2, 2, 1), LabelMap(2, 2, kDefaultIgnoreId));
  EXPECT_EQ(cm, ConfusionMatrix(3));
  // predictions at ignored pixels may be anything, even out of range
  LabelMap gt(1, 2, kDefaultIgnoreId);
  gt[0] = 2;
  LabelMap pred(1, 2, 99);
  pred[0] = 2;
  cm.accumulate(pred, gt);
  EXPECT_EQ(cm.total(), 1u);
  EXPECT_EQ(cm.at(2, 2), 1u);
}

TEST(Confusion, MatchesNaiveCount) {
  std::mt19937_64 gen(2);
  ConfusionMatrix cm(5);
  std::vector<std::uint64_t> naive(25, 0);
  for (int k = 0; k < 4; ++k) {
    const auto gt = random_labels(gen, 5, 5, 5);
    const auto pred = random_labels(gen, 5, 5, 5);
    cm.accumulate(pred, gt);
    for (std::size_t i = 0; i < 25; ++i) ++naive[static_cast<std::size_t>(gt[i] * 5 + pred[i])];
  }
  EXPECT_EQ(cm, ConfusionMatrix::from_counts(5, naive));
}

TEST(Confusion, RejectsBadInput) {
  ConfusionMatrix cm(3);
  EXPECT_THROW(cm.accumulate(LabelMap(2, 2), LabelMap(2, 3)), std::invalid_argument);
  EXPECT_THROW(cm.accumulate(LabelMap(2, 2, 3), LabelMap(2, 2)), std::invalid_argument);
  EXPECT_THROW(cm.accumulate(LabelMap(2, 2), LabelMap(2, 2, 4)), std::invalid_argument);
  EXPECT_THROW(ConfusionMatrix(0), std::invalid_argument);
  EXPECT_THROW(ConfusionMatrix::from_counts(2, {1, 2, 3}), std::invalid_argument);
  EXPECT_THROW(cm += ConfusionMatrix(2), std::invalid_argument);
}

TEST(Miou, HandWorkedTwoClass) {
  // IoU = 3 / (4 + 4 - 3) = 0.6 for both classes.
  const auto r = eval::miou(ConfusionMatrix::from_counts(2, {3, 1, 1, 3}));
  ASSERT_TRUE(r.mean);
  EXPECT_DOUBLE_EQ(*r.mean, 0.6);
  EXPECT_DOUBLE_EQ(*r.per_class[0], 0.6);
}

TEST(Miou, UndefinedClassesAreSkipped) {
  const auto r = eval::miou(ConfusionMatrix::from_counts(3, {2, 0, 0, 0, 0, 0, 2, 0, 0}));
  ASSERT_TRUE(r.per_class[0]);
  EXPECT_DOUBLE_EQ(*r.per_class[0], 0.5);
  EXPECT_FALSE(r.per_class[1]);
  EXPECT_DOUBLE_EQ(*r.per_class[2], 0.0);
  EXPECT_DOUBLE_EQ(*r.mean, 0.25);
  EXPECT_FALSE(eval::miou(ConfusionMatrix(3)).mean);
}

TEST(Miou, MatchesPixelSetOracle) {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<LabelMap> preds, gts;
    ConfusionMatrix cm(6);
    for (int k = 0; k < 3; ++k) {
      gts.push_back(random_labels(gen, 4, 9, 5));  // class 5 never in gt
      preds.push_back(random_labels(gen, 4, 9, 6));
      gts.back()[static_cast<std::size_t>(k)] = kDefaultIgnoreId;
      cm.accumulate(preds.back(), gts.back());
    }
    const auto expect = naive_mean_iou(preds, gts, 6);
    ASSERT_TRUE(expect);
    EXPECT_NEAR(*eval::miou(cm).mean, *expect, 1e-12);
  }
}

TEST(Miou, InvariantUnderClassRelabeling) {
  std::mt19937_64 gen(4);
  const std::vector<int> perm{3, 0, 4, 1, 2};
  ConfusionMatrix a(5), b(5);
  for (int k = 0; k < 3; ++k) {
    auto gt = random_labels(gen, 6, 6, 5);
    auto pred = random_labels(gen, 6, 6, 5);
    a.accumulate(pred, gt);
    for (auto& id : gt.ids()) id = perm[static_cast<std::size_t>(id)];
    for (auto& id : pred.ids()) id = perm[static_cast<std::size_t>(id)];
    b.accumulate(pred, gt);
  }
  EXPECT_NEAR(*eval::miou(a).mean, *eval::miou(b).mean, 1e-15);
}

TEST(InferModeText, ParseAndFormat) {
  EXPECT_EQ(InferMode::parse("ensemble").kind, InferMode::Kind::kEnsemble);
  const auto s = InferMode::parse("single:3");
  EXPECT_EQ(s.kind, InferMode::Kind::kSingle);
  EXPECT_EQ(s.index, 3u);
  EXPECT_EQ(s.to_string(), "single:3");
  for (const char* bad : {"", "single:", "single:x", "single:1x", "avg", "single:-1"}) {
    EXPECT_THROW(InferMode::parse(bad), std::invalid_argument) << bad;
  }
}

TEST(Infer, SingleModelEnsembleEqualsSingle) {
  nn::ModelSet set;
  set.models = {nn::SegNetMicro::init({4, 3}, 9)};
  set.domain_ids = {"a"};
  std::mt19937_64 gen(5);
  const auto img = oracle::random_rgb(gen, 7, 5);
  EXPECT_EQ(eval::infer(set, img, InferMode::ensemble()), eval::infer(set, img, InferMode::single(0)));
}

TEST(Infer, EnsembleIsArgmaxOfMeanLogits) {
  const auto set = two_models();
  std::mt19937_64 gen(6);
  const auto img = oracle::random_rgb(gen, 5, 6);
  const auto a = set.models[0].forward(img);
  const auto b = set.models[1].forward(img);
  const auto got = eval::infer(set, img, InferMode::ensemble());
  for (std::size_t i = 0; i < 30; ++i) {
    int best = 0;
    double best_v = -1e300;
    for (int c = 0; c < 3; ++c) {
      const std::size_t k = static_cast<std::size_t>(c) * 30 + i;
      const double v = (a.data()[k] + b.data()[k]) / 2;
      if (v > best_v) {
        best_v = v;
        best = c;
      }
    }
    EXPECT_EQ(got[i], best);
  }
  EXPECT_THROW(eval::infer(set, img, InferMode::single(2)), std::out_of_range);
}

TEST(Evaluate, CountsEveryLabeledPixel) {
  const auto set = two_models();
  std::mt19937_64 gen(7);
  std::vector<Image> images;
  std::vector<LabelMap> labels;
  for (int k = 0; k < 3; ++k) {
    images.push_back(oracle::random_rgb(gen, 4, 4));
    labels.push_back(random_labels(gen, 4, 4, 3));
  }
  labels[0][0] = kDefaultIgnoreId;
  const auto ds = data::Dataset::from_memory("v", 3, images, labels);
  const auto cm = eval::evaluate(set, ds, InferMode::single(1));
  EXPECT_EQ(cm.total(), 47u);
  ConfusionMatrix ref(3);
  for (int k = 0; k < 3; ++k) {
    ref.accumulate(eval::infer(set, images[static_cast<std::size_t>(k)], InferMode::single(1)),
                   labels[static_cast<std::size_t>(k)]);
  }
  EXPECT_EQ(cm, ref);
  EXPECT_THROW(eval::evaluate(set, ds.without_labels(), InferMode::ensemble()),
               std::invalid_argument);
}

TEST(Evaluate, SelectBestModelPicksHighestMiou) {
  const auto set = two_models();
  std::mt19937_64 gen(8);
  std::vector<Image> images;
  for (int k = 0; k < 2; ++k) images.push_back(oracle::random_rgb(gen, 5, 5));
  // Labels equal to model 1's predictions make it perfect.
  std::vector<LabelMap> labels;
  for (const auto& img : images) labels.push_back(eval::infer(set, img, InferMode::single(1)));
  const auto ds = data::Dataset::from_memory("v", 3, images, labels);
  EXPECT_EQ(eval::select_best_model(set, ds), 1u);
  // Ties go to the lowest index.
  nn::ModelSet same;
  same.models = {set.models[1].clone(), set.models[1].clone()};
  same.domain_ids = {"a", "b"};
  EXPECT_EQ(eval::select_best_model(same, ds), 0u);
}

TEST(Format, TableListsEveryClassAndMean) {
  const auto r = eval::miou(ConfusionMatrix::from_counts(3, {2, 0, 0, 0, 0, 0, 2, 0, 0}));
  const auto text = eval::format_iou_table(r, {"sky", "road"});
  EXPECT_NE(text.find("sky"), std::string::npos);
  EXPECT_NE(text.find("50.00"), std::string::npos);
  EXPECT_NE(text.find("n/a"), std::string::npos);
  EXPECT_NE(text.find("class_2"), std::string::npos);
  EXPECT_NE(text.find("mIoU"), std::string::npos);
  EXPECT_NE(text.find("25.00"), std::string::npos);
}
