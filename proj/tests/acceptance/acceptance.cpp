// One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "cli.hpp"
#include "coadapt/colorspace.hpp"
#include "coadapt/losses.hpp"
#include "coadapt/model.hpp"
#include "coadapt/pseudolabel.hpp"
#include "coadapt/repro.hpp"
#include "coadapt/training.hpp"
#include "oracles.hpp"

using namespace coadapt;
using autograd::Tensor;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

int g_failures = 0;

void report(int id, const std::string& title, const Outcome& o) {
  std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << title;
  if (!o.detail.empty()) std::cout << " (" << o.detail << ")";
  std::cout << std::endl;
  if (!o.pass) ++g_failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

// ---------------------------------------------------------------------------

Outcome color_math() {
  const double start = cpu_seconds();
  double worst = 0.0;
  constexpr int kSteps = 18;
  for (int r = 0; r < kSteps; ++r)
    for (int g = 0; g < kSteps; ++g)
      for (int b = 0; b < kSteps; ++b) {
        const std::array<double, 3> rgb{r / 17.0, g / 17.0, b / 17.0};
        const auto back = color::lab_to_srgb_unclamped(color::srgb_to_lab(rgb));
        for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(back[c] - rgb[c]));
      }
  const auto white = color::srgb_to_lab({1, 1, 1});
  const auto black = color::srgb_to_lab({0, 0, 0});
  double anchor = std::max({std::abs(white[0] - 100), std::abs(white[1]), std::abs(white[2])});
  for (double v : black) anchor = std::max(anchor, std::abs(v));
  const double elapsed = cpu_seconds() - start;
  return {worst <= 1e-6 && anchor <= 1e-6 && elapsed < 5.0,
          fmt("round-trip max err %.2e, white/black err %.2e, %.3f s", worst, anchor, elapsed)};
}

Outcome translation_contract() {
  std::mt19937_64 gen(101);
  double stats_err = 0.0;
  double self_err = 0.0;
  std::uniform_int_distribution<int> side(4, 24);
  for (int k = 0; k < 100; ++k) {
    const Image src = oracle::random_rgb(gen, side(gen), side(gen));
    const Image tgt = oracle::random_rgb(gen, side(gen), side(gen));
    const auto got = color::channel_stats(color::translate_to_lab(src, tgt));
    const auto want = color::channel_stats(color::rgb_to_lab(tgt));
    for (int c = 0; c < 3; ++c) {
      stats_err = std::max({stats_err, std::abs(got.mean[c] - want.mean[c]),
                            std::abs(got.std[c] - want.std[c])});
    }
    const Image same = color::translate(src, src);
    for (std::size_t i = 0; i < same.data().size(); ++i) {
      self_err = std::max(self_err, std::abs(same.data()[i] - src.data()[i]));
    }
  }
  return {stats_err <= 1e-9 && self_err <= 1e-6,
          fmt("stats err %.2e, translate(x,x) err %.2e", stats_err, self_err)};
}

Outcome pseudo_label_oracle() {
  std::mt19937_64 gen(202);
  const pseudo::PseudoLabelConfig defaults;
  if (defaults.keep_proportion != 0.5 || defaults.max_thresh != 0.9) {
    return {false, "defaults are not alpha=0.5, tau=0.9"};
  }
  int mismatched = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double sharp = 1.0 + trial % 7;
    const auto z = oracle::uniform(gen, 5 * 64, -sharp, sharp);
    const ProbMap p{5, 8, 8, oracle::softmax(z, 5)};
    std::vector<std::vector<double>> planes;
    for (int c = 0; c < 5; ++c) planes.emplace_back(p.plane(c).begin(), p.plane(c).end());
    const auto got = pseudo::generate_pseudo_labels(p, defaults);
    const auto want = oracle::pseudo_labels(planes, 0.5, 0.9, kDefaultIgnoreId);
    if (!std::equal(want.begin(), want.end(), got.ids().begin())) ++mismatched;
  }
  return {mismatched == 0, std::to_string(mismatched) + " of 1000 maps differ"};
}

Outcome loss_correctness() {
  std::mt19937_64 gen(303);
  std::vector<std::string> problems;

  // CE at uniform logits
  const int C = 5;
  LabelMap labels(6, 6);
  std::uniform_int_distribution<int> cls(0, C - 1);
  for (auto& id : labels.ids()) id = cls(gen);
  const double ce0 = losses::cross_entropy(Tensor::zeros({5, 6, 6}), labels).item();
  if (std::abs(ce0 - std::log(5.0)) > 1e-9) problems.push_back(fmt("CE(uniform) %.12f", ce0));

  // KL(p||p) = 0, KL >= 0
  double self_kl = 0.0;
  double min_kl = 1.0;
  for (int k = 0; k < 1000; ++k) {
    const Tensor a({5, 2, 3}, oracle::uniform(gen, 30, -4, 4));
    const Tensor b({5, 2, 3}, oracle::uniform(gen, 30, -4, 4));
    self_kl = std::max(self_kl, std::abs(losses::kl_teach(a, a).item()));
    min_kl = std::min(min_kl, losses::kl_teach(a, b).item());
  }
  if (self_kl > 1e-12) problems.push_back(fmt("KL(p||p) %.2e", self_kl));
  if (min_kl < 0.0) problems.push_back(fmt("min KL %.2e", min_kl));

  auto check = [&](const char* what, Tensor param, const std::function<Tensor()>& loss) {
    param.zero_grad();
    autograd::backward(loss());
    const std::vector<double> analytic(param.grad().begin(), param.grad().end());
    const auto numeric = oracle::numeric_grad(param, [&] {
      autograd::NoGradGuard ng;
      return loss().item();
    });
    std::string why;
    if (!oracle::grads_close(analytic, numeric, 1e-3, 1e-7, &why)) {
      problems.push_back(std::string(what) + ": " + why);
    }
  };

  // CE and KL gradients on [5,6,6] logits
  Tensor z({5, 6, 6}, oracle::uniform(gen, 180, -2, 2), true);
  LabelMap partial = labels;
  partial[3] = kDefaultIgnoreId;
  check("CE", z, [&] { return losses::cross_entropy(z, partial); });
  Tensor teacher({5, 6, 6}, oracle::uniform(gen, 180, -2, 2), true);
  check("KL student", z, [&] { return losses::kl_teach(teacher, z); });
  check("KL teacher (symmetric)", teacher,
        [&] { return losses::kl_teach(teacher, z, losses::TeacherGradient::kSymmetric); });

  // conv
  Tensor x({3, 6, 6}, oracle::uniform(gen, 108, -1, 1), true);
  Tensor w({4, 3, 3, 3}, oracle::uniform(gen, 108, -0.5, 0.5), true);
  Tensor bias({4}, oracle::uniform(gen, 4, -0.5, 0.5), true);
  const Tensor proj({4, 6, 6}, oracle::uniform(gen, 144, -1, 1));
  auto conv_loss = [&] { return autograd::sum(autograd::mul(autograd::conv2d(x, w, bias, 1), proj)); };
  check("conv input", x, conv_loss);
  check("conv weight", w, conv_loss);
  check("conv bias", bias, conv_loss);

  // model end to end
  auto model = nn::SegNetMicro::init({4, 5}, 7);
  for (auto& p : model.parameters()) {
    if (p.tensor.rank() == 1) {
      const auto r = oracle::uniform(gen, p.tensor.numel(), -0.1, 0.1);
      std::copy(r.begin(), r.end(), p.tensor.mutable_data().begin());
    }
  }
  const Image img = oracle::random_rgb(gen, 6, 6);
  for (const auto& p : model.parameters()) {
    check(("model " + p.name).c_str(), p.tensor,
          [&] { return losses::cross_entropy(model.forward(img), partial); });
  }

  std::string detail = problems.empty() ? fmt("CE(uniform)-ln5 %.1e, max KL(p||p) %.1e",
                                              ce0 - std::log(5.0), self_kl)
                                        : problems.front();
  return {problems.empty(), detail};
}

Outcome schedule() {
  const train::TrainConfig cfg = train::TrainConfig::full_scale_end_to_end();
  const losses::LossWeights start{cfg.lambda_src_col, cfg.lambda_tgt_seg, 0, cfg.max_its};
  const losses::LossWeights end{cfg.lambda_src_col, cfg.lambda_tgt_seg, cfg.max_its, cfg.max_its};
  const double r0 = losses::ramp_weight(start);
  const double r1 = losses::ramp_weight(end);
  const double lr0 = train::poly_lr(cfg, 0);
  const double lr1 = train::poly_lr(cfg, cfg.max_its);
  const bool ok = r0 == 0.0 && std::abs(r1 - cfg.lambda_tgt_seg) < 1e-15 &&
                  std::abs(lr0 - 2.5e-4) < 1e-18 && lr1 == 0.0;
  return {ok, fmt("ramp %.3g -> %.3g, ", r0, r1) + fmt("lr %.3g -> %.3g", lr0, lr1)};
}

Outcome ensemble() {
  std::mt19937_64 gen(404);
  double err = 0.0;
  bool single_equal = true;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Tensor> maps;
    std::vector<double> mean(5 * 12, 0.0);
    const int n = 1 + trial % 4;
    for (int k = 0; k < n; ++k) {
      const auto v = oracle::uniform(gen, mean.size(), -6, 6);
      for (std::size_t i = 0; i < v.size(); ++i) mean[i] += v[i] / n;
      maps.emplace_back(autograd::Shape{5, 3, 4}, v);
    }
    const auto p = pseudo::ensemble_probability(maps);
    const auto ref = oracle::softmax(mean, 5);
    for (std::size_t i = 0; i < ref.size(); ++i) err = std::max(err, std::abs(p.values[i] - ref[i]));
    if (n == 1) {
      single_equal = single_equal && p.values == pseudo::softmax_probability(maps[0]).values;
    }
  }
  return {err <= 1e-12 && single_equal,
          fmt("max err vs mean-logit softmax %.2e", err) +
              (single_equal ? ", N=1 identical" : ", N=1 differs")};
}

// ---------------------------------------------------------------------------

void ablation(const fs::path& work) {
  auto spec = repro::ExperimentSpec::ablation_grid(2024);
  spec.out_dir = work / "ablation";
  const double start = cpu_seconds();
  const auto wall0 = std::chrono::steady_clock::now();
  const auto rep = repro::run_repro(spec, &std::cerr);
  const double cpu = cpu_seconds() - start;
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  std::cout << rep.to_text();
  std::cout << fmt("ablation grid: %.1f s CPU, %.1f s wall, %.0f iterations per run\n", cpu, wall,
                   static_cast<double>(spec.train.early_stop_it));

  const auto* base = rep.find("union");
  const auto* trans = rep.find("+translation");
  const auto* src = rep.find("+src-collab");
  const auto* full = rep.find("full");
  Outcome c7;
  if (rep.failures() > 0 || !base || !trans || !src || !full) {
    c7 = {false, std::to_string(rep.failures()) + " runs failed"};
  } else {
    const double b = 100 * *base->mean_ensemble();
    const double t = 100 * *trans->mean_ensemble();
    const double s = 100 * *src->mean_ensemble();
    const double f = 100 * *full->mean_ensemble();
    c7.pass = f >= b + 3.0 && t >= b + 1.0 && s >= b + 1.0 && cpu < 600.0 &&
              spec.train.early_stop_it <= 5000;
    c7.detail = fmt("union %.2f, full %+.2f, ", b, f - b) +
                fmt("+translation %+.2f, +src-collab %+.2f, ", t - b, s - b) +
                fmt("%.0f s CPU", cpu);
  }
  report(7, "full >= union + 3 and single components >= union + 1 mIoU over 3 seeds", c7);

  Outcome c8;
  if (!full || full->mean_ensemble() == std::nullopt) {
    c8 = {false, "no full-pipeline results"};
  } else {
    double worst_gap = 1e9;
    for (const auto& sr : full->seeds) {
      if (sr.error) continue;
      const double best = *std::max_element(sr.single_miou.begin(), sr.single_miou.end());
      worst_gap = std::min(worst_gap, 100 * (sr.ensemble_miou - best));
    }
    const double me = 100 * *full->mean_ensemble();
    const double ms = 100 * *full->mean_single();
    c8.pass = worst_gap >= -0.5 && me >= ms && full->seeds.size() == 3;
    c8.detail = fmt("worst ensemble - best single %+.2f, mean ensemble %.2f vs mean single %.2f",
                    worst_gap, me, ms);
  }
  report(8, "ensemble >= best single - 0.5 per seed and >= mean single on average", c8);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism(const fs::path& work) {
  std::vector<fs::path> dirs{work / "repro_a", work / "repro_b"};
  for (const auto& d : dirs) {
    fs::remove_all(d);
    std::ostringstream out, err;
    const int code = cli::run_cli({"coadapt", "repro", "--out", d.string(), "--seed", "11",
                                   "--seeds", "2", "--iterations", "60", "--count", "24",
                                   "--val-count", "12", "--size", "32"},
                                  out, err);
    if (code != 0) return {false, "coadapt repro exited " + std::to_string(code) + ": " + err.str()};
  }
  std::size_t compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(dirs[0])) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dirs[0]);
    if (!fs::exists(dirs[1] / rel)) return {false, "missing " + rel.string()};
    if (slurp(entry.path()) != slurp(dirs[1] / rel)) return {false, rel.string() + " differs"};
    ++compared;
  }
  std::size_t other = 0;
  for (const auto& entry : fs::recursive_directory_iterator(dirs[1])) {
    other += entry.is_regular_file() ? 1 : 0;
  }
  if (other != compared) return {false, "file sets differ"};
  return {compared >= 12, std::to_string(compared) + " files byte-identical"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coadapt acceptance suite"};
  std::string work = (fs::temp_directory_path() / "coadapt_acceptance").string();
  bool skip_grid = false;
  app.add_option("--work-dir", work, "Scratch directory");
  app.add_flag("--skip-grid", skip_grid, "Skip the ablation grid (criteria 7 and 8)");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  report(1, "sRGB/LAB round trip within 1e-6, white and black anchors, < 5 s", color_math());
  report(2, "translated LAB statistics match the target, translate(x,x) = x", translation_contract());
  report(3, "pseudo labels match the reference transcription on 1000 maps", pseudo_label_oracle());
  report(4, "loss values and analytic gradients", loss_correctness());
  report(5, "ramp and learning-rate schedule endpoints", schedule());
  report(6, "ensemble equals mean-logit softmax, N=1 equals single", ensemble());
  if (skip_grid) {
    report(7, "ablation grid", {false, "skipped"});
    report(8, "ensemble vs single", {false, "skipped"});
  } else {
    ablation(work);
  }
  report(9, "two repro runs write byte-identical logs and reports", determinism(work));

  std::cout << (g_failures == 0 ? "all criteria passed" : std::to_string(g_failures) + " failed")
            << std::endl;
  return g_failures == 0 ? 0 : 1;
}
