#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

#include "coadapt/colorspace.hpp"
#include "coadapt/data.hpp"
#include "coadapt/eval.hpp"
#include "coadapt/model.hpp"
#include "coadapt/png_io.hpp"
#include "coadapt/pseudolabel.hpp"
#include "coadapt/repro.hpp"
#include "coadapt/training.hpp"

#ifndef COADAPT_VERSION
#define COADAPT_VERSION "0.0.0"
#endif

namespace coadapt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  // shared
  std::uint64_t seed = 0;
  fs::path out;
  fs::path checkpoints;
  fs::path dataset;
  std::string mode = "ensemble";

  // make-synth
  int domains = 3;
  int count = 200;
  int val_count = 100;
  int size = 64;

  // translate
  fs::path source_list;
  fs::path target_list;

  // train
  fs::path config;
  std::vector<fs::path> sources;
  fs::path target;

  // pseudo-label
  double keep_proportion = 0.5;
  double max_thresh = 0.9;
  bool visualize = false;

  // eval
  fs::path json_out;

  // repro
  int seeds = 3;
  std::int64_t iterations = 0;
  std::vector<std::string> configs;
};

const CLI::Validator kModeCheck(
    [](std::string& text) -> std::string {
      try {
        eval::InferMode::parse(text);
      } catch (const std::invalid_argument& e) {
        return e.what();
      }
      return {};
    },
    "ensemble|single:<i>");

const CLI::Validator kOpenUnit(
    [](std::string& text) -> std::string {
      double v = 0.0;
      if (!CLI::detail::lexical_cast(text, v) || !(v > 0.0 && v <= 1.0)) {
        return "value must be in (0, 1], got " + text;
      }
      return {};
    },
    "(0,1]");

std::string item_stem(const data::Dataset& ds, std::size_t i) {
  if (const auto& p = ds.image_path(i)) {
    return p->stem().string();
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu", i);
  return buf;
}

void write_json_file(const fs::path& path, const json& doc) {
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) {
    throw std::runtime_error("cannot write " + path.string());
  }
  f << doc.dump(2) << "\n";
}

int cmd_make_synth(const Options& o, std::ostream& out) {
  const auto bench =
      data::generate_benchmark(o.domains, o.count, o.val_count, o.seed, o.size, o.size);
  const int classes = data::kSceneClassCount;
  for (const auto& d : bench.sources) {
    out << data::write_dataset(o.out / d.name, d, classes, true).string() << "\n";
  }
  out << data::write_dataset(o.out / "target_train", bench.target_train, classes, false).string()
      << "\n";
  out << data::write_dataset(o.out / "target_val", bench.target_val, classes, true).string()
      << "\n";
  return kExitOk;
}

int cmd_translate(const Options& o, std::ostream& out, std::ostream& err) {
  const auto report = color::translate_dataset(o.source_list, o.target_list, o.out, o.seed);
  for (const auto& item : report.items) {
    if (item.error) {
      err << "failed: " << item.source.string() << ": " << *item.error << "\n";
    } else {
      out << item.source.string() << " -> " << item.output.string() << " (style "
          << item.target.string() << ")\n";
    }
  }
  out << report.items.size() - report.failures() << " translated, " << report.failures()
      << " failed\n";
  return report.failures() == 0 ? kExitOk : kExitRuntime;
}

int cmd_train(const Options& o, const CLI::App& sub, std::ostream& out) {
  std::ifstream f(o.config);
  if (!f) {
    throw std::runtime_error("cannot read config " + o.config.string());
  }
  train::TrainConfig cfg = json::parse(f).get<train::TrainConfig>();
  if (sub.count("--seed") > 0) {
    cfg.seed = o.seed;
  }
  cfg.validate();

  std::vector<data::Dataset> sources;
  for (const auto& p : o.sources) {
    sources.push_back(data::load_dataset(p));
  }
  std::optional<data::Dataset> target;
  if (!o.target.empty()) {
    target = data::load_dataset(o.target).without_labels();
  }

  fs::create_directories(o.out);
  write_json_file(o.out / "config.json", json(cfg));
  std::ofstream metrics(o.out / "metrics.ndjson", std::ios::binary);
  train::TrainOptions options;
  options.metrics = &metrics;
  options.checkpoint_dir = o.out;
  const auto result =
      train::train_collaborative(sources, target ? &*target : nullptr, cfg, options);
  out << "trained " << result.models.size() << " model(s) for " << result.log.size()
      << " iterations; checkpoints in " << (o.out / "final").string() << "\n";
  return kExitOk;
}

int cmd_pseudo_label(const Options& o, std::ostream& out) {
  const auto models = nn::ModelSet::load(o.checkpoints);
  const auto ds = data::load_dataset(o.dataset);
  pseudo::PseudoLabelConfig cfg;
  cfg.keep_proportion = o.keep_proportion;
  cfg.max_thresh = o.max_thresh;
  cfg.validate();

  std::size_t ignored = 0;
  std::size_t total = 0;
  json manifest{{"name", ds.name() + "_pseudo"},
                {"class_count", ds.class_count()},
                {"images", json::array()},
                {"labels", json::array()}};
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Image& img = ds.get(i).image;
    const auto labels = pseudo::refresh_pseudo_labels(models, std::span(&img, 1), cfg).front();
    const std::string stem = item_stem(ds, i);
    io::write_label_png(o.out / "labels" / (stem + ".png"), labels);
    if (o.visualize) {
      io::write_label_visualization(o.out / "vis" / (stem + ".png"), labels, cfg.ignore_id);
    }
    ignored += labels.count(cfg.ignore_id);
    total += labels.size();
    if (const auto& p = ds.image_path(i)) {
      manifest["images"].push_back(fs::absolute(*p).lexically_normal().string());
    } else {
      const std::string rel = "images/" + stem + ".png";
      io::write_rgb_png(o.out / rel, img);
      manifest["images"].push_back(rel);
    }
    manifest["labels"].push_back("labels/" + stem + ".png");
  }
  write_json_file(o.out / "manifest.json", manifest);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", total ? 100.0 * static_cast<double>(ignored) / total : 0.0);
  out << ds.size() << " pseudo-label maps written; " << buf << "% of pixels ignored\n";
  return kExitOk;
}

int cmd_infer(const Options& o, std::ostream& out) {
  const auto models = nn::ModelSet::load(o.checkpoints);
  const auto ds = data::load_dataset(o.dataset);
  const auto mode = eval::InferMode::parse(o.mode);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto pred = eval::infer(models, ds.get(i).image, mode);
    const std::string stem = item_stem(ds, i);
    io::write_label_png(o.out / "pred" / (stem + ".png"), pred);
    io::write_label_visualization(o.out / "vis" / (stem + ".png"), pred);
  }
  out << ds.size() << " predictions written to " << o.out.string() << "\n";
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const auto models = nn::ModelSet::load(o.checkpoints);
  const auto ds = data::load_dataset(o.dataset);
  const auto mode = eval::InferMode::parse(o.mode);
  const auto report = eval::miou(eval::evaluate(models, ds, mode));

  std::vector<std::string> names = data::scene_class_names();
  names.resize(static_cast<std::size_t>(ds.class_count()));
  for (int c = data::kSceneClassCount; c < ds.class_count(); ++c) {
    names[static_cast<std::size_t>(c)] = "class_" + std::to_string(c);
  }
  json per_class = json::object();
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    per_class[names[c]] = report.per_class[c] ? json(*report.per_class[c]) : json(nullptr);
  }
  const json doc{{"dataset", ds.name()},
                 {"mode", mode.to_string()},
                 {"per_class_iou", per_class},
                 {"miou", report.mean ? json(*report.mean) : json(nullptr)}};

  out << eval::format_iou_table(report, names);
  if (o.json_out.empty()) {
    out << doc.dump() << "\n";
  } else {
    write_json_file(o.json_out, doc);
  }
  return kExitOk;
}

int cmd_repro(const Options& o, std::ostream& out, std::ostream& err) {
  auto spec = repro::ExperimentSpec::ablation_grid(o.seed);
  spec.out_dir = o.out;
  spec.seed_count = o.seeds;
  spec.benchmark.images_per_domain = o.count;
  spec.benchmark.val_images = o.val_count;
  spec.benchmark.height = spec.benchmark.width = o.size;
  if (o.iterations > 0) {
    spec.train.max_its = o.iterations;
    spec.train.early_stop_it = o.iterations;
  }
  if (!o.configs.empty()) {
    std::vector<repro::AblationConfig> picked;
    for (const auto& name : o.configs) {
      const auto it = std::find_if(spec.configs.begin(), spec.configs.end(),
                                   [&](const auto& c) { return c.name == name; });
      if (it == spec.configs.end()) {
        throw CLI::ValidationError("--configs", "unknown configuration '" + name + "'");
      }
      picked.push_back(*it);
    }
    spec.configs = std::move(picked);
  }
  const auto report = repro::run_repro(spec, &err);
  out << report.to_text();
  return report.failures() == 0 ? kExitOk : kExitRuntime;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-source domain adaptation for semantic segmentation", "coadapt"};
  app.set_version_flag("--version", COADAPT_VERSION);
  app.require_subcommand(1);

  Options o;
  auto version = [](CLI::App* sub) { sub->set_version_flag("--version", COADAPT_VERSION); };

  auto* make_synth = app.add_subcommand("make-synth", "Write the synthetic multi-domain benchmark");
  version(make_synth);
  make_synth->add_option("--out", o.out, "Output directory")->required();
  make_synth->add_option("--domains", o.domains, "Sources plus one target")
      ->check(CLI::Range(2, 26));
  make_synth->add_option("--count", o.count, "Images per source and target split")
      ->check(CLI::PositiveNumber);
  make_synth->add_option("--val-count", o.val_count, "Labeled target validation images")
      ->check(CLI::PositiveNumber);
  make_synth->add_option("--size", o.size, "Image height and width")->check(CLI::Range(16, 1024));
  make_synth->add_option("--seed", o.seed, "Random seed");

  auto* translate = app.add_subcommand("translate", "LAB color translation of a source list");
  version(translate);
  translate->add_option("--source-list", o.source_list, "Newline-separated source images")
      ->required()
      ->check(CLI::ExistingFile);
  translate->add_option("--target-list", o.target_list, "Newline-separated target images")
      ->required()
      ->check(CLI::ExistingFile);
  translate->add_option("--out", o.out, "Output directory")->required();
  translate->add_option("--seed", o.seed, "Random seed for target pairing");

  auto* train_cmd = app.add_subcommand("train", "Collaborative training from a JSON config");
  version(train_cmd);
  train_cmd->add_option("--config", o.config, "TrainConfig JSON")
      ->required()
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--source", o.sources, "Source dataset manifest (repeatable)")
      ->required()
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--target", o.target, "Target dataset manifest")->check(CLI::ExistingFile);
  train_cmd->add_option("--out", o.out, "Run directory")->required();
  train_cmd->add_option("--seed", o.seed, "Overrides the config seed");

  auto* pseudo_cmd = app.add_subcommand("pseudo-label", "Ensemble pseudo labels for a dataset");
  version(pseudo_cmd);
  pseudo_cmd->add_option("--checkpoints", o.checkpoints, "Model set directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  pseudo_cmd->add_option("--dataset", o.dataset, "Dataset manifest")
      ->required()
      ->check(CLI::ExistingFile);
  pseudo_cmd->add_option("--out", o.out, "Output directory")->required();
  pseudo_cmd->add_option("--keep-proportion", o.keep_proportion, "Per-class keep proportion")
      ->check(kOpenUnit);
  pseudo_cmd->add_option("--max-thresh", o.max_thresh, "Upper bound of the class threshold")
      ->check(kOpenUnit);
  pseudo_cmd->add_flag("--visualize", o.visualize, "Also write color-coded label images");

  auto* infer_cmd = app.add_subcommand("infer", "Predict label maps");
  version(infer_cmd);
  infer_cmd->add_option("--checkpoints", o.checkpoints, "Model set directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  infer_cmd->add_option("--dataset", o.dataset, "Dataset manifest")
      ->required()
      ->check(CLI::ExistingFile);
  infer_cmd->add_option("--out", o.out, "Output directory")->required();
  infer_cmd->add_option("--mode", o.mode, "ensemble or single:<i>")->check(kModeCheck);

  auto* eval_cmd = app.add_subcommand("eval", "Per-class IoU and mIoU on a labeled dataset");
  version(eval_cmd);
  eval_cmd->add_option("--checkpoints", o.checkpoints, "Model set directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--dataset", o.dataset, "Dataset manifest")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--mode", o.mode, "ensemble or single:<i>")->check(kModeCheck);
  eval_cmd->add_option("--json", o.json_out, "Write the JSON report here instead of stdout");

  auto* repro_cmd = app.add_subcommand("repro", "Ablation grid on the synthetic benchmark");
  version(repro_cmd);
  repro_cmd->add_option("--out", o.out, "Output directory")->required();
  repro_cmd->add_option("--seed", o.seed, "Experiment seed");
  repro_cmd->add_option("--seeds", o.seeds, "Training seeds per configuration")
      ->check(CLI::PositiveNumber);
  repro_cmd->add_option("--iterations", o.iterations, "Override the iteration budget")
      ->check(CLI::PositiveNumber);
  repro_cmd->add_option("--count", o.count, "Images per source and target split")
      ->check(CLI::PositiveNumber);
  repro_cmd->add_option("--val-count", o.val_count, "Labeled target validation images")
      ->check(CLI::PositiveNumber);
  repro_cmd->add_option("--size", o.size, "Image height and width")->check(CLI::Range(16, 1024));
  repro_cmd->add_option("--configs", o.configs, "Subset of configurations")->delimiter(',');

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (make_synth->parsed()) return cmd_make_synth(o, out);
    if (translate->parsed()) return cmd_translate(o, out, err);
    if (train_cmd->parsed()) return cmd_train(o, *train_cmd, out);
    if (pseudo_cmd->parsed()) return cmd_pseudo_label(o, out);
    if (infer_cmd->parsed()) return cmd_infer(o, out);
    if (eval_cmd->parsed()) return cmd_eval(o, out);
    if (repro_cmd->parsed()) return cmd_repro(o, out, err);
  } catch (const CLI::ValidationError& e) {
    err << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace coadapt::cli
