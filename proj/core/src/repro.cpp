#include "coadapt/repro.hpp"

#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <set>
#include <stdexcept>

#include "coadapt/eval.hpp"
#include "coadapt/rng.hpp"

namespace coadapt::repro {

using nlohmann::json;

Benchmark make_benchmark(const BenchmarkConfig& cfg, std::uint64_t seed) {
  const auto domains = data::generate_benchmark(3, cfg.images_per_domain, cfg.val_images, seed,
                                                cfg.height, cfg.width);
  const int classes = data::kSceneClassCount;
  Benchmark b;
  for (const auto& d : domains.sources) {
    b.sources.push_back(data::Dataset::from_synth(d, classes));
  }
  b.target_train = data::Dataset::from_synth(domains.target_train, classes).without_labels();
  b.target_val = data::Dataset::from_synth(domains.target_val, classes);
  return b;
}

void ExperimentSpec::validate() const {
  if (configs.empty()) {
    throw std::invalid_argument("ExperimentSpec: no configurations");
  }
  std::set<std::string> names;
  for (const auto& c : configs) {
    if (c.name.empty()) {
      throw std::invalid_argument("ExperimentSpec: configuration with empty name");
    }
    if (!names.insert(c.name).second) {
      throw std::invalid_argument("ExperimentSpec: duplicate configuration '" + c.name + "'");
    }
  }
  if (seed_count < 1) {
    throw std::invalid_argument("ExperimentSpec: seed_count must be >= 1");
  }
  train.validate();
}

train::TrainConfig ExperimentSpec::desk_schedule() {
  train::TrainConfig cfg;
  cfg.lr0 = 2e-2;
  cfg.max_its = 1200;
  cfg.early_stop_it = 1200;
  cfg.lambda_src_col = 0.5;
  cfg.lambda_tgt_seg = 0.1;
  return cfg;
}

ExperimentSpec ExperimentSpec::ablation_grid(std::uint64_t seed) {
  ExperimentSpec spec;
  spec.seed = seed;
  spec.train = desk_schedule();
  using train::BranchFlags;
  spec.configs = {
      {"union", BranchFlags{false, false, false}, true},
      {"+translation", BranchFlags{true, false, false}, true},
      {"+src-collab", BranchFlags{false, true, false}, false},
      {"+tgt-collab", BranchFlags{false, false, true}, false},
      {"full", BranchFlags{true, true, true}, false},
  };
  return spec;
}

namespace {

std::optional<double> mean_of(const std::vector<SeedResult>& seeds, bool ensemble) {
  double sum = 0.0;
  int n = 0;
  for (const auto& s : seeds) {
    if (s.error) continue;
    if (ensemble) {
      sum += s.ensemble_miou;
    } else {
      double m = 0.0;
      for (double v : s.single_miou) m += v;
      sum += m / static_cast<double>(s.single_miou.size());
    }
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

std::string flags_string(const AblationConfig& c) {
  std::string out;
  auto mark = [&](bool on) { out += on ? "  x   " : "  .   "; };
  mark(c.branches.use_translation);
  mark(c.union_sources);
  mark(c.branches.use_src_col);
  mark(c.branches.use_tgt_col);
  return out;
}

}  // namespace

std::optional<double> ReproRow::mean_ensemble() const { return mean_of(seeds, true); }
std::optional<double> ReproRow::mean_single() const { return mean_of(seeds, false); }

const ReproRow* ReproReport::find(const std::string& name) const {
  for (const auto& r : rows) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

std::size_t ReproReport::failures() const {
  std::size_t n = 0;
  for (const auto& r : rows) {
    for (const auto& s : r.seeds) n += s.error ? 1 : 0;
  }
  return n;
}

json ReproReport::to_json() const {
  json rows_json = json::array();
  for (const auto& r : rows) {
    json seeds_json = json::array();
    for (const auto& s : r.seeds) {
      json sj{{"seed", s.seed}};
      if (s.error) {
        sj["error"] = *s.error;
      } else {
        sj["ensemble_miou"] = s.ensemble_miou;
        sj["single_miou"] = s.single_miou;
      }
      seeds_json.push_back(std::move(sj));
    }
    const auto me = r.mean_ensemble();
    const auto ms = r.mean_single();
    rows_json.push_back({{"name", r.name},
                         {"translation", r.config.branches.use_translation},
                         {"data_combination", r.config.union_sources},
                         {"src_collab", r.config.branches.use_src_col},
                         {"tgt_collab", r.config.branches.use_tgt_col},
                         {"mean_ensemble_miou", me ? json(*me) : json(nullptr)},
                         {"mean_single_miou", ms ? json(*ms) : json(nullptr)},
                         {"seeds", std::move(seeds_json)}});
  }
  return json{{"seed", seed}, {"rows", std::move(rows_json)}};
}

std::string ReproReport::to_text() const {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-14s %-6s%-6s%-6s%-6s %9s %9s %s\n", "config", "trans",
                "comb", "srcCL", "tgtCL", "ensemble", "single", "per-seed ensemble");
  out += line;
  for (const auto& r : rows) {
    const auto me = r.mean_ensemble();
    const auto ms = r.mean_single();
    char me_s[32] = "failed";
    char ms_s[32] = "failed";
    if (me) std::snprintf(me_s, sizeof me_s, "%.2f", 100.0 * *me);
    if (ms) std::snprintf(ms_s, sizeof ms_s, "%.2f", 100.0 * *ms);
    std::string per_seed;
    for (const auto& s : r.seeds) {
      char buf[32];
      if (s.error) {
        std::snprintf(buf, sizeof buf, " err");
      } else {
        std::snprintf(buf, sizeof buf, " %.2f", 100.0 * s.ensemble_miou);
      }
      per_seed += buf;
    }
    std::snprintf(line, sizeof line, "%-14s %s %9s %9s%s\n", r.name.c_str(),
                  flags_string(r.config).c_str(), me_s, ms_s, per_seed.c_str());
    out += line;
  }
  return out;
}

std::uint64_t run_seed(std::uint64_t experiment_seed, int k) {
  return derive_seed(experiment_seed, hash_name("run/" + std::to_string(k)));
}

ReproReport run_repro(const ExperimentSpec& spec, std::ostream* progress) {
  spec.validate();
  const Benchmark bench = make_benchmark(spec.benchmark, spec.seed);
  const int ignore_id = spec.train.pseudo.ignore_id;

  ReproReport report;
  report.seed = spec.seed;
  for (const auto& config : spec.configs) {
    ReproRow row{config.name, config, {}};
    for (int k = 0; k < spec.seed_count; ++k) {
      SeedResult result;
      result.seed = run_seed(spec.seed, k);
      try {
        train::TrainConfig cfg = spec.train;
        cfg.branches = config.branches;
        cfg.union_sources = config.union_sources;
        cfg.seed = result.seed;

        std::ofstream metrics;
        train::TrainOptions options;
        if (!spec.out_dir.empty()) {
          const auto path =
              spec.out_dir / "runs" / config.name / ("seed_" + std::to_string(k) + ".ndjson");
          std::filesystem::create_directories(path.parent_path());
          metrics.open(path, std::ios::binary);
          if (!metrics) {
            throw std::runtime_error("cannot write " + path.string());
          }
          options.metrics = &metrics;
        }
        const auto trained =
            train::train_collaborative(bench.sources, &bench.target_train, cfg, options);
        result.ensemble_miou =
            eval::miou(eval::evaluate(trained.models, bench.target_val,
                                      eval::InferMode::ensemble(), ignore_id))
                .mean.value_or(0.0);
        for (std::size_t i = 0; i < trained.models.size(); ++i) {
          result.single_miou.push_back(
              eval::miou(eval::evaluate(trained.models, bench.target_val,
                                        eval::InferMode::single(i), ignore_id))
                  .mean.value_or(0.0));
        }
      } catch (const std::exception& e) {
        result.error = e.what();
      }
      if (progress) {
        if (result.error) {
          *progress << config.name << " seed " << k << ": failed: " << *result.error << "\n";
        } else {
          char buf[64];
          std::snprintf(buf, sizeof buf, "%.2f", 100.0 * result.ensemble_miou);
          *progress << config.name << " seed " << k << ": ensemble mIoU " << buf << "\n";
        }
      }
      row.seeds.push_back(std::move(result));
    }
    report.rows.push_back(std::move(row));
  }

  if (!spec.out_dir.empty()) {
    std::filesystem::create_directories(spec.out_dir);
    std::ofstream(spec.out_dir / "report.json", std::ios::binary)
        << report.to_json().dump(2) << "\n";
    std::ofstream(spec.out_dir / "report.txt", std::ios::binary) << report.to_text();
  }
  return report;
}

}  // namespace coadapt::repro
