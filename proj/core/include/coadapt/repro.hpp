#pragma once

// Ablation grid on the synthetic two-source benchmark.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "coadapt/data.hpp"
#include "coadapt/training.hpp"

namespace coadapt::repro {

struct AblationConfig {
  std::string name;
  train::BranchFlags branches;
  bool union_sources = false;
};

struct BenchmarkConfig {
  int images_per_domain = 200;
  int val_images = 100;
  int height = 64;
  int width = 64;
};

/// Two labeled sources, an unlabeled target training split and a labeled
/// target validation split with its own layouts.
struct Benchmark {
  std::vector<data::Dataset> sources;
  data::Dataset target_train;
  data::Dataset target_val;
};

Benchmark make_benchmark(const BenchmarkConfig& cfg, std::uint64_t seed);

struct ExperimentSpec {
  std::vector<AblationConfig> configs;
  std::uint64_t seed = 0;
  int seed_count = 3;
  /// Metric logs and reports land here; empty keeps everything in memory.
  std::filesystem::path out_dir;
  BenchmarkConfig benchmark;
  /// Shared schedule; branches, union_sources and seed are overridden per run.
  train::TrainConfig train;

  /// Configuration names must be unique and non-empty.
  void validate() const;

  /// union, +translation, +src-collab, +tgt-collab, full.
  static ExperimentSpec ablation_grid(std::uint64_t seed);
  /// Iteration budget and step size used by the grid at 64x64.
  static train::TrainConfig desk_schedule();
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::optional<std::string> error;
  double ensemble_miou = 0.0;
  std::vector<double> single_miou;  // one per model
};

struct ReproRow {
  std::string name;
  AblationConfig config;
  std::vector<SeedResult> seeds;

  /// Means over the seeds that succeeded; nullopt when none did.
  std::optional<double> mean_ensemble() const;
  std::optional<double> mean_single() const;
};

struct ReproReport {
  std::uint64_t seed = 0;
  std::vector<ReproRow> rows;

  const ReproRow* find(const std::string& name) const;
  std::size_t failures() const;
  nlohmann::json to_json() const;
  std::string to_text() const;
};

std::uint64_t run_seed(std::uint64_t experiment_seed, int k);

/// Runs every configuration for every seed, serially. A run that throws is
/// recorded with its message and the grid continues. When out_dir is set,
/// writes runs/<config>/seed_<k>.ndjson, report.json and report.txt.
ReproReport run_repro(const ExperimentSpec& spec, std::ostream* progress = nullptr);

}  // namespace coadapt::repro
