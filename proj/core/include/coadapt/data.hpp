#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "coadapt/image.hpp"

namespace coadapt::data {

namespace fs = std::filesystem;

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Procedural street scenes.

enum SceneClass : int { kSky = 0, kRoad = 1, kBuilding = 2, kVehicle = 3, kVegetation = 4 };
inline constexpr int kSceneClassCount = 5;

const std::vector<std::string>& scene_class_names();

struct DomainPalette {
  std::string name;
  std::vector<std::array<double, 3>> class_colors;  // sRGB, one per class
  double jitter_std = 0.03;  // per-image, per-class color jitter
};

struct SynthConfig {
  int height = 64;
  int width = 64;
  int class_count = kSceneClassCount;
  std::vector<DomainPalette> palettes;
  std::uint64_t layout_seed = 0;
  double noise_std = 0.04;       // per-pixel Gaussian noise
  bool geometric_jitter = false;  // domain-dependent band proportions

  void validate() const;
};

/// Band proportions of the scene layout. Sky occupies the top
/// U[sky_min, sky_max] of the rows, road the bottom U[road_min, road_max];
/// buildings and vegetation fill the band in between, vehicles sit on the
/// road.
struct LayoutBands {
  double sky_min = 0.20, sky_max = 0.40;
  double road_min = 0.25, road_max = 0.45;
};
LayoutBands layout_bands(const SynthConfig& cfg, int domain_id);

/// Palettes for `domains` domains: the first domains-1 are sources, the last
/// is the target. Each palette is a fixed affine transform of a base scene
/// palette in LAB space; the target transform differs from every source.
SynthConfig standard_synth_config(int domains, std::uint64_t layout_seed);

struct SynthDomain {
  std::string name;
  std::vector<Image> images;
  std::vector<LabelMap> labels;
};

/// `count` scenes for palette `domain_id`. Layout of scene j is drawn from
/// derive_seed(cfg.layout_seed, j), so domains sharing a layout seed share
/// label maps; colors and noise come from `seed`.
SynthDomain generate_domain(const SynthConfig& cfg, int domain_id, int count,
                            std::uint64_t seed);

/// Label map of scene `index` alone (what generate_domain would emit).
LabelMap generate_layout(const SynthConfig& cfg, int domain_id, int index);

/// Multi-source benchmark: domains-1 labeled sources, `count` target
/// training scenes and `val_count` target validation scenes. Every split
/// draws its own layouts and colors from `seed` and its name.
struct BenchmarkDomains {
  std::vector<SynthDomain> sources;
  SynthDomain target_train;
  SynthDomain target_val;
};
BenchmarkDomains generate_benchmark(int domains, int count, int val_count, std::uint64_t seed,
                                    int height = 64, int width = 64);

// ---------------------------------------------------------------------------
// Datasets.

struct Sample {
  Image image;
  std::optional<LabelMap> label;
};

/// A list of images with optional labels, backed by files (loaded lazily
/// and validated on first access) or by memory. Copies share loaded samples.
/// Not thread-safe.
class Dataset {
 public:
  Dataset() = default;

  static Dataset from_memory(std::string name, int class_count, std::vector<Image> images,
                             std::vector<LabelMap> labels = {});
  static Dataset from_synth(const SynthDomain& domain, int class_count);
  /// Reads a JSON manifest {name, class_count, images: [...], labels: [...] | null}
  /// with paths relative to the manifest's directory.
  static Dataset load(const fs::path& manifest_path);
  /// Union of several datasets, in order.
  static Dataset concat(std::string name, std::span<const Dataset> parts);

  const std::string& name() const { return name_; }
  int class_count() const { return class_count_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  bool has_labels() const;

  /// Throws DataError naming the offending file on missing files, size
  /// mismatch between image and label, or label ids >= class_count other
  /// than the ignore id.
  const Sample& get(std::size_t i) const;
  const std::optional<fs::path>& image_path(std::size_t i) const { return entries_[i].image_path; }

  /// Same images with labels dropped.
  Dataset without_labels() const;
  /// Permutation of [0, size) from Rng(seed).
  std::vector<std::size_t> shuffled_order(std::uint64_t seed) const;
  /// Forces loading and validation of every sample.
  void validate_all() const;

 private:
  struct Entry {
    std::optional<fs::path> image_path;
    std::optional<fs::path> label_path;
    mutable std::shared_ptr<const Sample> sample;
  };

  std::string name_;
  int class_count_ = 0;
  std::vector<Entry> entries_;
};

inline Dataset load_dataset(const fs::path& manifest_path) { return Dataset::load(manifest_path); }

/// Writes images/NNNN.png, labels/NNNN.png and manifest.json under `dir`.
/// Returns the manifest path.
fs::path write_dataset(const fs::path& dir, const SynthDomain& domain, int class_count,
                       bool with_labels = true);

}  // namespace coadapt::data
