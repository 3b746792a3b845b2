#include "coadapt/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>

#include "coadapt/colorspace.hpp"
#include "coadapt/png_io.hpp"
#include "coadapt/rng.hpp"

namespace coadapt::data {
namespace {

using Lab = std::array<double, 3>;

// Base scene colors in LAB.
constexpr std::array<Lab, kSceneClassCount> kBaseLab = {{
    {72.0, -4.0, -28.0},   // sky
    {42.0, 2.0, -4.0},     // road
    {56.0, 10.0, 14.0},    // building
    {40.0, 48.0, 28.0},    // vehicle
    {52.0, -36.0, 36.0},   // vegetation
}};

// Per-domain LAB transform: L' = gain_l * L + shift_l, a' = gain_ab * a + shift_a, ...
struct LabTransform {
  double gain_l, shift_l, gain_ab, shift_a, shift_b;
};

constexpr std::array<LabTransform, 3> kStandardTransforms = {{
    {1.00, 6.0, 1.00, 12.0, 16.0},    // source A: bright, warm
    {0.80, 4.0, 0.75, -14.0, -20.0},  // source B: flat, cool
    {0.70, -6.0, 0.60, 10.0, -24.0},  // target: dark, magenta-blue cast
}};

std::array<double, 3> lab_color_to_srgb(const Lab& lab) {
  auto rgb = color::lab_to_srgb_unclamped(lab);
  for (double& v : rgb) {
    v = std::clamp(v, 0.0, 1.0);
  }
  return rgb;
}

DomainPalette make_palette(std::string name, const LabTransform& t) {
  DomainPalette p;
  p.name = std::move(name);
  for (const auto& base : kBaseLab) {
    const Lab lab = {t.gain_l * base[0] + t.shift_l, t.gain_ab * base[1] + t.shift_a,
                     t.gain_ab * base[2] + t.shift_b};
    p.class_colors.push_back(lab_color_to_srgb(lab));
  }
  return p;
}

void fill_rect(LabelMap& labels, int y0, int y1, int x0, int x1, int id) {
  y0 = std::max(y0, 0);
  x0 = std::max(x0, 0);
  y1 = std::min(y1, labels.height());
  x1 = std::min(x1, labels.width());
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      labels.at(y, x) = id;
    }
  }
}

}  // namespace

const std::vector<std::string>& scene_class_names() {
  static const std::vector<std::string> names = {"sky", "road", "building", "vehicle",
                                                 "vegetation"};
  return names;
}

void SynthConfig::validate() const {
  if (height < 16 || width < 16) {
    throw std::invalid_argument("SynthConfig: image size must be at least 16x16");
  }
  if (class_count != kSceneClassCount) {
    throw std::invalid_argument("SynthConfig: the scene generator emits exactly " +
                                std::to_string(kSceneClassCount) + " classes");
  }
  if (palettes.empty()) {
    throw std::invalid_argument("SynthConfig: no palettes");
  }
  for (const auto& p : palettes) {
    if (p.class_colors.size() != static_cast<std::size_t>(class_count)) {
      throw std::invalid_argument("SynthConfig: palette '" + p.name +
                                  "' needs one color per class");
    }
    for (const auto& c : p.class_colors) {
      for (const double v : c) {
        if (!(v >= 0.0 && v <= 1.0)) {
          throw std::invalid_argument("SynthConfig: palette '" + p.name +
                                      "' has a color outside [0,1]");
        }
      }
    }
    if (p.jitter_std < 0.0) {
      throw std::invalid_argument("SynthConfig: negative jitter");
    }
  }
  if (noise_std < 0.0) {
    throw std::invalid_argument("SynthConfig: negative noise_std");
  }
}

LayoutBands layout_bands(const SynthConfig& cfg, int domain_id) {
  LayoutBands bands;
  if (cfg.geometric_jitter) {
    // Alternate domains get a higher or lower horizon.
    const double shift = (domain_id % 2 == 0 ? 1.0 : -1.0) * 0.05;
    bands.sky_min += shift;
    bands.sky_max += shift;
    bands.road_min -= shift;
    bands.road_max -= shift;
  }
  return bands;
}

SynthConfig standard_synth_config(int domains, std::uint64_t layout_seed) {
  if (domains < 1) {
    throw std::invalid_argument("standard_synth_config: need at least one domain");
  }
  SynthConfig cfg;
  cfg.layout_seed = layout_seed;
  const int sources = domains - 1;
  for (int d = 0; d < sources; ++d) {
    LabTransform t;
    if (d < 2) {
      t = kStandardTransforms[static_cast<std::size_t>(d)];
    } else {
      Rng rng(derive_seed(0x5041'4C45'5454'45ULL, static_cast<std::uint64_t>(d)));
      t = {rng.uniform(0.75, 1.0), rng.uniform(-2.0, 10.0), rng.uniform(0.7, 1.0),
           rng.uniform(-16.0, 16.0), rng.uniform(-20.0, 20.0)};
    }
    cfg.palettes.push_back(make_palette("source_" + std::string(1, static_cast<char>('a' + d)), t));
  }
  cfg.palettes.push_back(make_palette("target", kStandardTransforms[2]));
  return cfg;
}

LabelMap generate_layout(const SynthConfig& cfg, int domain_id, int index) {
  const int h = cfg.height;
  const int w = cfg.width;
  const LayoutBands bands = layout_bands(cfg, domain_id);
  Rng rng(derive_seed(cfg.layout_seed, static_cast<std::uint64_t>(index)));

  const int sky_rows = static_cast<int>(std::lround(h * rng.uniform(bands.sky_min, bands.sky_max)));
  const int road_rows =
      static_cast<int>(std::lround(h * rng.uniform(bands.road_min, bands.road_max)));
  const int horizon = sky_rows;
  const int road_top = h - road_rows;
  const int middle = road_top - horizon;

  LabelMap labels(h, w, kVegetation);
  fill_rect(labels, 0, horizon, 0, w, kSky);
  fill_rect(labels, road_top, h, 0, w, kRoad);

  const int buildings = rng.uniform_int(1, 4);
  for (int i = 0; i < buildings; ++i) {
    const int bw = rng.uniform_int(std::max(2, w / 8), std::max(2, w / 3));
    const int x0 = rng.uniform_int(0, w - bw);
    const int bh = std::max(1, static_cast<int>(std::lround(middle * rng.uniform(0.5, 1.0))));
    fill_rect(labels, road_top - bh, road_top, x0, x0 + bw, kBuilding);
  }

  const int patches = rng.uniform_int(0, 2);
  for (int i = 0; i < patches; ++i) {
    const int pw = rng.uniform_int(std::max(2, w / 12), std::max(2, w / 5));
    const int ph = std::max(1, static_cast<int>(std::lround(middle * rng.uniform(0.2, 0.5))));
    const int x0 = rng.uniform_int(0, w - pw);
    fill_rect(labels, road_top - ph, road_top, x0, x0 + pw, kVegetation);
  }

  const int vehicles = rng.uniform_int(0, 3);
  for (int i = 0; i < vehicles; ++i) {
    const int vw = rng.uniform_int(std::max(2, w / 10), std::max(2, w / 5));
    const int vh = std::max(1, static_cast<int>(std::lround(road_rows * rng.uniform(0.25, 0.5))));
    const int x0 = rng.uniform_int(0, w - vw);
    const int y0 = rng.uniform_int(road_top, std::max(road_top, h - vh));
    fill_rect(labels, y0, y0 + vh, x0, x0 + vw, kVehicle);
  }
  return labels;
}

SynthDomain generate_domain(const SynthConfig& cfg, int domain_id, int count,
                            std::uint64_t seed) {
  cfg.validate();
  if (domain_id < 0 || static_cast<std::size_t>(domain_id) >= cfg.palettes.size()) {
    throw std::invalid_argument("generate_domain: no palette for domain " +
                                std::to_string(domain_id));
  }
  const auto& palette = cfg.palettes[static_cast<std::size_t>(domain_id)];
  SynthDomain out;
  out.name = palette.name;
  out.images.reserve(static_cast<std::size_t>(std::max(count, 0)));
  out.labels.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int j = 0; j < count; ++j) {
    LabelMap labels = generate_layout(cfg, domain_id, j);
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(j)));
    std::vector<std::array<double, 3>> colors = palette.class_colors;
    for (auto& c : colors) {
      for (double& v : c) {
        v += rng.normal(0.0, palette.jitter_std);
      }
    }
    Image img(cfg.height, cfg.width, ColorSpace::kSrgbUnit);
    auto px = img.data();
    for (std::size_t p = 0; p < labels.size(); ++p) {
      const auto& c = colors[static_cast<std::size_t>(labels[p])];
      for (int ch = 0; ch < 3; ++ch) {
        px[p * 3 + static_cast<std::size_t>(ch)] =
            std::clamp(c[static_cast<std::size_t>(ch)] + rng.normal(0.0, cfg.noise_std), 0.0, 1.0);
      }
    }
    out.images.push_back(std::move(img));
    out.labels.push_back(std::move(labels));
  }
  return out;
}

BenchmarkDomains generate_benchmark(int domains, int count, int val_count, std::uint64_t seed,
                                    int height, int width) {
  if (domains < 2) {
    throw std::invalid_argument("generate_benchmark: need at least one source and a target");
  }
  if (count < 1 || val_count < 1) {
    throw std::invalid_argument("generate_benchmark: image counts must be positive");
  }
  SynthConfig synth = standard_synth_config(domains, 0);
  synth.height = height;
  synth.width = width;
  synth.validate();
  const int target_id = domains - 1;

  auto split = [&](int palette, const std::string& name, int n) {
    SynthConfig c = synth;
    c.layout_seed = derive_seed(seed, hash_name("layout/" + name));
    SynthDomain d = generate_domain(c, palette, n, derive_seed(seed, hash_name("color/" + name)));
    d.name = name;
    return d;
  };

  BenchmarkDomains out;
  for (int d = 0; d < target_id; ++d) {
    out.sources.push_back(split(d, synth.palettes[static_cast<std::size_t>(d)].name, count));
  }
  out.target_train = split(target_id, "target_train", count);
  out.target_val = split(target_id, "target_val", val_count);
  return out;
}

// ---------------------------------------------------------------------------

Dataset Dataset::from_memory(std::string name, int class_count, std::vector<Image> images,
                             std::vector<LabelMap> labels) {
  if (!labels.empty() && labels.size() != images.size()) {
    throw std::invalid_argument("Dataset: image and label counts differ");
  }
  Dataset ds;
  ds.name_ = std::move(name);
  ds.class_count_ = class_count;
  for (std::size_t i = 0; i < images.size(); ++i) {
    auto sample = std::make_shared<Sample>();
    sample->image = std::move(images[i]);
    if (!labels.empty()) {
      const auto& l = labels[i];
      if (l.height() != sample->image.height() || l.width() != sample->image.width()) {
        throw DataError("Dataset '" + ds.name_ + "': label " + std::to_string(i) +
                        " size differs from its image");
      }
      sample->label = std::move(labels[i]);
    }
    ds.entries_.push_back({std::nullopt, std::nullopt, std::move(sample)});
  }
  return ds;
}

Dataset Dataset::from_synth(const SynthDomain& domain, int class_count) {
  return from_memory(domain.name, class_count, domain.images, domain.labels);
}

Dataset Dataset::load(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) {
    throw DataError("cannot open manifest '" + manifest_path.string() + "'");
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest '" + manifest_path.string() + "' is not valid JSON: " + e.what());
  }
  const fs::path base = manifest_path.parent_path();
  Dataset ds;
  try {
    ds.name_ = doc.at("name").get<std::string>();
    ds.class_count_ = doc.at("class_count").get<int>();
    const auto& images = doc.at("images");
    const auto labels_it = doc.find("labels");
    const bool labeled = labels_it != doc.end() && !labels_it->is_null();
    if (labeled && labels_it->size() != images.size()) {
      throw DataError("manifest '" + manifest_path.string() + "': " +
                      std::to_string(images.size()) + " images but " +
                      std::to_string(labels_it->size()) + " labels");
    }
    for (std::size_t i = 0; i < images.size(); ++i) {
      Entry e;
      e.image_path = base / images[i].get<std::string>();
      if (labeled) {
        e.label_path = base / (*labels_it)[i].get<std::string>();
      }
      ds.entries_.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest '" + manifest_path.string() + "' is malformed: " + e.what());
  }
  if (ds.class_count_ < 1) {
    throw DataError("manifest '" + manifest_path.string() + "': class_count must be >= 1");
  }
  return ds;
}

Dataset Dataset::concat(std::string name, std::span<const Dataset> parts) {
  Dataset ds;
  ds.name_ = std::move(name);
  for (const auto& part : parts) {
    if (ds.class_count_ == 0) {
      ds.class_count_ = part.class_count_;
    } else if (part.class_count_ != ds.class_count_) {
      throw std::invalid_argument("Dataset::concat: class counts differ");
    }
    ds.entries_.insert(ds.entries_.end(), part.entries_.begin(), part.entries_.end());
  }
  return ds;
}

bool Dataset::has_labels() const {
  if (entries_.empty()) {
    return false;
  }
  return std::all_of(entries_.begin(), entries_.end(), [](const Entry& e) {
    return e.label_path.has_value() || (e.sample && e.sample->label.has_value());
  });
}

const Sample& Dataset::get(std::size_t i) const {
  const Entry& e = entries_.at(i);
  if (e.sample) {
    return *e.sample;
  }
  auto sample = std::make_shared<Sample>();
  try {
    sample->image = io::read_rgb_png(*e.image_path);
  } catch (const io::IoError& err) {
    throw DataError(err.what());
  }
  if (e.label_path) {
    LabelMap label;
    try {
      label = io::read_label_png(*e.label_path);
    } catch (const io::IoError& err) {
      throw DataError(err.what());
    }
    if (label.height() != sample->image.height() || label.width() != sample->image.width()) {
      throw DataError("label '" + e.label_path->string() + "' is " +
                      std::to_string(label.height()) + "x" + std::to_string(label.width()) +
                      " but image '" + e.image_path->string() + "' is " +
                      std::to_string(sample->image.height()) + "x" +
                      std::to_string(sample->image.width()));
    }
    for (const int id : label.ids()) {
      if (id != kDefaultIgnoreId && (id < 0 || id >= class_count_)) {
        throw DataError("label '" + e.label_path->string() + "' contains id " +
                        std::to_string(id) + " >= class_count " + std::to_string(class_count_));
      }
    }
    sample->label = std::move(label);
  }
  e.sample = std::move(sample);
  return *e.sample;
}

Dataset Dataset::without_labels() const {
  Dataset ds;
  ds.name_ = name_;
  ds.class_count_ = class_count_;
  for (const auto& e : entries_) {
    Entry copy;
    copy.image_path = e.image_path;
    if (e.sample) {
      auto s = std::make_shared<Sample>();
      s->image = e.sample->image;
      copy.sample = std::move(s);
    }
    ds.entries_.push_back(std::move(copy));
  }
  return ds;
}

std::vector<std::size_t> Dataset::shuffled_order(std::uint64_t seed) const {
  std::vector<std::size_t> order(entries_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  return order;
}

void Dataset::validate_all() const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    (void)get(i);
  }
}

fs::path write_dataset(const fs::path& dir, const SynthDomain& domain, int class_count,
                       bool with_labels) {
  fs::create_directories(dir / "images");
  if (with_labels) {
    fs::create_directories(dir / "labels");
  }
  nlohmann::json doc;
  doc["name"] = domain.name;
  doc["class_count"] = class_count;
  doc["images"] = nlohmann::json::array();
  doc["labels"] = with_labels ? nlohmann::json::array() : nlohmann::json(nullptr);
  for (std::size_t i = 0; i < domain.images.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "%05zu.png", i);
    const std::string image_rel = std::string("images/") + stem;
    io::write_rgb_png(dir / image_rel, domain.images[i]);
    doc["images"].push_back(image_rel);
    if (with_labels) {
      const std::string label_rel = std::string("labels/") + stem;
      io::write_label_png(dir / label_rel, domain.labels[i]);
      doc["labels"].push_back(label_rel);
    }
  }
  const fs::path manifest = dir / "manifest.json";
  std::ofstream(manifest) << doc.dump(2) << "\n";
  return manifest;
}

}  // namespace coadapt::data
