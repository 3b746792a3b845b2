#include <fstream>
#include <stdexcept>

#include "coadapt/colorspace.hpp"
#include "coadapt/png_io.hpp"
#include "coadapt/rng.hpp"

namespace coadapt::color {

namespace fs = std::filesystem;

std::vector<fs::path> read_image_list(const fs::path& list_file) {
  std::ifstream in(list_file);
  if (!in) {
    throw io::IoError("cannot open image list '" + list_file.string() + "'");
  }
  const fs::path base = list_file.parent_path();
  std::vector<fs::path> paths;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
      line.pop_back();
    }
    if (line.empty() || line.front() == '#') {
      continue;
    }
    fs::path p(line);
    paths.push_back(p.is_absolute() ? p : base / p);
  }
  return paths;
}

std::size_t pick_target(std::uint64_t seed, std::size_t source_index,
                        std::size_t target_count) {
  Rng rng(derive_seed(seed, source_index));
  return static_cast<std::size_t>(rng.uniform_index(target_count));
}

std::size_t TranslationReport::failures() const {
  std::size_t n = 0;
  for (const auto& item : items) {
    n += item.error.has_value() ? 1 : 0;
  }
  return n;
}

TranslationReport translate_dataset(const fs::path& source_list, const fs::path& target_list,
                                    const fs::path& out_dir, std::uint64_t seed) {
  const auto sources = read_image_list(source_list);
  const auto targets = read_image_list(target_list);
  if (sources.empty() || targets.empty()) {
    throw std::invalid_argument("translate_dataset: source and target lists must be non-empty");
  }
  const fs::path source_base = source_list.parent_path();

  TranslationReport report;
  report.items.reserve(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i) {
    TranslationItem item;
    item.source = sources[i];
    item.target = targets[pick_target(seed, i, targets.size())];
    fs::path rel = sources[i].lexically_relative(source_base);
    if (rel.empty() || *rel.begin() == "..") {
      rel = sources[i].filename();
    }
    item.output = out_dir / rel;
    item.output.replace_extension(".png");
    try {
      const Image src = io::read_rgb_png(item.source);
      const Image tgt = io::read_rgb_png(item.target);
      io::write_rgb_png(item.output, translate(src, tgt));
    } catch (const std::exception& e) {
      item.error = e.what();
    }
    report.items.push_back(std::move(item));
  }
  return report;
}

}  // namespace coadapt::color
