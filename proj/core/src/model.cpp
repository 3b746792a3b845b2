#include "coadapt/model.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "coadapt/checkpoint.hpp"
#include "coadapt/rng.hpp"

namespace coadapt::nn {
namespace {

using autograd::Shape;

Tensor kaiming_uniform(Shape shape, Rng& rng) {
  const std::size_t fan_in = shape[1] * shape[2] * shape[3];
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> values(autograd::shape_numel(shape));
  for (double& v : values) {
    v = rng.uniform(-bound, bound);
  }
  return Tensor(std::move(shape), std::move(values), true);
}

std::size_t as_size(int v) { return static_cast<std::size_t>(v); }

}  // namespace

SegNetMicro::SegNetMicro(const ModelConfig& cfg) : cfg_(cfg) {
  if (cfg.feature_width < 1 || cfg.class_count < 1) {
    throw std::invalid_argument("ModelConfig: feature_width and class_count must be >= 1");
  }
  const std::size_t f = as_size(cfg.feature_width);
  const std::size_t c = as_size(cfg.class_count);
  conv1_w_ = Tensor::zeros({f, 3, 3, 3}, true);
  conv1_b_ = Tensor::zeros({f}, true);
  conv2_w_ = Tensor::zeros({f, f, 3, 3}, true);
  conv2_b_ = Tensor::zeros({f}, true);
  head_w_ = Tensor::zeros({c, f, 1, 1}, true);
  head_b_ = Tensor::zeros({c}, true);
}

SegNetMicro SegNetMicro::zeros(const ModelConfig& cfg) { return SegNetMicro(cfg); }

SegNetMicro SegNetMicro::init(const ModelConfig& cfg, std::uint64_t seed) {
  SegNetMicro m(cfg);
  Rng rng(seed);
  m.conv1_w_ = kaiming_uniform(m.conv1_w_.shape(), rng);
  m.conv2_w_ = kaiming_uniform(m.conv2_w_.shape(), rng);
  m.head_w_ = kaiming_uniform(m.head_w_.shape(), rng);
  return m;
}

Tensor SegNetMicro::forward(const Tensor& x) const {
  if (x.rank() != 3 || x.dim(0) != 3) {
    throw std::invalid_argument("SegNetMicro::forward: expected [3,H,W] input, got " +
                                autograd::shape_string(x.shape()));
  }
  using namespace autograd;
  Tensor h = relu(conv2d(x, conv1_w_, conv1_b_, 1));
  h = relu(conv2d(h, conv2_w_, conv2_b_, 1));
  return conv2d(h, head_w_, head_b_, 0);
}

Tensor SegNetMicro::forward(const Image& img) const { return forward(image_to_tensor(img)); }

std::vector<NamedParam> SegNetMicro::parameters() const {
  return {{"conv1.weight", conv1_w_}, {"conv1.bias", conv1_b_},
          {"conv2.weight", conv2_w_}, {"conv2.bias", conv2_b_},
          {"head.weight", head_w_},   {"head.bias", head_b_}};
}

std::size_t SegNetMicro::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) {
    n += p.tensor.numel();
  }
  return n;
}

void SegNetMicro::zero_grad() {
  for (auto& p : parameters()) {
    p.tensor.zero_grad();
  }
}

SegNetMicro SegNetMicro::clone() const {
  SegNetMicro m(cfg_);
  m.conv1_w_ = conv1_w_.clone();
  m.conv1_b_ = conv1_b_.clone();
  m.conv2_w_ = conv2_w_.clone();
  m.conv2_b_ = conv2_b_.clone();
  m.head_w_ = head_w_.clone();
  m.head_b_ = head_b_.clone();
  return m;
}

void SegNetMicro::save(const std::filesystem::path& path, const std::string& domain_id) const {
  autograd::Checkpoint ckpt;
  ckpt.attributes["model"] = "SegNetMicro";
  ckpt.attributes["feature_width"] = std::to_string(cfg_.feature_width);
  ckpt.attributes["class_count"] = std::to_string(cfg_.class_count);
  ckpt.attributes["domain_id"] = domain_id;
  for (const auto& p : parameters()) {
    ckpt.arrays.push_back(
        {p.name, p.tensor.shape(), {p.tensor.data().begin(), p.tensor.data().end()}});
  }
  autograd::save_checkpoint(path, ckpt);
}

SegNetMicro SegNetMicro::load(const std::filesystem::path& path, std::string* domain_id) {
  const auto ckpt = autograd::load_checkpoint(path);
  if (ckpt.attribute("model") != "SegNetMicro") {
    throw std::runtime_error(path.string() + ": not a SegNetMicro checkpoint");
  }
  ModelConfig cfg;
  cfg.feature_width = std::stoi(ckpt.attribute("feature_width"));
  cfg.class_count = std::stoi(ckpt.attribute("class_count"));
  SegNetMicro m(cfg);
  for (auto& p : m.parameters()) {
    const auto& a = ckpt.array(p.name);
    if (a.shape != p.tensor.shape()) {
      throw std::runtime_error(path.string() + ": array '" + p.name + "' has shape " +
                               autograd::shape_string(a.shape) + ", expected " +
                               autograd::shape_string(p.tensor.shape()));
    }
    std::copy(a.values.begin(), a.values.end(), p.tensor.mutable_data().begin());
  }
  if (domain_id) {
    const auto it = ckpt.attributes.find("domain_id");
    *domain_id = it == ckpt.attributes.end() ? std::string{} : it->second;
  }
  return m;
}

Tensor image_to_tensor(const Image& img) {
  if (img.space() != ColorSpace::kSrgbUnit) {
    throw std::invalid_argument("image_to_tensor: model input must be sRGB");
  }
  const std::size_t h = as_size(img.height());
  const std::size_t w = as_size(img.width());
  const std::size_t plane = h * w;
  std::vector<double> chw(plane * 3);
  const auto src = img.data();
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      chw[c * plane + p] = src[p * 3 + c];
    }
  }
  return Tensor({3, h, w}, std::move(chw));
}

void ModelSet::validate() const {
  if (models.empty()) {
    throw std::invalid_argument("ModelSet: needs at least one model");
  }
  if (domain_ids.size() != models.size()) {
    throw std::invalid_argument("ModelSet: one domain id per model required");
  }
  for (const auto& m : models) {
    if (!(m.config() == models.front().config())) {
      throw std::invalid_argument("ModelSet: models differ in feature width or class count");
    }
  }
}

void ModelSet::save(const std::filesystem::path& dir) const {
  validate();
  std::filesystem::create_directories(dir);
  nlohmann::json index;
  index["models"] = nlohmann::json::array();
  for (std::size_t i = 0; i < models.size(); ++i) {
    const std::string file = "model_" + std::to_string(i) + ".ckpt";
    models[i].save(dir / file, domain_ids[i]);
    index["models"].push_back({{"file", file}, {"domain_id", domain_ids[i]}});
  }
  std::ofstream(dir / "models.json") << index.dump(2) << "\n";
}

ModelSet ModelSet::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "models.json");
  if (!in) {
    throw std::runtime_error("no models.json in '" + dir.string() + "'");
  }
  const auto index = nlohmann::json::parse(in);
  ModelSet set;
  for (const auto& entry : index.at("models")) {
    std::string id;
    set.models.push_back(SegNetMicro::load(dir / entry.at("file").get<std::string>(), &id));
    set.domain_ids.push_back(id);
  }
  set.validate();
  return set;
}

}  // namespace coadapt::nn
