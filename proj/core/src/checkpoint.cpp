#include "coadapt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace coadapt::autograd {
namespace {

constexpr char kMagic[8] = {'C', 'O', 'A', 'D', 'A', 'P', 'T', '\0'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}
  void bytes(void* p, std::size_t n) {
    if (n > in_.size() - pos_) {
      throw std::runtime_error("checkpoint truncated at byte " + std::to_string(pos_));
    }
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > in_.size() - pos_) {
      throw std::runtime_error("checkpoint truncated in string");
    }
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

}  // namespace

const NamedArray& Checkpoint::array(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) {
      return a;
    }
  }
  throw std::runtime_error("checkpoint has no array '" + name + "'");
}

const std::string& Checkpoint::attribute(const std::string& key) const {
  const auto it = attributes.find(key);
  if (it == attributes.end()) {
    throw std::runtime_error("checkpoint has no attribute '" + key + "'");
  }
  return it->second;
}

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.attributes.size()));
  for (const auto& [k, v] : ckpt.attributes) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(ckpt.arrays.size()));
  for (const auto& a : ckpt.arrays) {
    if (a.values.size() != shape_numel(a.shape)) {
      throw std::invalid_argument("checkpoint array '" + a.name + "' has inconsistent shape");
    }
    w.str(a.name);
    w.u32(static_cast<std::uint32_t>(a.shape.size()));
    for (const auto d : a.shape) {
      w.u64(d);
    }
    w.bytes(a.values.data(), a.values.size() * sizeof(double));
  }
  return w.take();
}

Checkpoint deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw std::runtime_error("not a coadapt checkpoint (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const std::uint32_t attr_count = r.u32();
  for (std::uint32_t i = 0; i < attr_count; ++i) {
    std::string k = r.str();
    ckpt.attributes[std::move(k)] = r.str();
  }
  const std::uint32_t array_count = r.u32();
  for (std::uint32_t i = 0; i < array_count; ++i) {
    NamedArray a;
    a.name = r.str();
    const std::uint32_t rank = r.u32();
    for (std::uint32_t d = 0; d < rank; ++d) {
      a.shape.push_back(static_cast<std::size_t>(r.u64()));
    }
    const std::size_t n = shape_numel(a.shape);
    if (n > bytes.size() / sizeof(double)) {
      throw std::runtime_error("checkpoint array '" + a.name + "' larger than file");
    }
    a.values.resize(n);
    r.bytes(a.values.data(), n * sizeof(double));
    ckpt.arrays.push_back(std::move(a));
  }
  if (!r.done()) {
    throw std::runtime_error("checkpoint has trailing bytes");
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  const auto bytes = serialize(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw std::runtime_error("cannot write checkpoint '" + path.string() + "'");
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return deserialize(bytes);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace coadapt::autograd
