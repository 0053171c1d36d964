#include "abn/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace abn::model {
namespace {

constexpr char kMagic[8] = {'A', 'B', 'N', 'C', 'K', 'P', 'T', '\0'};

std::uint64_t fnv1a(const std::string& bytes, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(bytes[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
  }
  void bytes(const std::string& s) { buf_ += s; }
  void scalar(float v) { uint(std::bit_cast<std::uint32_t>(v)); }
  void scalar(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& buf, std::size_t end, std::string origin)
      : buf_(buf), end_(end), origin_(std::move(origin)) {}

  void need(std::size_t n) {
    if (pos_ + n > end_) {
      throw CorruptError(origin_ + ": checkpoint truncated or corrupt");
    }
  }
  template <typename U>
  U uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename T>
  T scalar() {
    if constexpr (sizeof(T) == 4) {
      return std::bit_cast<float>(uint<std::uint32_t>());
    } else {
      return std::bit_cast<double>(uint<std::uint64_t>());
    }
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::string& buf_;
  std::size_t end_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace

template <typename T>
void save_checkpoint(const BasicAbnModel<T>& model,
                     const std::filesystem::path& path) {
  Writer w;
  w.bytes(std::string(kMagic, sizeof kMagic));
  w.uint<std::uint32_t>(kCheckpointVersion);
  w.uint<std::uint32_t>(sizeof(T));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(model.tag().size()));
  w.bytes(model.tag());
  const auto& a = model.arch();
  for (std::uint64_t v :
       {a.input_size, a.in_channels, a.extractor_widths[0], a.extractor_widths[1],
        a.extractor_widths[2], a.attention_width, a.perception_width,
        a.num_classes}) {
    w.uint<std::uint64_t>(v);
  }
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(model.parameters().size()));
  for (const auto& p : model.parameters()) {
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name);
    const auto& shape = p.var.value().shape();
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) w.uint<std::uint64_t>(d);
    for (T v : p.var.value().data()) w.scalar(v);
  }
  const std::uint64_t sum = fnv1a(w.buffer(), w.buffer().size());
  w.uint<std::uint64_t>(sum);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw IoError("write failed: " + path.string());
}

template <typename T>
BasicAbnModel<T> load_checkpoint(const std::filesystem::path& path,
                                 const std::optional<ArchConfig>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
  const std::string origin = path.string();
  if (buf.size() < sizeof kMagic + 8 ||
      std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0) {
    throw CorruptError(origin + ": not a checkpoint (bad magic or truncated)");
  }
  const std::size_t body = buf.size() - 8;
  {
    Reader tail(buf, buf.size(), origin);
    tail.bytes(body);
    if (tail.uint<std::uint64_t>() != fnv1a(buf, body)) {
      throw CorruptError(origin + ": checkpoint truncated or corrupt (checksum)");
    }
  }

  Reader r(buf, body, origin);
  r.bytes(sizeof kMagic);
  const auto version = r.uint<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw VersionError(origin + ": checkpoint version " + std::to_string(version) +
                       ", expected " + std::to_string(kCheckpointVersion));
  }
  const auto scalar_bytes = r.uint<std::uint32_t>();
  if (scalar_bytes != sizeof(T)) {
    throw VersionError(origin + ": checkpoint stores " +
                       std::to_string(scalar_bytes * 8) + "-bit values, loader wants " +
                       std::to_string(sizeof(T) * 8) + "-bit");
  }
  std::string tag = r.bytes(r.uint<std::uint32_t>());
  ArchConfig arch;
  arch.input_size = r.uint<std::uint64_t>();
  arch.in_channels = r.uint<std::uint64_t>();
  for (auto& wdt : arch.extractor_widths) wdt = r.uint<std::uint64_t>();
  arch.attention_width = r.uint<std::uint64_t>();
  arch.perception_width = r.uint<std::uint64_t>();
  arch.num_classes = r.uint<std::uint64_t>();
  if (expected && !(*expected == arch)) {
    throw ValueError(origin + ": checkpoint arch_config differs (stored vs expected): " +
                     arch.diff(*expected));
  }

  BasicAbnModel<T> model(arch, 0);
  model.set_tag(std::move(tag));
  auto& params = model.parameters();
  const auto n = r.uint<std::uint32_t>();
  if (n != params.size()) {
    throw CorruptError(origin + ": parameter count " + std::to_string(n) +
                       " does not match architecture (" +
                       std::to_string(params.size()) + ")");
  }
  for (auto& p : params) {
    const std::string name = r.bytes(r.uint<std::uint32_t>());
    if (name != p.name) {
      throw CorruptError(origin + ": unexpected parameter '" + name +
                         "', expected '" + p.name + "'");
    }
    nn::Shape shape(r.uint<std::uint32_t>());
    for (auto& d : shape) d = r.uint<std::uint64_t>();
    if (shape != p.var.value().shape()) {
      throw CorruptError(origin + ": parameter " + name + " has shape " +
                         nn::shape_str(shape) + ", expected " +
                         nn::shape_str(p.var.value().shape()));
    }
    auto& dst = p.var.mutable_value();
    for (auto& v : dst.data()) v = r.scalar<T>();
  }
  if (r.pos() != body) {
    throw CorruptError(origin + ": trailing bytes in checkpoint");
  }
  return model;
}

template void save_checkpoint<float>(const BasicAbnModel<float>&,
                                     const std::filesystem::path&);
template void save_checkpoint<double>(const BasicAbnModel<double>&,
                                      const std::filesystem::path&);
template BasicAbnModel<float> load_checkpoint<float>(
    const std::filesystem::path&, const std::optional<ArchConfig>&);
template BasicAbnModel<double> load_checkpoint<double>(
    const std::filesystem::path&, const std::optional<ArchConfig>&);

}  // namespace abn::model
