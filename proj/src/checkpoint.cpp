#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "aeckit/error.hpp"
#include "aeckit/model.hpp"

namespace aeckit {
namespace {

constexpr char kMagic[8] = {'A', 'E', 'C', 'K', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint codec assumes a little-endian host");

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes.insert(bytes.end(), p, p + n);
  }
  void put_array(const std::string& name, const std::vector<float>& values) {
    put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    put_bytes(name.data(), name.size());
    put<std::uint64_t>(values.size());
    put_bytes(values.data(), values.size() * sizeof(float));
  }

  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  std::string get_string(std::size_t n) {
    const auto* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  std::vector<float> get_floats(std::size_t n) {
    if (n > bytes_.size() / sizeof(float)) fail();
    std::vector<float> v(n);
    std::memcpy(v.data(), take(n * sizeof(float)), n * sizeof(float));
    return v;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  [[noreturn]] static void fail() { throw Error(ErrorCode::ChecksumMismatch, "checkpoint payload is malformed"); }
  const std::uint8_t* take(std::size_t n) {
    if (bytes_.size() - pos_ < n) fail();
    const auto* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::span<const std::uint8_t> data) {
  return static_cast<std::uint32_t>(
      ::crc32(::crc32(0L, Z_NULL, 0), data.data(), static_cast<uInt>(data.size())));
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  const Network<float> shape_check(ckpt.config);
  (void)shape_check;
  for (const auto& p : ckpt.params)
    for (float v : p.values)
      if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "parameter '" + p.name + "' is not finite");
  if (ckpt.adam.m.size() != ckpt.params.size() || ckpt.adam.v.size() != ckpt.params.size())
    throw Error(ErrorCode::ShapeMismatch, "optimizer state does not match parameters");

  Writer w;
  w.put_bytes(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(Checkpoint::kFormatVersion);
  // nlohmann::json objects are std::map backed, so dump() is key-sorted.
  const std::string cfg = nlohmann::json(ckpt.config).dump();
  w.put<std::uint64_t>(cfg.size());
  w.put_bytes(cfg.data(), cfg.size());
  w.put<std::uint64_t>(ckpt.adam.step);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.params.size() * 3));
  for (const auto& p : ckpt.params) w.put_array(p.name, p.values);
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) w.put_array("adam.m." + ckpt.params[i].name, ckpt.adam.m[i]);
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) w.put_array("adam.v." + ckpt.params[i].name, ckpt.adam.v[i]);
  w.put<std::uint32_t>(crc_of(w.bytes));
  return std::move(w.bytes);
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kMagic) + 4 + 4 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw Error(ErrorCode::ChecksumMismatch, "not a checkpoint file (bad magic or truncated)");
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + sizeof(kMagic), 4);
  if (version != Checkpoint::kFormatVersion)
    throw Error(ErrorCode::VersionMismatch, "checkpoint format " + std::to_string(version) + ", expected " +
                                                std::to_string(Checkpoint::kFormatVersion));
  const auto body = bytes.first(bytes.size() - 4);
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), 4);
  if (crc_of(body) != stored) throw Error(ErrorCode::ChecksumMismatch, "checkpoint CRC mismatch");

  Reader r(body);
  r.get_string(sizeof(kMagic));
  r.get<std::uint32_t>();
  Checkpoint ckpt;
  const auto cfg_len = r.get<std::uint64_t>();
  if (cfg_len > body.size()) throw Error(ErrorCode::ChecksumMismatch, "checkpoint config length");
  try {
    ckpt.config = nlohmann::json::parse(r.get_string(cfg_len)).get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ChecksumMismatch, std::string("checkpoint config: ") + e.what());
  }
  ckpt.adam.step = r.get<std::uint64_t>();
  const auto n_arrays = r.get<std::uint32_t>();

  const auto shapes = parameter_shapes(ckpt.config);
  if (n_arrays != shapes.size() * 3) throw Error(ErrorCode::ShapeMismatch, "checkpoint array count");
  const auto read_array = [&](const std::string& expected, std::size_t count) {
    const auto name = r.get_string(r.get<std::uint32_t>());
    if (name != expected) throw Error(ErrorCode::ShapeMismatch, "expected array '" + expected + "', found '" + name + "'");
    const auto n = r.get<std::uint64_t>();
    if (n != count) throw Error(ErrorCode::ShapeMismatch, "array '" + name + "' has the wrong length");
    return r.get_floats(n);
  };
  const auto count_of = [](const ParameterShape& s) {
    std::size_t n = 1;
    for (auto d : s.shape) n *= d;
    return n;
  };
  for (const auto& s : shapes) ckpt.params.push_back({s.name, s.shape, read_array(s.name, count_of(s))});
  for (const auto& s : shapes) ckpt.adam.m.push_back(read_array("adam.m." + s.name, count_of(s)));
  for (const auto& s : shapes) ckpt.adam.v.push_back(read_array("adam.v." + s.name, count_of(s)));
  if (!r.done()) throw Error(ErrorCode::ChecksumMismatch, "trailing bytes in checkpoint");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace aeckit
