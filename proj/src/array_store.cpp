#include "severe/array_store.hpp"

#include <cstring>
#include <fstream>
#include <json.hpp>

#include "severe/error.hpp"

namespace severe {
namespace {

constexpr char kMagic[8] = {'S', 'E', 'V', 'A', 'R', 'R', 'A', 'Y'};

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::i32: return 4;
    case DType::i64: return 8;
    case DType::u8: return 1;
  }
  return 0;
}

const char* dtype_name(DType t) {
  switch (t) {
    case DType::f32: return "f32";
    case DType::f64: return "f64";
    case DType::i32: return "i32";
    case DType::i64: return "i64";
    case DType::u8: return "u8";
  }
  return "?";
}

DType parse_dtype(const std::string& s) {
  if (s == "f32") return DType::f32;
  if (s == "f64") return DType::f64;
  if (s == "i32") return DType::i32;
  if (s == "i64") return DType::i64;
  if (s == "u8") return DType::u8;
  fail(Errc::format_error, "unknown dtype '" + s + "'");
}

template <class T>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<T, float>) return DType::f32;
  else if constexpr (std::is_same_v<T, double>) return DType::f64;
  else if constexpr (std::is_same_v<T, std::int32_t>) return DType::i32;
  else if constexpr (std::is_same_v<T, std::int64_t>) return DType::i64;
  else {
    static_assert(std::is_same_v<T, std::uint8_t>);
    return DType::u8;
  }
}

template <class Src, class Dst>
void convert(const std::vector<std::uint8_t>& bytes, std::vector<Dst>& out) {
  const std::size_t n = bytes.size() / sizeof(Src);
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Src v;
    std::memcpy(&v, bytes.data() + i * sizeof(Src), sizeof(Src));
    out[i] = static_cast<Dst>(v);
  }
}

}  // namespace

std::int64_t StoredArray::count() const {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

template <class T>
void ArrayStore::put(const std::string& name, std::vector<std::int64_t> shape, std::span<const T> values) {
  StoredArray a;
  a.dtype = dtype_of<T>();
  a.shape = std::move(shape);
  require(a.count() == static_cast<std::int64_t>(values.size()), Errc::shape_mismatch,
          "array '" + name + "' shape does not match value count");
  a.bytes.resize(values.size() * sizeof(T));
  if (!values.empty()) std::memcpy(a.bytes.data(), values.data(), a.bytes.size());
  arrays_[name] = std::move(a);
}

template <class T>
std::vector<T> ArrayStore::get(const std::string& name) const {
  const auto& a = array(name);
  std::vector<T> out;
  switch (a.dtype) {
    case DType::f32: convert<float>(a.bytes, out); break;
    case DType::f64: convert<double>(a.bytes, out); break;
    case DType::i32: convert<std::int32_t>(a.bytes, out); break;
    case DType::i64: convert<std::int64_t>(a.bytes, out); break;
    case DType::u8: convert<std::uint8_t>(a.bytes, out); break;
  }
  return out;
}

#define SEVERE_INSTANTIATE(T)                                                                       \
  template void ArrayStore::put<T>(const std::string&, std::vector<std::int64_t>, std::span<const T>); \
  template std::vector<T> ArrayStore::get<T>(const std::string&) const;
SEVERE_INSTANTIATE(float)
SEVERE_INSTANTIATE(double)
SEVERE_INSTANTIATE(std::int32_t)
SEVERE_INSTANTIATE(std::int64_t)
SEVERE_INSTANTIATE(std::uint8_t)
#undef SEVERE_INSTANTIATE

const StoredArray& ArrayStore::array(const std::string& name) const {
  auto it = arrays_.find(name);
  require(it != arrays_.end(), Errc::format_error, "no array named '" + name + "'");
  return it->second;
}

std::vector<std::string> ArrayStore::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : arrays_) out.push_back(k);
  return out;
}

std::string ArrayStore::attr(const std::string& key) const {
  auto it = attrs_.find(key);
  require(it != attrs_.end(), Errc::format_error, "no attribute '" + key + "'");
  return it->second;
}

void ArrayStore::save(const std::filesystem::path& path) const {
  nlohmann::json header;
  header["format_version"] = kFormatVersion;
  header["attrs"] = attrs_;
  header["arrays"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, a] : arrays_) {
    header["arrays"].push_back({{"name", name},
                                {"dtype", dtype_name(a.dtype)},
                                {"shape", a.shape},
                                {"offset", offset},
                                {"nbytes", a.bytes.size()}});
    offset += a.bytes.size();
  }
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), Errc::io_error, "cannot write " + path.string());
  out.write(kMagic, sizeof kMagic);
  const std::uint32_t version = kFormatVersion;
  const std::uint64_t size = text.size();
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&size), sizeof size);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, a] : arrays_)
    out.write(reinterpret_cast<const char*>(a.bytes.data()), static_cast<std::streamsize>(a.bytes.size()));
  require(static_cast<bool>(out), Errc::io_error, "write failed for " + path.string());
}

ArrayStore ArrayStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), Errc::io_error, "cannot read " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  require(in && std::memcmp(magic, kMagic, sizeof magic) == 0, Errc::format_error,
          path.string() + " is not an array container");
  std::uint32_t version = 0;
  std::uint64_t size = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&size), sizeof size);
  require(in && version == kFormatVersion, Errc::format_error,
          "unsupported container version " + std::to_string(version));
  std::string text(size, '\0');
  in.read(text.data(), static_cast<std::streamsize>(size));
  const auto header = nlohmann::json::parse(text);
  require(header.at("format_version").get<std::uint32_t>() == kFormatVersion, Errc::format_error,
          "header version mismatch");

  ArrayStore store;
  store.attrs_ = header.at("attrs").get<std::map<std::string, std::string>>();
  for (const auto& entry : header.at("arrays")) {
    StoredArray a;
    a.dtype = parse_dtype(entry.at("dtype").get<std::string>());
    a.shape = entry.at("shape").get<std::vector<std::int64_t>>();
    a.bytes.resize(entry.at("nbytes").get<std::size_t>());
    require(a.bytes.size() == static_cast<std::size_t>(a.count()) * dtype_size(a.dtype),
            Errc::format_error, "array size does not match its shape");
    in.read(reinterpret_cast<char*>(a.bytes.data()), static_cast<std::streamsize>(a.bytes.size()));
    require(static_cast<bool>(in), Errc::format_error, "truncated container " + path.string());
    store.arrays_[entry.at("name").get<std::string>()] = std::move(a);
  }
  return store;
}

}  // namespace severe
