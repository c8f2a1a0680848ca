#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace severe {

enum class DType : std::uint8_t { f32, f64, i32, i64, u8 };

// One named n-d array in an ArrayStore.
struct StoredArray {
  DType dtype = DType::f64;
  std::vector<std::int64_t> shape;
  std::vector<std::uint8_t> bytes;

  std::int64_t count() const;
};

// Self-describing array container: named arrays with shape and dtype, string
// attributes, and a mandatory format-version field in the header.
//
// Layout: 8-byte magic "SEVARRAY", u32 version, u64 header size, JSON header,
// then the raw little-endian payload of each array in header order.
class ArrayStore {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  template <class T>
  void put(const std::string& name, std::vector<std::int64_t> shape, std::span<const T> values);

  template <class T>
  void put(const std::string& name, std::vector<std::int64_t> shape, const std::vector<T>& values) {
    put<T>(name, std::move(shape), std::span<const T>(values));
  }

  // Values converted to T from whatever numeric dtype is stored.
  template <class T>
  std::vector<T> get(const std::string& name) const;

  const StoredArray& array(const std::string& name) const;
  std::vector<std::int64_t> shape(const std::string& name) const { return array(name).shape; }
  bool contains(const std::string& name) const { return arrays_.count(name) != 0; }
  std::vector<std::string> names() const;

  void set_attr(const std::string& key, const std::string& value) { attrs_[key] = value; }
  std::string attr(const std::string& key) const;
  bool has_attr(const std::string& key) const { return attrs_.count(key) != 0; }
  const std::map<std::string, std::string>& attrs() const { return attrs_; }

  void save(const std::filesystem::path& path) const;
  static ArrayStore load(const std::filesystem::path& path);

 private:
  std::map<std::string, StoredArray> arrays_;
  std::map<std::string, std::string> attrs_;
};

}  // namespace severe
