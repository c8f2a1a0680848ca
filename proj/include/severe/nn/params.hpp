#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "severe/array_store.hpp"
#include "severe/nn/graph.hpp"

namespace severe::nn {

template <class T>
struct ParamEntry {
  std::vector<int> shape;
  std::vector<T> value;
  // Adam state.
  std::vector<T> m;
  std::vector<T> v;
  std::int64_t step = 0;
  bool trainable = true;
};

// Named parameter arrays plus optimizer state. Running batch-norm statistics
// live here too as non-trainable entries.
template <class T>
class ParamStore {
 public:
  using Entries = std::map<std::string, ParamEntry<T>>;

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  ParamEntry<T>& entry(const std::string& name);
  const ParamEntry<T>& entry(const std::string& name) const;
  std::vector<T>& value(const std::string& name) { return entry(name).value; }
  const std::vector<T>& value(const std::string& name) const { return entry(name).value; }
  void set(const std::string& name, std::vector<int> shape, std::vector<T> value, bool trainable = true);

  Entries& entries() { return entries_; }
  const Entries& entries() const { return entries_; }

  std::size_t trainable_count() const;

  template <class U>
  ParamStore<U> cast() const;

  // Copies values of every name present in both stores.
  void copy_values_from(const ParamStore& other);

 private:
  Entries entries_;
};

// He-uniform for weights, zeros/ones for biases and normalization terms.
template <class T>
ParamStore<T> init_params(const Graph& graph, std::uint64_t seed);

// Per-parameter gradients plus gradients for each network input.
template <class T>
struct Gradients {
  std::map<std::string, std::vector<T>> params;
  std::vector<Tensor<T>> inputs;
};

// Serializes values (and Adam moments when requested) with a manifest of
// names and shapes under `prefix`.
template <class T>
void save_params(ArrayStore& store, const std::string& prefix, const ParamStore<T>& params,
                 bool with_optimizer_state = false);
template <class T>
ParamStore<T> load_params(const ArrayStore& store, const std::string& prefix);

// Throws ShapeMismatch unless every graph parameter exists with the right shape.
template <class T>
void check_params(const Graph& graph, const ParamStore<T>& params);

}  // namespace severe::nn
