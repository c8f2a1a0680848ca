#include "severe/nn/params.hpp"

#include <cmath>

#include "severe/rng.hpp"

namespace severe::nn {

template <class T>
ParamEntry<T>& ParamStore<T>::entry(const std::string& name) {
  auto it = entries_.find(name);
  require(it != entries_.end(), Errc::shape_mismatch, "no parameter named '" + name + "'");
  return it->second;
}

template <class T>
const ParamEntry<T>& ParamStore<T>::entry(const std::string& name) const {
  auto it = entries_.find(name);
  require(it != entries_.end(), Errc::shape_mismatch, "no parameter named '" + name + "'");
  return it->second;
}

template <class T>
void ParamStore<T>::set(const std::string& name, std::vector<int> shape, std::vector<T> value, bool trainable) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  require(n == value.size(), Errc::shape_mismatch, "parameter '" + name + "' value does not match shape");
  ParamEntry<T> e;
  e.shape = std::move(shape);
  e.value = std::move(value);
  e.trainable = trainable;
  entries_[name] = std::move(e);
}

template <class T>
std::size_t ParamStore<T>::trainable_count() const {
  std::size_t n = 0;
  for (const auto& [k, e] : entries_)
    if (e.trainable) n += e.value.size();
  return n;
}

template <class T>
template <class U>
ParamStore<U> ParamStore<T>::cast() const {
  ParamStore<U> out;
  for (const auto& [k, e] : entries_) {
    ParamEntry<U> u;
    u.shape = e.shape;
    u.trainable = e.trainable;
    u.step = e.step;
    u.value.assign(e.value.begin(), e.value.end());
    u.m.assign(e.m.begin(), e.m.end());
    u.v.assign(e.v.begin(), e.v.end());
    out.entries()[k] = std::move(u);
  }
  return out;
}

template <class T>
void ParamStore<T>::copy_values_from(const ParamStore& other) {
  for (auto& [k, e] : entries_) {
    auto it = other.entries_.find(k);
    if (it != other.entries_.end() && it->second.value.size() == e.value.size()) e.value = it->second.value;
  }
}

template <class T>
ParamStore<T> init_params(const Graph& graph, std::uint64_t seed) {
  ParamStore<T> store;
  for (const auto& spec : graph.param_specs()) {
    std::size_t n = 1;
    for (int d : spec.shape) n *= static_cast<std::size_t>(d);
    std::vector<T> v(n, T(0));
    switch (spec.init) {
      case ParamSpec::Init::he_uniform: {
        Rng rng(derive_seed(seed, {hash_string(spec.name)}));
        const double limit = std::sqrt(6.0 / std::max(1, spec.fan_in));
        for (auto& x : v) x = static_cast<T>(rng.uniform(-limit, limit));
        break;
      }
      case ParamSpec::Init::ones:
        std::fill(v.begin(), v.end(), T(1));
        break;
      case ParamSpec::Init::zeros:
        break;
    }
    store.set(spec.name, spec.shape, std::move(v), spec.trainable);
  }
  return store;
}

template <class T>
void save_params(ArrayStore& store, const std::string& prefix, const ParamStore<T>& params, bool with_optimizer_state) {
  std::string manifest;
  for (const auto& [name, e] : params.entries()) {
    std::vector<std::int64_t> shape(e.shape.begin(), e.shape.end());
    store.put<T>(prefix + name, shape, e.value);
    if (with_optimizer_state && !e.m.empty()) {
      store.put<T>(prefix + name + "#adam_m", shape, e.m);
      store.put<T>(prefix + name + "#adam_v", shape, e.v);
    }
    manifest += name;
    manifest += e.trainable ? ":t:" : ":f:";
    manifest += std::to_string(e.step) + ":";
    for (std::size_t i = 0; i < e.shape.size(); ++i) manifest += (i ? "x" : "") + std::to_string(e.shape[i]);
    manifest += ";";
  }
  store.set_attr(prefix + "manifest", manifest);
}

template <class T>
ParamStore<T> load_params(const ArrayStore& store, const std::string& prefix) {
  ParamStore<T> params;
  const std::string manifest = store.attr(prefix + "manifest");
  std::size_t pos = 0;
  while (pos < manifest.size()) {
    const auto end = manifest.find(';', pos);
    require(end != std::string::npos, Errc::format_error, "bad parameter manifest");
    const std::string item = manifest.substr(pos, end - pos);
    pos = end + 1;
    const auto c1 = item.find(':');
    const auto c2 = item.find(':', c1 + 1);
    const auto c3 = item.find(':', c2 + 1);
    require(c1 != std::string::npos && c2 != std::string::npos && c3 != std::string::npos, Errc::format_error,
            "bad manifest entry '" + item + "'");
    const std::string name = item.substr(0, c1);
    const bool trainable = item.substr(c1 + 1, c2 - c1 - 1) == "t";
    const auto step = std::stoll(item.substr(c2 + 1, c3 - c2 - 1));
    std::vector<int> shape;
    std::string dims = item.substr(c3 + 1);
    std::size_t p = 0;
    while (p < dims.size()) {
      auto x = dims.find('x', p);
      if (x == std::string::npos) x = dims.size();
      shape.push_back(std::stoi(dims.substr(p, x - p)));
      p = x + 1;
    }
    params.set(name, shape, store.get<T>(prefix + name), trainable);
    auto& e = params.entry(name);
    e.step = step;
    if (store.contains(prefix + name + "#adam_m")) {
      e.m = store.get<T>(prefix + name + "#adam_m");
      e.v = store.get<T>(prefix + name + "#adam_v");
    }
  }
  return params;
}

template <class T>
void check_params(const Graph& graph, const ParamStore<T>& params) {
  for (const auto& spec : graph.param_specs()) {
    require(params.contains(spec.name), Errc::shape_mismatch, "missing parameter '" + spec.name + "'");
    require(params.entry(spec.name).shape == spec.shape, Errc::shape_mismatch,
            "parameter '" + spec.name + "' has the wrong shape");
  }
}

template class ParamStore<float>;
template class ParamStore<double>;
template ParamStore<double> ParamStore<float>::cast<double>() const;
template ParamStore<float> ParamStore<double>::cast<float>() const;
template ParamStore<float> ParamStore<float>::cast<float>() const;
template ParamStore<double> ParamStore<double>::cast<double>() const;
template ParamStore<float> init_params<float>(const Graph&, std::uint64_t);
template ParamStore<double> init_params<double>(const Graph&, std::uint64_t);
template void save_params<float>(ArrayStore&, const std::string&, const ParamStore<float>&, bool);
template void save_params<double>(ArrayStore&, const std::string&, const ParamStore<double>&, bool);
template ParamStore<float> load_params<float>(const ArrayStore&, const std::string&);
template ParamStore<double> load_params<double>(const ArrayStore&, const std::string&);
template void check_params<float>(const Graph&, const ParamStore<float>&);
template void check_params<double>(const Graph&, const ParamStore<double>&);

}  // namespace severe::nn
