#pragma once

#include <map>
#include <string>
#include <vector>

#include "igstf/tensor.hpp"

namespace igstf {

/// Named learnable arrays. Iteration order is lexicographic by name, which
/// fixes every reduction and serialization order.
class ParamStore {
 public:
  using Map = std::map<std::string, Tensor>;

  void add(const std::string& name, Tensor value) {
    auto [it, inserted] = params_.emplace(name, std::move(value));
    if (!inserted) throw ConfigError("duplicate parameter name '" + name + "'");
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  const Tensor& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }

  Tensor& get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }

  // Replaces the value while keeping the shape fixed.
  void set(const std::string& name, Tensor value) {
    Tensor& slot = get(name);
    if (slot.shape() != value.shape()) {
      throw DimensionError("parameter '" + name + "' has shape " + shape_str(slot.shape()) +
                           ", got " + shape_str(value.shape()));
    }
    slot = std::move(value);
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [k, _] : params_) out.push_back(k);
    return out;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, v] : params_) n += v.size();
    return n;
  }

  std::size_t size() const { return params_.size(); }
  Map::const_iterator begin() const { return params_.begin(); }
  Map::const_iterator end() const { return params_.end(); }
  Map::iterator begin() { return params_.begin(); }
  Map::iterator end() { return params_.end(); }

  /// Rounds every value through 32-bit float, the precision of params.bin.
  void round_to_float() {
    for (auto& [_, t] : params_)
      for (double& v : t.storage()) v = static_cast<double>(static_cast<float>(v));
  }

  friend bool operator==(const ParamStore& a, const ParamStore& b) { return a.params_ == b.params_; }

 private:
  Map params_;
};

using GradMap = std::map<std::string, Tensor>;

}  // namespace igstf
