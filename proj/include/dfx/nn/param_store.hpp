#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dfx/nn/tensor.hpp"

namespace dfx::nn {

// Named parameter tensors, iterated in sorted name order.
class ParamStore {
 public:
  using Map = std::map<std::string, Tensor>;

  void insert(const std::string& name, Tensor t);
  bool contains(const std::string& name) const { return tensors_.count(name) > 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  void erase(const std::string& name) { tensors_.erase(name); }

  std::size_t size() const noexcept { return tensors_.size(); }
  std::size_t parameter_count() const noexcept;
  std::vector<std::string> names() const;

  Map::iterator begin() { return tensors_.begin(); }
  Map::iterator end() { return tensors_.end(); }
  Map::const_iterator begin() const { return tensors_.begin(); }
  Map::const_iterator end() const { return tensors_.end(); }

  // Zero tensors with the same names and shapes.
  ParamStore zeros_like() const;
  // Hash over names, shapes and the raw bit patterns of the values.
  std::uint64_t fingerprint() const;

  friend bool operator==(const ParamStore&, const ParamStore&) = default;

 private:
  Map tensors_;
};

// {version, tensors: {name: {shape, values}}}
nlohmann::json params_to_json(const ParamStore& params);
// When `expected` is given, names and shapes must match it exactly.
ParamStore params_from_json(const nlohmann::json& j, const ParamStore* expected = nullptr);

}  // namespace dfx::nn
