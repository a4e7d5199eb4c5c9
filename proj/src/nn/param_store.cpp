#include "dfx/nn/param_store.hpp"

#include <bit>
#include <cstring>

#include <nlohmann/json.hpp>

#include "dfx/core/error.hpp"
#include "dfx/nn/rng.hpp"

namespace dfx::nn {

void ParamStore::insert(const std::string& name, Tensor t) {
  if (!tensors_.emplace(name, std::move(t)).second) throw ConfigError("duplicate parameter '" + name + "'");
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ConfigError("no parameter named '" + name + "'");
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ConfigError("no parameter named '" + name + "'");
  return it->second;
}

std::size_t ParamStore::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.size();
  return n;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(tensors_.size());
  for (const auto& [name, t] : tensors_) out.push_back(name);
  return out;
}

ParamStore ParamStore::zeros_like() const {
  ParamStore out;
  for (const auto& [name, t] : tensors_) out.insert(name, Tensor(t.shape()));
  return out;
}

std::uint64_t ParamStore::fingerprint() const {
  std::uint64_t h = fnv1a64("params");
  for (const auto& [name, t] : tensors_) {
    h = fnv1a64(name, h);
    h = fnv1a64(shape_string(t.shape()), h);
    for (double v : t.values()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      char bytes[8];
      std::memcpy(bytes, &bits, 8);
      h = fnv1a64(std::string_view(bytes, 8), h);
    }
  }
  return h;
}

nlohmann::json params_to_json(const ParamStore& params) {
  nlohmann::json tensors = nlohmann::json::object();
  for (const auto& [name, t] : params) tensors[name] = {{"shape", t.shape()}, {"values", t.storage()}};
  return {{"version", 1}, {"tensors", std::move(tensors)}};
}

ParamStore params_from_json(const nlohmann::json& j, const ParamStore* expected) {
  ParamStore out;
  try {
    if (j.at("version").get<int>() != 1) throw FormatError("unsupported parameter file version");
    for (const auto& [name, entry] : j.at("tensors").items()) {
      Tensor t(entry.at("shape").get<Shape>(), entry.at("values").get<std::vector<double>>());
      if (!t.all_finite()) throw FormatError("parameter '" + name + "' holds non-finite values");
      out.insert(name, std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed parameter JSON: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(e.what());
  }
  if (expected) {
    if (out.names() != expected->names()) throw FormatError("parameter names do not match the model layout");
    for (const auto& [name, t] : out)
      if (t.shape() != expected->at(name).shape())
        throw FormatError("parameter '" + name + "' has shape " + shape_string(t.shape()) + ", expected " +
                          shape_string(expected->at(name).shape()));
  }
  return out;
}

}  // namespace dfx::nn
