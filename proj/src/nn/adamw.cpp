#include "dfx/nn/adamw.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "dfx/core/error.hpp"

namespace dfx::nn {

nlohmann::json to_json(const AdamWConfig& c) {
  return {{"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}, {"weight_decay", c.weight_decay}};
}

AdamWConfig adamw_config_from_json(const nlohmann::json& j) {
  AdamWConfig c;
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  return c;
}

void adamw_step(ParamStore& params, const ParamStore& grads, AdamWState& state, double learning_rate,
                const AdamWConfig& config) {
  if (state.step == 0 && state.first_moment.size() == 0) {
    state.first_moment = grads.zeros_like();
    state.second_moment = grads.zeros_like();
  }
  if (state.first_moment.size() != grads.size()) throw ConfigError("AdamW: gradient keys differ from optimizer state");
  for (const auto& [name, g] : grads) {
    if (!state.first_moment.contains(name)) throw ConfigError("AdamW: gradient keys differ from optimizer state");
    if (!params.contains(name)) throw ConfigError("AdamW: gradient for unknown parameter '" + name + "'");
    if (params.at(name).shape() != g.shape()) throw ConfigError("AdamW: gradient shape mismatch for '" + name + "'");
    if (!g.all_finite()) throw NumericError("AdamW: non-finite gradient for '" + name + "'");
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(config.beta1, t);
  const double bias2_sqrt = std::sqrt(1.0 - std::pow(config.beta2, t));
  const double step_size = learning_rate / bias1;
  const double decay = 1.0 - learning_rate * config.weight_decay;
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    Tensor& m = state.first_moment.at(name);
    Tensor& v = state.second_moment.at(name);
    double* pv = p.data();
    double* mv = m.data();
    double* vv = v.data();
    const double* gv = g.data();
    const double b1 = config.beta1, b2 = config.beta2, eps = config.eps;
    for (std::size_t i = 0, n = p.size(); i < n; ++i) {
      const double gi = gv[i];
      const double mi = b1 * mv[i] + (1.0 - b1) * gi;
      const double vi = b2 * vv[i] + (1.0 - b2) * gi * gi;
      mv[i] = mi;
      vv[i] = vi;
      pv[i] = pv[i] * decay - step_size * mi / (std::sqrt(vi) / bias2_sqrt + eps);
    }
  }
}

}  // namespace dfx::nn
