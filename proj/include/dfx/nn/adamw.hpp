#pragma once

#include <cstdint>

#include <nlohmann/json_fwd.hpp>

#include "dfx/nn/param_store.hpp"

namespace dfx::nn {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

nlohmann::json to_json(const AdamWConfig& c);
AdamWConfig adamw_config_from_json(const nlohmann::json& j);

struct AdamWState {
  ParamStore first_moment;
  ParamStore second_moment;
  std::uint64_t step = 0;
};

// One decoupled-weight-decay Adam update of every parameter named in `grads`.
// Parameters absent from `grads` are left untouched (frozen). The moment
// buffers are created on the first call and must keep the same key set.
void adamw_step(ParamStore& params, const ParamStore& grads, AdamWState& state, double learning_rate,
                const AdamWConfig& config = {});

}  // namespace dfx::nn
