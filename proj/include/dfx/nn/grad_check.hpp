#pragma once

#include <cstdint>
#include <functional>

#include "dfx/nn/param_store.hpp"
#include "dfx/nn/tape.hpp"

namespace dfx::nn {

// Builds the scalar loss on a fresh tape from the given parameters.
using LossFn = std::function<Var(Tape&, const ParamStore&)>;

struct GradCheckOptions {
  std::size_t probes = 200;
  std::uint64_t seed = 0;
  double step = 1e-5;
  // Denominator floor for the relative error, so gradients that are zero up
  // to rounding do not blow the ratio up.
  double floor = 1e-6;
};

// Max over `probes` random coordinates of |analytic − numeric| /
// max(|analytic|, |numeric|, floor), numeric by central differences.
double grad_check(const LossFn& loss, const ParamStore& params, const GradCheckOptions& options = {});

}  // namespace dfx::nn
