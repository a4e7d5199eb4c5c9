#include "dfx/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dfx/nn/rng.hpp"

namespace dfx::nn {

namespace {

double evaluate(const LossFn& loss, const ParamStore& params) {
  Tape tape;
  return loss(tape, params).value().item();
}

}  // namespace

double grad_check(const LossFn& loss, const ParamStore& params, const GradCheckOptions& options) {
  ParamStore analytic;
  {
    Tape tape;
    analytic = tape.backward(loss(tape, params), params);
  }

  // Flattened coordinate index over all parameters in name order.
  std::vector<std::pair<std::string, std::size_t>> coords;
  for (const auto& [name, t] : params)
    for (std::size_t i = 0; i < t.size(); ++i) coords.emplace_back(name, i);
  Rng rng = Rng::stream(options.seed, "grad_check");
  std::vector<std::size_t> order(coords.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order.begin(), order.end());
  order.resize(std::min(order.size(), options.probes));

  ParamStore probe = params;
  double worst = 0.0;
  for (std::size_t k : order) {
    const auto& [name, i] = coords[k];
    double& slot = probe.at(name)[i];
    const double original = slot;
    slot = original + options.step;
    const double up = evaluate(loss, probe);
    slot = original - options.step;
    const double down = evaluate(loss, probe);
    slot = original;
    const double numeric = (up - down) / (2.0 * options.step);
    const double exact = analytic.at(name)[i];
    const double denom = std::max({std::fabs(exact), std::fabs(numeric), options.floor});
    worst = std::max(worst, std::fabs(exact - numeric) / denom);
  }
  return worst;
}

}  // namespace dfx::nn
