#include "dfx/nn/tape.hpp"

#include <map>

#include "dfx/core/error.hpp"

namespace dfx::nn {

const Tensor& Var::value() const { return tape_->value(*this); }

Var Tape::constant(Tensor value) { return record(std::move(value), false, nullptr); }

Var Tape::parameter(const ParamStore& params, const std::string& name) {
  // Parameters are kept finite by the optimizer and loaders, so no scan here.
  Node node;
  node.value = params.at(name);
  node.requires_grad = true;
  node.param_index = static_cast<int>(param_names_.size());
  nodes_.push_back(std::move(node));
  param_names_.push_back(name);
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::record(Tensor value, bool requires_grad, Backward backward) {
  if (!value.all_finite()) throw NumericError("non-finite value produced on the tape");
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Tensor& Tape::grad(std::uint32_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

ParamStore Tape::backward(Var loss, const ParamStore& params) {
  if (loss.tape_ != this) throw ConfigError("loss belongs to a different tape");
  if (value(loss).size() != 1) throw ConfigError("backward needs a scalar loss");
  for (auto& n : nodes_) n.has_grad = false;
  grad(loss.id()).fill(1.0);

  std::map<std::string, Tensor> reached;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.requires_grad) continue;
    if (n.param_index >= 0) {
      const std::string& name = param_names_[static_cast<std::size_t>(n.param_index)];
      auto [it, fresh] = reached.try_emplace(name);
      if (fresh) {
        it->second = std::move(n.grad);
        n.has_grad = false;
      } else {
        for (std::size_t k = 0; k < it->second.size(); ++k) it->second[k] += n.grad[k];
      }
    } else if (n.backward) {
      n.backward(*this, static_cast<std::uint32_t>(i));
    }
  }
  ParamStore grads;
  for (const auto& [name, value] : params) {
    auto it = reached.find(name);
    if (it != reached.end() && it->second.shape() == value.shape())
      grads.insert(name, std::move(it->second));
    else
      grads.insert(name, Tensor(value.shape()));
  }
  return grads;
}

}  // namespace dfx::nn
