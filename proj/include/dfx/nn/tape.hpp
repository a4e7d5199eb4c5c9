#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dfx/nn/param_store.hpp"
#include "dfx/nn/tensor.hpp"

namespace dfx::nn {

class Tape;

// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  Tape& tape() const { return *tape_; }
  std::uint32_t id() const noexcept { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

// Records one forward pass. Nodes are appended in evaluation order, so every
// node's inputs precede it and reverse order is a valid backward schedule.
class Tape {
 public:
  // Backward closures receive their own node id; they read the output
  // gradient with grad(self) and accumulate into inputs through grad(id).
  using Backward = std::function<void(Tape&, std::uint32_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf bound to a named parameter; the value is copied onto the tape.
  Var parameter(const ParamStore& params, const std::string& name);

  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  const Tensor& value_at(std::uint32_t id) const { return nodes_[id].value; }
  bool requires_grad_at(std::uint32_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Used by op implementations.
  Var record(Tensor value, bool requires_grad, Backward backward);
  // Gradient buffer of a node, allocated as zeros on first use.
  Tensor& grad(std::uint32_t id);

  // Reverse sweep from a scalar loss. Returns one gradient per entry of
  // `params`; parameters the loss does not reach get zeros. Throws
  // ConfigError if `loss` is not a scalar.
  ParamStore backward(Var loss, const ParamStore& params);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
    int param_index = -1;
  };
  std::vector<Node> nodes_;
  std::vector<std::string> param_names_;
};

}  // namespace dfx::nn
