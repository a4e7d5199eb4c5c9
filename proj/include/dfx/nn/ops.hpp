#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dfx/nn/tape.hpp"

namespace dfx::nn {

// Every op validates shapes (ConfigError) and rejects non-finite results
// (NumericError). Matrices are rank-2; rank-1 operands act as one row.

// a[m×k]·b[k×n], or a·bᵀ when transpose_b (b is [n×k]).
Var matmul(Var a, Var b, bool transpose_b = false);
Var transpose(Var a);
// x·w + b with w [in×out] and b a row of width out.
Var linear(Var x, Var w, Var b);
// Scaled dot-product attention split into `heads` column blocks:
// q [m×d], k and v [n×d] → [m×d]. No masking.
Var multi_head_attention(Var q, Var k, Var v, std::size_t heads);
// Elementwise; b may also be a single row broadcast over a's rows.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var multiply(Var a, Var b);
Var scale(Var a, double factor);
Var concat(std::span<const Var> parts, std::size_t axis);
Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end);
// Gathers rows of `table` ([vocab×d]) → [ids.size()×d].
Var embedding_lookup(Var table, std::span<const int> ids);
// Per-row normalization followed by gamma/beta affine transform.
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-12);
Var softmax(Var x, std::size_t axis = 1);
Var relu(Var x);
// Exact form 0.5·x·(1 + erf(x/√2)).
Var gelu(Var x);
Var tanh(Var x);
Var sigmoid(Var x);
Var abs(Var x);
Var sum(Var x);
// -log softmax(logits)[label] for a 2-class logit row; label in {0, 1}.
Var cross_entropy(Var logits, int label);

// Non-differentiable helpers for inference paths.
std::vector<double> softmax_values(std::span<const double> logits);

}  // namespace dfx::nn
