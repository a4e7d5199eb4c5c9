#include "dfx/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <type_traits>

#include <Eigen/Core>

#include "dfx/core/error.hpp"

namespace dfx::nn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
MutMap as_matrix(Tensor& t) {
  return MutMap(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

// `detail` is either a string or a callable producing one, so messages are
// only assembled on failure.
template <class Detail>
void require(bool ok, const char* op, Detail&& detail) {
  if (ok) return;
  if constexpr (std::is_invocable_v<Detail>)
    throw ConfigError(std::string(op) + ": " + detail());
  else
    throw ConfigError(std::string(op) + ": " + detail);
}

void require_matrix(const Tensor& t, const char* op) {
  require(t.rank() >= 1 && t.rank() <= 2, op,
          [&] { return "expected a rank-1 or rank-2 tensor, got " + shape_string(t.shape()); });
}

bool needs(const Tape& t, Var v) { return t.requires_grad(v); }

Shape matrix_shape(std::size_t rows, std::size_t cols, bool as_row) {
  if (as_row && rows == 1) return {cols};
  return {rows, cols};
}

template <class F, class DF>
Var unary(Var x, F f, DF df) {
  Tape& tape = x.tape();
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  if (!needs(tape, x)) return tape.record(std::move(out), false, nullptr);
  const std::uint32_t xi = x.id();
  return tape.record(std::move(out), true, [xi, df](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value_at(xi);
    const Tensor& yv = t.value_at(self);
    Tensor& gx = t.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xv[i], yv[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b, bool transpose_b) {
  Tape& tape = a.tape();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "matmul");
  require_matrix(bv, "matmul");
  const std::size_t inner_b = transpose_b ? bv.cols() : bv.rows();
  const std::size_t n = transpose_b ? bv.rows() : bv.cols();
  require(av.cols() == inner_b, "matmul", [&] {
    return "shape mismatch " + shape_string(av.shape()) + " x " + shape_string(bv.shape()) + (transpose_b ? "^T" : "");
  });
  Tensor out(matrix_shape(av.rows(), n, av.rank() == 1));
  if (transpose_b)
    as_matrix(out).noalias() = as_matrix(av) * as_matrix(bv).transpose();
  else
    as_matrix(out).noalias() = as_matrix(av) * as_matrix(bv);
  const bool ga = needs(tape, a), gb = needs(tape, b);
  if (!ga && !gb) return tape.record(std::move(out), false, nullptr);
  const std::uint32_t ai = a.id(), bi = b.id();
  return tape.record(std::move(out), true, [ai, bi, ga, gb, transpose_b](Tape& t, std::uint32_t self) {
    const auto g = as_matrix(t.grad(self));
    const auto am = as_matrix(t.value_at(ai));
    const auto bm = as_matrix(t.value_at(bi));
    if (ga) {
      if (transpose_b)
        as_matrix(t.grad(ai)).noalias() += g * bm;
      else
        as_matrix(t.grad(ai)).noalias() += g * bm.transpose();
    }
    if (gb) {
      if (transpose_b)
        as_matrix(t.grad(bi)).noalias() += g.transpose() * am;
      else
        as_matrix(t.grad(bi)).noalias() += am.transpose() * g;
    }
  });
}

Var transpose(Var a) {
  Tape& tape = a.tape();
  const Tensor& av = a.value();
  require_matrix(av, "transpose");
  Tensor out({av.cols(), av.rows()});
  as_matrix(out) = as_matrix(av).transpose();
  if (!needs(tape, a)) return tape.record(std::move(out), false, nullptr);
  const std::uint32_t ai = a.id();
  return tape.record(std::move(out), true, [ai](Tape& t, std::uint32_t self) {
    as_matrix(t.grad(ai)) += as_matrix(t.grad(self)).transpose();
  });
}

Var linear(Var x, Var w, Var b) {
  Tape& tape = x.tape();
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  require_matrix(xv, "linear");
  require(wv.rank() == 2 && wv.rows() == xv.cols(), "linear",
          [&] { return "shape mismatch " + shape_string(xv.shape()) + " x " + shape_string(wv.shape()); });
  require(bv.size() == wv.cols(), "linear",
          [&] { return "bias width " + std::to_string(bv.size()) + " != " + std::to_string(wv.cols()); });
  Tensor out(matrix_shape(xv.rows(), wv.cols(), xv.rank() == 1));
  auto om = as_matrix(out);
  om.noalias() = as_matrix(xv) * as_matrix(wv);
  om.rowwise() += as_matrix(bv).row(0);
  const bool gx = needs(tape, x), gw = needs(tape, w), gb = needs(tape, b);
  if (!gx && !gw && !gb) return tape.record(std::move(out), false, nullptr);
  const std::uint32_t xi = x.id(), wi = w.id(), bi = b.id();
  return tape.record(std::move(out), true, [=](Tape& t, std::uint32_t self) {
    const auto g = as_matrix(t.grad(self));
    if (gx) as_matrix(t.grad(xi)).noalias() += g * as_matrix(t.value_at(wi)).transpose();
    if (gw) as_matrix(t.grad(wi)).noalias() += as_matrix(t.value_at(xi)).transpose() * g;
    if (gb) {
      // Explicit loop: Eigen's vectorized reductions over a Map sum in an
      // order that depends on the buffer's address.
      Tensor& gbias = t.grad(bi);
      for (Eigen::Index r = 0; r < g.rows(); ++r)
        for (Eigen::Index c = 0; c < g.cols(); ++c) gbias[static_cast<std::size_t>(c)] += g(r, c);
    }
  });
}

Var multi_head_attention(Var q, Var k, Var v, std::size_t heads) {
  Tape& tape = q.tape();
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  require(qv.rank() == 2 && kv.rank() == 2 && vv.rank() == 2, "multi_head_attention", "operands must be rank 2");
  const std::size_t d = qv.cols();
  require(kv.cols() == d && vv.cols() == d && kv.rows() == vv.rows(), "multi_head_attention", [&] {
    return "shape mismatch q " + shape_string(qv.shape()) + ", k " + shape_string(kv.shape()) + ", v " +
           shape_string(vv.shape());
  });
  require(heads > 0 && d % heads == 0, "multi_head_attention", "width not divisible by head count");
  const auto m = static_cast<Eigen::Index>(qv.rows());
  const auto dk = static_cast<Eigen::Index>(d / heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));

  auto probs = std::make_shared<std::vector<RowMatrix>>(heads);
  Tensor out({qv.rows(), d});
  const auto qm = as_matrix(qv), km = as_matrix(kv), vm = as_matrix(vv);
  auto om = as_matrix(out);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto c0 = static_cast<Eigen::Index>(h) * dk;
    RowMatrix s = inv_sqrt * (qm.middleCols(c0, dk) * km.middleCols(c0, dk).transpose());
    for (Eigen::Index r = 0; r < m; ++r) {
      double mx = -INFINITY, total = 0.0;
      for (Eigen::Index c = 0; c < s.cols(); ++c) mx = std::max(mx, s(r, c));
      for (Eigen::Index c = 0; c < s.cols(); ++c) total += s(r, c) = std::exp(s(r, c) - mx);
      for (Eigen::Index c = 0; c < s.cols(); ++c) s(r, c) /= total;
    }
    om.middleCols(c0, dk).noalias() = s * vm.middleCols(c0, dk);
    (*probs)[h] = std::move(s);
  }
  const bool gq = needs(tape, q), gk = needs(tape, k), gv = needs(tape, v);
  if (!gq && !gk && !gv) return tape.record(std::move(out), false, nullptr);
  const std::uint32_t qi = q.id(), ki = k.id(), vi = v.id();
  return tape.record(std::move(out), true, [=](Tape& t, std::uint32_t self) {
    const auto g = as_matrix(t.grad(self));
    const auto qm = as_matrix(t.value_at(qi)), km = as_matrix(t.value_at(ki)), vm = as_matrix(t.value_at(vi));
    for (std::size_t h = 0; h < heads; ++h) {
      const auto c0 = static_cast<Eigen::Index>(h) * dk;
      const RowMatrix& p = (*probs)[h];
      const auto gh = g.middleCols(c0, dk);
      if (gv) as_matrix(t.grad(vi)).middleCols(c0, dk).noalias() += p.transpose() * gh;
      if (!gq && !gk) continue;
      RowMatrix dp = gh * vm.middleCols(c0, dk).transpose();
      // Softmax Jacobian per row, then the 1/sqrt(dk) scale.
      RowMatrix ds(p.rows(), p.cols());
      for (Eigen::Index r = 0; r < p.rows(); ++r) {
        double dot = 0.0;
        for (Eigen::Index c = 0; c < p.cols(); ++c) dot += dp(r, c) * p(r, c);
        for (Eigen::Index c = 0; c < p.cols(); ++c) ds(r, c) = inv_sqrt * p(r, c) * (dp(r, c) - dot);
      }
      if (gq) as_matrix(t.grad(qi)).middleCols(c0, dk).noalias() += ds * km.middleCols(c0, dk);
      if (gk) as_matrix(t.grad(ki)).middleCols(c0, dk).noalias() += ds.transpose() * qm.middleCols(c0, dk);
    }
  });
}

namespace {

// Elementwise binary op where b is either the same shape as a or one row
// broadcast across a's rows.
template <class F, class DA, class DB>
Var binary(Var a, Var b, const char* name, F f, DA da, DB db) {
  Tape& tape = a.tape();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool same = av.shape() == bv.shape();
  const bool row_broadcast = !same && av.rank() == 2 && bv.size() == av.cols() && bv.rows() == 1;
  require(same || row_broadcast, name,
          [&] { return "shape mismatch " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()); });
  const std::size_t cols = av.cols();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i], bv[same ? i : i % cols]);
  const bool ga = needs(tape, a), gb = needs(tape, b);
  if (!ga && !gb) return tape.record(std::move(out), false, nullptr);
  const std::uint32_t ai = a.id(), bi = b.id();
  return tape.record(std::move(out), true, [=](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value_at(ai);
    const Tensor& y = t.value_at(bi);
    if (ga) {
      Tensor& gx = t.grad(ai);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * da(x[i], y[same ? i : i % cols]);
    }
    if (gb) {
      Tensor& gy = t.grad(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gy[same ? i : i % cols] += g[i] * db(x[i], y[same ? i : i % cols]);
    }
  });
}

}  // namespace

Var add(Var a, Var b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var multiply(Var a, Var b) {
  return binary(
      a, b, "multiply", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var scale(Var a, double factor) {
  return unary(a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  require(!parts.empty(), "concat", "no inputs");
  require(axis <= 1, "concat", "axis must be 0 or 1");
  Tape& tape = parts.front().tape();
  const std::size_t rows0 = parts.front().value().rows();
  const std::size_t cols0 = parts.front().value().cols();
  std::size_t total = 0;
  bool grad = false;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    require_matrix(v, "concat");
    if (axis == 0) {
      require(v.cols() == cols0, "concat", "column counts differ");
      total += v.rows();
    } else {
      require(v.rows() == rows0, "concat", "row counts differ");
      total += v.cols();
    }
    grad = grad || needs(tape, p);
  }
  Tensor out(axis == 0 ? Shape{total, cols0} : Shape{rows0, total});
  std::vector<std::uint32_t> ids;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    if (axis == 0)
      as_matrix(out).middleRows(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(v.rows())) = as_matrix(v);
    else
      as_matrix(out).middleCols(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(v.cols())) = as_matrix(v);
    offset += axis == 0 ? v.rows() : v.cols();
    ids.push_back(p.id());
  }
  if (!grad) return tape.record(std::move(out), false, nullptr);
  return tape.record(std::move(out), true, [ids, axis](Tape& t, std::uint32_t self) {
    const auto g = as_matrix(t.grad(self));
    Eigen::Index offset = 0;
    for (std::uint32_t id : ids) {
      const Tensor& v = t.value_at(id);
      const auto r = static_cast<Eigen::Index>(v.rows()), c = static_cast<Eigen::Index>(v.cols());
      if (t.requires_grad_at(id)) {
        if (axis == 0)
          as_matrix(t.grad(id)) += g.middleRows(offset, r);
        else
          as_matrix(t.grad(id)) += g.middleCols(offset, c);
      }
      offset += axis == 0 ? r : c;
    }
  });
}

Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  Tape& tape = a.tape();
  const Tensor& av = a.value();
  require_matrix(av, "slice");
  require(axis <= 1, "slice", "axis must be 0 or 1");
  const std::size_t extent = axis == 0 ? av.rows() : av.cols();
  require(begin < end && end <= extent, "slice", [&] {
    return "range [" + std::to_string(begin) + ", " + std::to_string(end) + ") outside extent " +
           std::to_string(extent);
  });
  const auto b = static_cast<Eigen::Index>(begin), n = static_cast<Eigen::Index>(end - begin);
  Tensor out(axis == 0 ? matrix_shape(end - begin, av.cols(), av.rank() == 1)
                       : matrix_shape(av.rows(), end - begin, av.rank() == 1));
  if (axis == 0)
    as_matrix(out) = as_matrix(av).middleRows(b, n);
  else
    as_matrix(out) = as_matrix(av).middleCols(b, n);
  if (!needs(tape, a)) return tape.record(std::move(out), false, nullptr);
  const std::uint32_t ai = a.id();
  return tape.record(std::move(out), true, [ai, axis, b, n](Tape& t, std::uint32_t self) {
    const auto g = as_matrix(t.grad(self));
    if (axis == 0)
      as_matrix(t.grad(ai)).middleRows(b, n) += g;
    else
      as_matrix(t.grad(ai)).middleCols(b, n) += g;
  });
}

Var embedding_lookup(Var table, std::span<const int> ids) {
  Tape& tape = table.tape();
  const Tensor& tv = table.value();
  require(tv.rank() == 2, "embedding_lookup", "table must be rank 2");
  const std::size_t d = tv.cols();
  Tensor out({ids.size(), d});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    require(ids[r] >= 0 && static_cast<std::size_t>(ids[r]) < tv.rows(), "embedding_lookup",
            [&] { return "id " + std::to_string(ids[r]) + " outside vocabulary of " + std::to_string(tv.rows()); });
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[r]) * d, d, out.data() + r * d);
  }
  if (!needs(tape, table)) return tape.record(std::move(out), false, nullptr);
  const std::uint32_t ti = table.id();
  std::vector<int> rows(ids.begin(), ids.end());
  return tape.record(std::move(out), true, [ti, rows = std::move(rows), d](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gt = t.grad(ti);
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < d; ++c) gt[static_cast<std::size_t>(rows[r]) * d + c] += g[r * d + c];
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Tape& tape = x.tape();
  const Tensor& xv = x.value();
  require_matrix(xv, "layer_norm");
  const std::size_t rows = xv.rows(), d = xv.cols();
  require(gamma.value().size() == d && beta.value().size() == d, "layer_norm",
          [&] { return "affine parameters must have width " + std::to_string(d); });
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  Tensor out(xv.shape());
  Tensor normalized(xv.shape());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mean = 0.0;
    for (std::size_t c = 0; c < d; ++c) mean += row[c];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      const double xh = (row[c] - mean) * inv_std[r];
      normalized[r * d + c] = xh;
      out[r * d + c] = gv[c] * xh + bv[c];
    }
  }
  if (!needs(tape, x) && !needs(tape, gamma) && !needs(tape, beta)) return tape.record(std::move(out), false, nullptr);
  const std::uint32_t xi = x.id(), gi = gamma.id(), bi = beta.id();
  return tape.record(std::move(out), true,
                     [xi, gi, bi, rows, d, normalized = std::move(normalized), inv_std = std::move(inv_std)](
                         Tape& t, std::uint32_t self) {
                       const Tensor& g = t.grad(self);
                       const Tensor& gv = t.value_at(gi);
                       if (t.requires_grad_at(gi)) {
                         Tensor& gg = t.grad(gi);
                         for (std::size_t i = 0; i < g.size(); ++i) gg[i % d] += g[i] * normalized[i];
                       }
                       if (t.requires_grad_at(bi)) {
                         Tensor& gb = t.grad(bi);
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i % d] += g[i];
                       }
                       if (t.requires_grad_at(xi)) {
                         Tensor& gx = t.grad(xi);
                         for (std::size_t r = 0; r < rows; ++r) {
                           double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                           for (std::size_t c = 0; c < d; ++c) {
                             const double dxh = g[r * d + c] * gv[c];
                             mean_dxh += dxh;
                             mean_dxh_xh += dxh * normalized[r * d + c];
                           }
                           mean_dxh /= static_cast<double>(d);
                           mean_dxh_xh /= static_cast<double>(d);
                           for (std::size_t c = 0; c < d; ++c) {
                             const double dxh = g[r * d + c] * gv[c];
                             gx[r * d + c] += inv_std[r] * (dxh - mean_dxh - normalized[r * d + c] * mean_dxh_xh);
                           }
                         }
                       }
                     });
}

Var softmax(Var x, std::size_t axis) {
  Tape& tape = x.tape();
  const Tensor& xv = x.value();
  require_matrix(xv, "softmax");
  require(axis <= 1, "softmax", "axis must be 0 or 1");
  const std::size_t rows = xv.rows(), cols = xv.cols();
  // Normalize along `axis`: lines are rows for axis 1, columns for axis 0.
  const std::size_t lines = axis == 1 ? rows : cols, len = axis == 1 ? cols : rows;
  const std::size_t line_stride = axis == 1 ? cols : 1, elem_stride = axis == 1 ? 1 : cols;
  Tensor out(xv.shape());
  for (std::size_t l = 0; l < lines; ++l) {
    const std::size_t base = l * line_stride;
    double mx = -INFINITY;
    for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, xv[base + k * elem_stride]);
    double total = 0.0;
    for (std::size_t k = 0; k < len; ++k) {
      const double e = std::exp(xv[base + k * elem_stride] - mx);
      out[base + k * elem_stride] = e;
      total += e;
    }
    for (std::size_t k = 0; k < len; ++k) out[base + k * elem_stride] /= total;
  }
  if (!needs(tape, x)) return tape.record(std::move(out), false, nullptr);
  const std::uint32_t xi = x.id();
  return tape.record(std::move(out), true, [xi, lines, len, line_stride, elem_stride](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value_at(self);
    Tensor& gx = t.grad(xi);
    for (std::size_t l = 0; l < lines; ++l) {
      const std::size_t base = l * line_stride;
      double dot = 0.0;
      for (std::size_t k = 0; k < len; ++k) dot += g[base + k * elem_stride] * y[base + k * elem_stride];
      for (std::size_t k = 0; k < len; ++k) {
        const std::size_t i = base + k * elem_stride;
        gx[i] += y[i] * (g[i] - dot);
      }
    }
  });
}

Var relu(Var x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var gelu(Var x) {
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); },
      [](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
        const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
        return cdf + v * pdf;
      });
}

Var tanh(Var x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var abs(Var x) {
  return unary(
      x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var sum(Var x) {
  Tape& tape = x.tape();
  const Tensor& xv = x.value();
  double total = 0.0;
  for (double v : xv.values()) total += v;
  if (!needs(tape, x)) return tape.record(Tensor::scalar(total), false, nullptr);
  const std::uint32_t xi = x.id();
  return tape.record(Tensor::scalar(total), true, [xi](Tape& t, std::uint32_t self) {
    const double g = t.grad(self)[0];
    Tensor& gx = t.grad(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

std::vector<double> softmax_values(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) total += out[i] = std::exp(logits[i] - mx);
  for (double& v : out) v /= total;
  return out;
}

Var cross_entropy(Var logits, int label) {
  Tape& tape = logits.tape();
  const Tensor& lv = logits.value();
  require(lv.size() == 2, "cross_entropy", [&] { return "expected 2 logits, got shape " + shape_string(lv.shape()); });
  require(label == 0 || label == 1, "cross_entropy", "label must be 0 or 1");
  const double mx = std::max(lv[0], lv[1]);
  const double lse = mx + std::log(std::exp(lv[0] - mx) + std::exp(lv[1] - mx));
  const double loss = lse - lv[static_cast<std::size_t>(label)];
  if (!needs(tape, logits)) return tape.record(Tensor::scalar(loss), false, nullptr);
  const std::uint32_t li = logits.id();
  return tape.record(Tensor::scalar(loss), true, [li, label](Tape& t, std::uint32_t self) {
    const double g = t.grad(self)[0];
    const Tensor& lv = t.value_at(li);
    const auto p = softmax_values(lv.values());
    Tensor& gl = t.grad(li);
    for (std::size_t k = 0; k < 2; ++k) gl[k] += g * (p[k] - (static_cast<int>(k) == label ? 1.0 : 0.0));
  });
}

}  // namespace dfx::nn
