#include "uvit/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

#include "uvit/errors.hpp"
#include "uvit/kernels.hpp"
#include "uvit/ops.hpp"

namespace uvit::ad {

namespace detail {

using Pullback = std::function<void(const Tensor& grad)>;

struct Node {
  std::uint64_t id;
  Tensor value;
  Tensor grad;
  bool grad_ready = false;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  Pullback pullback;

  void accumulate(const Tensor& g) {
    if (!requires_grad) return;
    if (!grad_ready) {
      grad = Tensor(value.dims());
      grad_ready = true;
    }
    kernels::active().axpy(1.0, g.raw(), grad.raw(), grad.size());
  }

  double* grad_buffer() {
    if (!grad_ready) {
      grad = Tensor(value.dims());
      grad_ready = true;
    }
    return grad.raw();
  }
};

}  // namespace detail

using detail::Node;

namespace {

std::uint64_t next_id() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

std::shared_ptr<Node> make_leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->id = next_id();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return node;
}

void require_defined(const Var& v) {
  if (!v.defined()) throw ContractError("operation on an undefined Var");
}

// Builds a result node. The pullback is kept only when some input needs a
// gradient; make_pullback is not even invoked otherwise.
template <typename MakePullback>
Var record(Tensor value, std::initializer_list<const Var*> inputs, MakePullback&& make_pullback) {
  bool needs = false;
  for (const Var* v : inputs) {
    require_defined(*v);
    needs = needs || v->requires_grad();
  }
  auto node = make_leaf(std::move(value), needs);
  if (needs) {
    for (const Var* v : inputs) node->parents.push_back(v->node());
    node->pullback = make_pullback();
  }
  return Var(std::move(node));
}

Var record_many(Tensor value, std::span<const Var> inputs,
                const std::function<detail::Pullback()>& make_pullback) {
  bool needs = false;
  for (const Var& v : inputs) {
    require_defined(v);
    needs = needs || v.requires_grad();
  }
  auto node = make_leaf(std::move(value), needs);
  if (needs) {
    for (const Var& v : inputs) node->parents.push_back(v.node());
    node->pullback = make_pullback();
  }
  return Var(std::move(node));
}

}  // namespace

Var Var::parameter(Tensor value) { return Var(make_leaf(std::move(value), true)); }
Var Var::constant(Tensor value) { return Var(make_leaf(std::move(value), false)); }

const Tensor& Var::value() const {
  require_defined(*this);
  return node_->value;
}

bool Var::requires_grad() const { return node_ && node_->requires_grad; }

Tensor Var::grad() const {
  require_defined(*this);
  if (!node_->grad_ready) return Tensor(node_->value.dims());
  return node_->grad;
}

std::uint64_t Var::id() const {
  require_defined(*this);
  return node_->id;
}

void backward(const Var& output) {
  require_defined(output);
  if (output.value().size() != 1) {
    throw ContractError("backward needs a scalar output, got shape " + output.value().shape_string());
  }
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{output.node().get()};
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    if (!n->requires_grad || !seen.insert(n).second) continue;
    order.push_back(n);
    for (const auto& p : n->parents) stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->id > b->id; });
  for (Node* n : order) n->grad_ready = false;
  if (order.empty()) return;

  output.node()->accumulate(Tensor::scalar(1.0));
  for (Node* n : order) {
    if (n->pullback && n->grad_ready) n->pullback(n->grad);
  }
}

Var matmul(const Var& a, const Var& b) {
  Tensor value = ops::matmul(a.value(), b.value());
  auto an = a.node(), bn = b.node();
  return record(std::move(value), {&a, &b}, [an, bn] {
    return [an, bn](const Tensor& g) {
      if (an->requires_grad) an->accumulate(ops::matmul(g, ops::transpose(bn->value)));
      if (bn->requires_grad) bn->accumulate(ops::matmul(ops::transpose(an->value), g));
    };
  });
}

Var transpose(const Var& m) {
  Tensor value = ops::transpose(m.value());
  auto mn = m.node();
  return record(std::move(value), {&m}, [mn] {
    return [mn](const Tensor& g) { mn->accumulate(ops::transpose(g)); };
  });
}

Var add(const Var& a, const Var& b) {
  Tensor value = ops::add(a.value(), b.value());
  auto an = a.node(), bn = b.node();
  return record(std::move(value), {&a, &b}, [an, bn] {
    return [an, bn](const Tensor& g) {
      an->accumulate(g);
      bn->accumulate(g);
    };
  });
}

Var mul(const Var& a, const Var& b) {
  Tensor value = ops::mul(a.value(), b.value());
  auto an = a.node(), bn = b.node();
  return record(std::move(value), {&a, &b}, [an, bn] {
    return [an, bn](const Tensor& g) {
      if (an->requires_grad) an->accumulate(ops::mul(g, bn->value));
      if (bn->requires_grad) bn->accumulate(ops::mul(g, an->value));
    };
  });
}

Var scale(const Var& x, double alpha) {
  Tensor value = ops::scale(x.value(), alpha);
  auto xn = x.node();
  return record(std::move(value), {&x}, [xn, alpha] {
    return [xn, alpha](const Tensor& g) { xn->accumulate(ops::scale(g, alpha)); };
  });
}

Var add_row_vector(const Var& x, const Var& bias) {
  Tensor value = ops::add_row_vector(x.value(), bias.value());
  auto xn = x.node(), bn = bias.node();
  return record(std::move(value), {&x, &bias}, [xn, bn] {
    return [xn, bn](const Tensor& g) {
      xn->accumulate(g);
      if (bn->requires_grad) {
        const std::size_t n = bn->value.size();
        double* out = bn->grad_buffer();
        for (std::size_t r = 0; r < g.size() / n; ++r) kernels::active().axpy(1.0, g.raw() + r * n, out, n);
      }
    };
  });
}

Var softmax_rows(const Var& m) {
  Tensor value = ops::softmax_rows(m.value());
  auto mn = m.node();
  return record(value, {&m}, [mn, s = value] {
    return [mn, s](const Tensor& g) {
      const std::size_t rows = s.dim(0), cols = s.dim(1);
      Tensor dx(s.dims());
      for (std::size_t r = 0; r < rows; ++r) {
        const double* sr = s.raw() + r * cols;
        const double* gr = g.raw() + r * cols;
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += gr[c] * sr[c];
        for (std::size_t c = 0; c < cols; ++c) dx[r * cols + c] = sr[c] * (gr[c] - dot);
      }
      mn->accumulate(dx);
    };
  });
}

Var layernorm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  Tensor value = ops::layernorm(x.value(), gamma.value(), beta.value(), eps);
  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return record(std::move(value), {&x, &gamma, &beta}, [xn, gn, bn, eps] {
    return [xn, gn, bn, eps](const Tensor& g) {
      const Tensor& xv = xn->value;
      const Tensor& gam = gn->value;
      const std::size_t d = xv.dims().back();
      const std::size_t rows = xv.size() / d;
      Tensor dx(xv.dims());
      Tensor dgamma(gam.dims());
      Tensor dbeta(gam.dims());
      std::vector<double> xhat(d), dxhat(d);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.raw() + r * d;
        const double* gr = g.raw() + r * d;
        double mean = 0.0;
        for (std::size_t i = 0; i < d; ++i) mean += in[i];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t i = 0; i < d; ++i) var += (in[i] - mean) * (in[i] - mean);
        var /= static_cast<double>(d);
        const double rstd = 1.0 / std::sqrt(var + eps);
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          xhat[i] = (in[i] - mean) * rstd;
          dxhat[i] = gr[i] * gam[i];
          m1 += dxhat[i];
          m2 += dxhat[i] * xhat[i];
          dgamma[i] += gr[i] * xhat[i];
          dbeta[i] += gr[i];
        }
        m1 /= static_cast<double>(d);
        m2 /= static_cast<double>(d);
        for (std::size_t i = 0; i < d; ++i) dx[r * d + i] = rstd * (dxhat[i] - m1 - xhat[i] * m2);
      }
      xn->accumulate(dx);
      gn->accumulate(dgamma);
      bn->accumulate(dbeta);
    };
  });
}

Var gelu(const Var& x) {
  Tensor value = ops::gelu(x.value());
  auto xn = x.node();
  return record(std::move(value), {&x}, [xn] {
    return [xn](const Tensor& g) {
      Tensor dx(g.dims());
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] = g[i] * ops::gelu_derivative(xn->value[i]);
      xn->accumulate(dx);
    };
  });
}

Var bilinear_resize(const Var& grid, std::size_t th, std::size_t tw) {
  Tensor value = ops::bilinear_resize(grid.value(), th, tw);
  auto gn = grid.node();
  return record(std::move(value), {&grid}, [gn, th, tw] {
    return [gn, th, tw](const Tensor& g) {
      const std::size_t h = gn->value.dim(0), w = gn->value.dim(1), c = gn->value.dim(2);
      Tensor dx(gn->value.dims());
      for (std::size_t y = 0; y < th; ++y) {
        const ops::ResampleTap ty = ops::resample_tap(y, h, th);
        for (std::size_t x = 0; x < tw; ++x) {
          const ops::ResampleTap tx = ops::resample_tap(x, w, tw);
          const double w00 = (1.0 - ty.t) * (1.0 - tx.t), w01 = (1.0 - ty.t) * tx.t;
          const double w10 = ty.t * (1.0 - tx.t), w11 = ty.t * tx.t;
          const double* gr = g.raw() + (y * tw + x) * c;
          for (std::size_t ch = 0; ch < c; ++ch) {
            dx[(ty.lo * w + tx.lo) * c + ch] += w00 * gr[ch];
            dx[(ty.lo * w + tx.hi) * c + ch] += w01 * gr[ch];
            dx[(ty.hi * w + tx.lo) * c + ch] += w10 * gr[ch];
            dx[(ty.hi * w + tx.hi) * c + ch] += w11 * gr[ch];
          }
        }
      }
      gn->accumulate(dx);
    };
  });
}

Var reshape(const Var& x, Dims dims) {
  Tensor value = x.value().reshaped(std::move(dims));
  auto xn = x.node();
  return record(std::move(value), {&x}, [xn] {
    return [xn](const Tensor& g) { xn->accumulate(g.reshaped(xn->value.dims())); };
  });
}

Var sum(const Var& x) {
  Tensor value = Tensor::scalar(ops::sum(x.value()));
  auto xn = x.node();
  return record(std::move(value), {&x}, [xn] {
    return [xn](const Tensor& g) { xn->accumulate(Tensor(xn->value.dims(), g[0])); };
  });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var gather_rows(const Var& m, std::span<const std::size_t> rows) {
  const Tensor& mv = m.value();
  if (mv.rank() != 2) throw DimensionError("gather_rows expects a matrix, got " + mv.shape_string());
  if (rows.empty()) throw DimensionError("gather_rows: empty row selection");
  const std::size_t cols = mv.dim(1);
  Tensor value({rows.size(), cols});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= mv.dim(0)) throw DimensionError("gather_rows: row index out of range");
    std::copy_n(mv.raw() + rows[i] * cols, cols, value.raw() + i * cols);
  }
  auto mn = m.node();
  return record(std::move(value), {&m}, [mn, idx = std::vector<std::size_t>(rows.begin(), rows.end()), cols] {
    return [mn, idx, cols](const Tensor& g) {
      double* out = mn->grad_buffer();
      for (std::size_t i = 0; i < idx.size(); ++i)
        kernels::active().axpy(1.0, g.raw() + i * cols, out + idx[i] * cols, cols);
    };
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: nothing to concatenate");
  const std::size_t cols = parts.front().value().dim(1);
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.value().rank() != 2 || p.value().dim(1) != cols) {
      throw DimensionError("concat_rows: part " + p.value().shape_string() + " has wrong width");
    }
    rows += p.value().dim(0);
  }
  Tensor value({rows, cols});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy_n(p.value().raw(), p.value().size(), value.raw() + offset);
    offset += p.value().size();
  }
  std::vector<std::shared_ptr<Node>> nodes;
  for (const Var& p : parts) nodes.push_back(p.node());
  return record_many(std::move(value), parts, [nodes] {
    return detail::Pullback([nodes](const Tensor& g) {
      std::size_t off = 0;
      for (const auto& n : nodes) {
        const std::size_t len = n->value.size();
        if (n->requires_grad) kernels::active().axpy(1.0, g.raw() + off, n->grad_buffer(), len);
        off += len;
      }
    });
  });
}

Var slice_cols(const Var& m, std::size_t begin, std::size_t count) {
  const Tensor& mv = m.value();
  if (mv.rank() != 2 || count == 0 || begin + count > mv.dim(1)) {
    throw DimensionError("slice_cols: columns [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for " + mv.shape_string());
  }
  const std::size_t rows = mv.dim(0), cols = mv.dim(1);
  Tensor value({rows, count});
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(mv.raw() + r * cols + begin, count, value.raw() + r * count);
  auto mn = m.node();
  return record(std::move(value), {&m}, [mn, begin, count, rows, cols] {
    return [mn, begin, count, rows, cols](const Tensor& g) {
      double* out = mn->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        kernels::active().axpy(1.0, g.raw() + r * count, out + r * cols + begin, count);
    };
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: nothing to concatenate");
  const std::size_t rows = parts.front().value().dim(0);
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.value().rank() != 2 || p.value().dim(0) != rows) {
      throw DimensionError("concat_cols: part " + p.value().shape_string() + " has wrong height");
    }
    cols += p.value().dim(1);
  }
  Tensor value({rows, cols});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const std::size_t pc = p.value().dim(1);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(p.value().raw() + r * pc, pc, value.raw() + r * cols + offset);
    offset += pc;
  }
  std::vector<std::shared_ptr<Node>> nodes;
  for (const Var& p : parts) nodes.push_back(p.node());
  return record_many(std::move(value), parts, [nodes, rows, cols] {
    return detail::Pullback([nodes, rows, cols](const Tensor& g) {
      std::size_t off = 0;
      for (const auto& n : nodes) {
        const std::size_t pc = n->value.dim(1);
        if (n->requires_grad) {
          double* out = n->grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            kernels::active().axpy(1.0, g.raw() + r * cols + off, out + r * pc, pc);
        }
        off += pc;
      }
    });
  });
}

Var gather(const Var& x, std::span<const std::size_t> index, Dims dims) {
  if (index.size() != dims_product(dims)) {
    throw DimensionError("gather: " + std::to_string(index.size()) + " indices for output " +
                         dims_string(dims));
  }
  const Tensor& xv = x.value();
  Tensor value(std::move(dims));
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= xv.size()) throw DimensionError("gather: index out of range");
    value[i] = xv[index[i]];
  }
  auto xn = x.node();
  return record(std::move(value), {&x}, [xn, idx = std::vector<std::size_t>(index.begin(), index.end())] {
    return [xn, idx](const Tensor& g) {
      double* out = xn->grad_buffer();
      for (std::size_t i = 0; i < idx.size(); ++i) out[idx[i]] += g[i];
    };
  });
}

}  // namespace uvit::ad
