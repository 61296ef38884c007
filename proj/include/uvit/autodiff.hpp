#pragma once

// Reverse-mode differentiation over Tensor values.
//
// Each Var owns a node in a DAG. A node created from inputs that require
// gradients remembers its parents and a pullback; otherwise it keeps only its
// value, so inference-only evaluation frees intermediates as soon as the
// Vars holding them go away. Node ids grow monotonically with creation, so
// every node's inputs precede it and sorting by id is a topological order.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "uvit/tensor.hpp"

namespace uvit::ad {

namespace detail {
struct Node;
}

class Var {
 public:
  Var() = default;

  /// Leaf whose gradient is wanted.
  static Var parameter(Tensor value);
  /// Leaf treated as a constant.
  static Var constant(Tensor value);

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor& value() const;
  const Dims& dims() const { return value().dims(); }
  bool requires_grad() const;
  /// Gradient after backward(); zeros if the node was not reached.
  Tensor grad() const;
  std::uint64_t id() const;

  explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Accumulates d(output)/d(leaf) into every reachable node that requires a
/// gradient. Previous gradients of reachable nodes are cleared first. Throws
/// ContractError when output is not a one-element tensor.
void backward(const Var& output);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& m);
Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double alpha);
Var add_row_vector(const Var& x, const Var& bias);
Var softmax_rows(const Var& m);
Var layernorm(const Var& x, const Var& gamma, const Var& beta, double eps);
Var gelu(const Var& x);
Var bilinear_resize(const Var& grid, std::size_t th, std::size_t tw);
Var reshape(const Var& x, Dims dims);
Var sum(const Var& x);
Var mean(const Var& x);

/// Rows of a matrix picked by index (repeats allowed).
Var gather_rows(const Var& m, std::span<const std::size_t> rows);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(const Var& m, std::size_t begin, std::size_t count);
Var concat_cols(std::span<const Var> parts);
/// out[i] = x[index[i]] for every element, shaped as dims.
Var gather(const Var& x, std::span<const std::size_t> index, Dims dims);

}  // namespace uvit::ad
