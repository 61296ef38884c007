#pragma once

#include <cstddef>

#include "uvit/tensor.hpp"

namespace uvit {

/// h x w lattice of d-dimensional tokens stored as a [h, w, d] tensor.
class TokenGrid {
 public:
  TokenGrid() : values_(Dims{1, 1, 1}) {}
  explicit TokenGrid(Tensor values);
  TokenGrid(std::size_t h, std::size_t w, std::size_t d, double fill = 0.0)
      : values_(Dims{h, w, d}, fill) {}

  std::size_t h() const { return values_.dim(0); }
  std::size_t w() const { return values_.dim(1); }
  std::size_t d() const { return values_.dim(2); }
  std::size_t token_count() const { return h() * w(); }

  const Tensor& values() const noexcept { return values_; }
  Tensor& values() noexcept { return values_; }

  /// Tokens as a [h*w, d] matrix in row-major site order.
  Tensor as_matrix() const { return values_.reshaped({token_count(), d()}); }

  bool operator==(const TokenGrid& other) const = default;

 private:
  Tensor values_;
};

}  // namespace uvit
