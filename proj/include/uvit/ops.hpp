#pragma once

// Pure tensor functions. The autodiff layer (autodiff.hpp) records these for
// reverse-mode differentiation; nothing here keeps state.

#include <cstddef>

#include "uvit/tensor.hpp"

namespace uvit::ops {

/// [m x k] * [k x n]. Throws DimensionError naming both shapes.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& m);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double alpha);
/// Adds a length-n vector to every row of a [..., n] tensor.
Tensor add_row_vector(const Tensor& x, const Tensor& bias);

/// Row-wise softmax with per-row max subtraction. Non-finite input throws
/// NumericError.
Tensor softmax_rows(const Tensor& m);

/// Normalizes over the last axis with population variance:
/// (x - mean) / sqrt(var + eps) * gamma + beta.
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

/// x * Phi(x) with the exact Gaussian CDF.
double gelu(double x);
Tensor gelu(const Tensor& x);
/// d/dx [x * Phi(x)] = Phi(x) + x * phi(x)
double gelu_derivative(double x);

/// Resamples a [h, w, c] grid to [th, tw, c] with align-corners bilinear
/// interpolation; a single-pixel axis always samples index 0.
Tensor bilinear_resize(const Tensor& grid, std::size_t th, std::size_t tw);

/// Interpolation stencil along one axis: source index lo, hi and weight t,
/// with value = v[lo] + t * (v[hi] - v[lo]).
struct ResampleTap {
  std::size_t lo;
  std::size_t hi;
  double t;
};
ResampleTap resample_tap(std::size_t target_index, std::size_t src, std::size_t tgt);

double sum(const Tensor& x);

}  // namespace uvit::ops
