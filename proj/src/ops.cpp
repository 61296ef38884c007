#include "uvit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "uvit/errors.hpp"
#include "uvit/kernels.hpp"

namespace uvit::ops {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.dims() != b.dims()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + a.shape_string() + " and " +
                         b.shape_string());
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  kernels::active().gemm(a.raw(), b.raw(), c.raw(), m, k, n);
  return c;
}

Tensor transpose(const Tensor& m) {
  if (m.rank() != 2) throw DimensionError("transpose expects a matrix, got " + m.shape_string());
  const std::size_t r = m.dim(0), c = m.dim(1);
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = m[i * c + j];
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.dims());
  kernels::active().add(a.raw(), b.raw(), out.raw(), a.size());
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.dims());
  kernels::active().mul(a.raw(), b.raw(), out.raw(), a.size());
  return out;
}

Tensor scale(const Tensor& a, double alpha) {
  Tensor out(a.dims());
  kernels::active().scale(alpha, a.raw(), out.raw(), a.size());
  return out;
}

Tensor add_row_vector(const Tensor& x, const Tensor& bias) {
  const std::size_t n = x.dims().back();
  if (bias.size() != n) {
    throw DimensionError("bias of shape " + bias.shape_string() + " does not fit rows of " +
                         x.shape_string());
  }
  Tensor out(x.dims());
  const auto& k = kernels::active();
  for (std::size_t r = 0; r < x.size() / n; ++r) k.add(x.raw() + r * n, bias.raw(), out.raw() + r * n, n);
  return out;
}

Tensor softmax_rows(const Tensor& m) {
  if (m.rank() != 2) throw DimensionError("softmax_rows expects a matrix, got " + m.shape_string());
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  Tensor out(m.dims());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = m.raw() + r * cols;
    double* o = out.raw() + r * cols;
    double mx = in[0];
    for (std::size_t c = 0; c < cols; ++c) {
      if (!std::isfinite(in[c])) {
        throw NumericError("softmax_rows: non-finite entry at (" + std::to_string(r) + ", " +
                           std::to_string(c) + ")");
      }
      mx = std::max(mx, in[c]);
    }
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      total += o[c];
    }
    const double inv = 1.0 / total;
    for (std::size_t c = 0; c < cols; ++c) o[c] *= inv;
  }
  return out;
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = x.dims().back();
  if (gamma.size() != d || beta.size() != d) {
    throw DimensionError("layernorm: gamma " + gamma.shape_string() + " / beta " +
                         beta.shape_string() + " do not match last axis of " + x.shape_string());
  }
  if (!(eps > 0.0)) throw ContractError("layernorm: eps must be positive");
  Tensor out(x.dims());
  for (std::size_t r = 0; r < x.size() / d; ++r) {
    const double* in = x.raw() + r * d;
    double* o = out.raw() + r * d;
    double mean = 0.0;
    for (std::size_t i = 0; i < d; ++i) mean += in[i];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (in[i] - mean) * (in[i] - mean);
    var /= static_cast<double>(d);
    const double rstd = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < d; ++i) o[i] = (in[i] - mean) * rstd * gamma[i] + beta[i];
  }
  return out;
}

double gelu(double x) { return x * 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * std::erfc(-x / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Tensor gelu(const Tensor& x) {
  Tensor out(x.dims());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = gelu(x[i]);
  return out;
}

ResampleTap resample_tap(std::size_t target_index, std::size_t src, std::size_t tgt) {
  if (src == 1 || tgt == 1) return {0, 0, 0.0};
  const double pos = static_cast<double>(target_index * (src - 1)) / static_cast<double>(tgt - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  if (lo >= src - 1) return {src - 1, src - 1, 0.0};
  return {lo, lo + 1, pos - static_cast<double>(lo)};
}

Tensor bilinear_resize(const Tensor& grid, std::size_t th, std::size_t tw) {
  if (grid.rank() != 3) {
    throw DimensionError("bilinear_resize expects [h, w, c], got " + grid.shape_string());
  }
  if (th == 0 || tw == 0) throw DimensionError("bilinear_resize: target extents must be >= 1");
  const std::size_t h = grid.dim(0), w = grid.dim(1), c = grid.dim(2);
  Tensor out({th, tw, c});
  for (std::size_t y = 0; y < th; ++y) {
    const ResampleTap ty = resample_tap(y, h, th);
    for (std::size_t x = 0; x < tw; ++x) {
      const ResampleTap tx = resample_tap(x, w, tw);
      const double* v00 = grid.raw() + (ty.lo * w + tx.lo) * c;
      const double* v01 = grid.raw() + (ty.lo * w + tx.hi) * c;
      const double* v10 = grid.raw() + (ty.hi * w + tx.lo) * c;
      const double* v11 = grid.raw() + (ty.hi * w + tx.hi) * c;
      double* o = out.raw() + (y * tw + x) * c;
      for (std::size_t ch = 0; ch < c; ++ch) {
        // Difference form keeps constants exact.
        const double top = v00[ch] + tx.t * (v01[ch] - v00[ch]);
        const double bottom = v10[ch] + tx.t * (v11[ch] - v10[ch]);
        o[ch] = top + ty.t * (bottom - top);
      }
    }
  }
  return out;
}

double sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return s;
}

}  // namespace uvit::ops
