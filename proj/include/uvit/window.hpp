#pragma once

// Attention-window strategies: the "[4^-1]x14 -> [2^-1]x2 -> [1]x2" notation,
// window tilings of a token grid, and partition/merge of tokens by window.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "uvit/tensor.hpp"
#include "uvit/token_grid.hpp"

namespace uvit {

/// A window covering 1/denominator of the grid height and width.
class WindowScale {
 public:
  /// Throws ConfigError unless denominator is one of 1, 2, 3, 4, 8, 16.
  explicit WindowScale(int denominator);
  static WindowScale global() { return WindowScale(1); }

  int denominator() const noexcept { return denominator_; }
  double value() const noexcept { return 1.0 / denominator_; }
  /// "1" or "K^-1".
  std::string to_string() const;

  static bool allowed(int denominator) noexcept;

  auto operator<=>(const WindowScale&) const = default;

 private:
  int denominator_;
};

struct WindowPhase {
  WindowScale scale;
  int count;

  bool operator==(const WindowPhase&) const = default;
};

struct WindowStrategy {
  std::vector<WindowPhase> phases;

  /// Number of blocks covered: the sum of phase counts.
  int total_blocks() const;
  /// "[K^-1]xN -> ..." with ASCII separators.
  std::string to_string() const;
  /// One phase covering `count` blocks.
  static WindowStrategy uniform(WindowScale scale, int count);

  bool operator==(const WindowStrategy&) const = default;
};

/// Grammar (whitespace allowed between tokens):
///   strategy := phase ( arrow phase )*
///   phase    := "[" scale "]" times count
///   scale    := integer | integer inverse
///   arrow    := "->" | "→" | "\rightarrow" | "\shortrightarrow"
///   times    := "x" | "X" | "×" | "\times"
///   inverse  := "^-1" | "^{-1}" | "⁻¹"
/// Throws ParseError carrying the byte offset of the problem.
WindowStrategy parse_strategy(std::string_view text);
std::string format_strategy(const WindowStrategy& ws);

/// Tiling of an h x w token grid by equal, non-overlapping windows.
struct WindowLayout {
  std::size_t grid_h = 1;
  std::size_t grid_w = 1;
  std::size_t window_h = 1;
  std::size_t window_w = 1;

  std::size_t rows() const { return grid_h / window_h; }
  std::size_t cols() const { return grid_w / window_w; }
  std::size_t window_count() const { return rows() * cols(); }
  std::size_t tokens_per_window() const { return window_h * window_w; }
  std::size_t token_count() const { return grid_h * grid_w; }

  /// Flat (row-major grid) indices of the tokens in window `w`, row-major
  /// within the window. Windows are numbered row-major.
  std::vector<std::size_t> token_indices(std::size_t window) const;

  /// Throws DimensionError unless the windows tile the grid exactly.
  void validate() const;

  bool operator==(const WindowLayout&) const = default;
};

/// Throws DivisibilityError when scale does not divide both grid extents.
WindowLayout plan_windows(std::size_t grid_h, std::size_t grid_w, WindowScale scale);

/// Splits a grid into window blocks of shape [tokens_per_window, d].
std::vector<Tensor> window_partition(const TokenGrid& tokens, const WindowLayout& layout);
/// Inverse of window_partition.
TokenGrid window_merge(const std::vector<Tensor>& blocks, const WindowLayout& layout);

/// One layout per block, phase order preserved. Throws BindingError when the
/// phase counts do not sum to depth or a scale does not divide the grid.
std::vector<WindowLayout> bind_strategy(const WindowStrategy& ws, int depth, std::size_t grid_h,
                                        std::size_t grid_w);

}  // namespace uvit
