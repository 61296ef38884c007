#include "uvit/window.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <limits>

#include "uvit/errors.hpp"

namespace uvit {

namespace {
constexpr std::array<int, 6> kAllowedDenominators{1, 2, 3, 4, 8, 16};
}

WindowScale::WindowScale(int denominator) : denominator_(denominator) {
  if (!allowed(denominator)) {
    throw ConfigError("window scale 1/" + std::to_string(denominator) +
                      " is not one of 1, 1/2, 1/3, 1/4, 1/8, 1/16");
  }
}

bool WindowScale::allowed(int denominator) noexcept {
  return std::find(kAllowedDenominators.begin(), kAllowedDenominators.end(), denominator) !=
         kAllowedDenominators.end();
}

std::string WindowScale::to_string() const {
  return denominator_ == 1 ? std::string("1") : std::to_string(denominator_) + "^-1";
}

int WindowStrategy::total_blocks() const {
  int n = 0;
  for (const auto& p : phases) n += p.count;
  return n;
}

std::string WindowStrategy::to_string() const { return format_strategy(*this); }

WindowStrategy WindowStrategy::uniform(WindowScale scale, int count) {
  return WindowStrategy{{WindowPhase{scale, count}}};
}

// ---------------------------------------------------------------------------
// Parser

namespace {

class StrategyParser {
 public:
  explicit StrategyParser(std::string_view text) : text_(text) {}

  WindowStrategy parse() {
    WindowStrategy ws;
    skip_space();
    if (at_end()) fail("empty window strategy");
    ws.phases.push_back(phase());
    skip_space();
    while (!at_end()) {
      if (!arrow()) fail("expected '->' between phases");
      skip_space();
      ws.phases.push_back(phase());
      skip_space();
    }
    return ws;
  }

 private:
  WindowPhase phase() {
    expect('[');
    skip_space();
    const std::size_t scale_pos = pos_;
    const long long k = integer("window scale");
    skip_space();
    const bool inverse = inverse_marker();
    skip_space();
    expect(']');
    if (!inverse && k != 1) fail_at("window scale must be 1 or K^-1", scale_pos);
    if (k > std::numeric_limits<int>::max() || !WindowScale::allowed(static_cast<int>(k))) {
      fail_at("window scale 1/" + std::to_string(k) + " is not one of 1, 1/2, 1/3, 1/4, 1/8, 1/16",
              scale_pos);
    }
    skip_space();
    if (!times()) fail("expected 'x' after window scale");
    skip_space();
    const std::size_t count_pos = pos_;
    const long long n = integer("block count");
    if (n == 0) fail_at("block count must be positive", count_pos);
    if (n > std::numeric_limits<int>::max()) fail_at("block count too large", count_pos);
    return WindowPhase{WindowScale(static_cast<int>(k)), static_cast<int>(n)};
  }

  long long integer(const char* what) {
    if (at_end() || !std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      fail(std::string("expected ") + what);
    }
    const std::size_t start = pos_;
    long long v = 0;
    while (!at_end() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      v = v * 10 + (text_[pos_] - '0');
      if (v > 1'000'000'000LL) fail_at(std::string(what) + " too large", start);
      ++pos_;
    }
    return v;
  }

  bool inverse_marker() { return consume("^-1") || consume("^{-1}") || consume("⁻¹"); }

  bool arrow() {
    return consume("->") || consume("→") || consume("\\shortrightarrow") ||
           consume("\\rightarrow");
  }

  bool times() { return consume("x") || consume("X") || consume("×") || consume("\\times"); }

  bool consume(std::string_view token) {
    if (text_.substr(pos_, token.size()) == token) {
      pos_ += token.size();
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (at_end() || text_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  void skip_space() {
    while (!at_end() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool at_end() const { return pos_ >= text_.size(); }

  [[noreturn]] void fail(const std::string& msg) const { fail_at(msg, pos_); }
  [[noreturn]] void fail_at(const std::string& msg, std::size_t pos) const {
    throw ParseError("window strategy: " + msg, pos);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

WindowStrategy parse_strategy(std::string_view text) { return StrategyParser(text).parse(); }

std::string format_strategy(const WindowStrategy& ws) {
  std::string out;
  for (std::size_t i = 0; i < ws.phases.size(); ++i) {
    if (i) out += " -> ";
    out += '[' + ws.phases[i].scale.to_string() + "]x" + std::to_string(ws.phases[i].count);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Layouts

std::vector<std::size_t> WindowLayout::token_indices(std::size_t window) const {
  const std::size_t wr = window / cols(), wc = window % cols();
  std::vector<std::size_t> idx;
  idx.reserve(tokens_per_window());
  for (std::size_t y = 0; y < window_h; ++y) {
    const std::size_t row = wr * window_h + y;
    for (std::size_t x = 0; x < window_w; ++x) idx.push_back(row * grid_w + wc * window_w + x);
  }
  return idx;
}

void WindowLayout::validate() const {
  if (grid_h == 0 || grid_w == 0 || window_h == 0 || window_w == 0 || grid_h % window_h != 0 ||
      grid_w % window_w != 0) {
    throw DimensionError("window " + std::to_string(window_h) + "x" + std::to_string(window_w) +
                         " does not tile grid " + std::to_string(grid_h) + "x" +
                         std::to_string(grid_w));
  }
}

WindowLayout plan_windows(std::size_t grid_h, std::size_t grid_w, WindowScale scale) {
  const auto den = static_cast<std::size_t>(scale.denominator());
  if (grid_h == 0 || grid_w == 0 || grid_h % den != 0 || grid_w % den != 0) {
    throw DivisibilityError("grid " + std::to_string(grid_h) + "x" + std::to_string(grid_w) +
                            " is not divisible by window scale 1/" + std::to_string(den));
  }
  return WindowLayout{grid_h, grid_w, grid_h / den, grid_w / den};
}

std::vector<Tensor> window_partition(const TokenGrid& tokens, const WindowLayout& layout) {
  layout.validate();
  if (tokens.h() != layout.grid_h || tokens.w() != layout.grid_w) {
    throw DimensionError("layout for grid " + std::to_string(layout.grid_h) + "x" +
                         std::to_string(layout.grid_w) + " applied to tokens " +
                         tokens.values().shape_string());
  }
  const std::size_t d = tokens.d();
  std::vector<Tensor> blocks;
  blocks.reserve(layout.window_count());
  for (std::size_t w = 0; w < layout.window_count(); ++w) {
    Tensor block({layout.tokens_per_window(), d});
    const auto idx = layout.token_indices(w);
    for (std::size_t i = 0; i < idx.size(); ++i)
      std::copy_n(tokens.values().raw() + idx[i] * d, d, block.raw() + i * d);
    blocks.push_back(std::move(block));
  }
  return blocks;
}

TokenGrid window_merge(const std::vector<Tensor>& blocks, const WindowLayout& layout) {
  layout.validate();
  if (blocks.size() != layout.window_count()) {
    throw DimensionError("window_merge: " + std::to_string(blocks.size()) + " blocks for " +
                         std::to_string(layout.window_count()) + " windows");
  }
  const std::size_t d = blocks.front().dims().back();
  TokenGrid grid(layout.grid_h, layout.grid_w, d);
  for (std::size_t w = 0; w < blocks.size(); ++w) {
    const Tensor& b = blocks[w];
    if (b.rank() != 2 || b.dim(0) != layout.tokens_per_window() || b.dim(1) != d) {
      throw DimensionError("window_merge: block " + std::to_string(w) + " has shape " +
                           b.shape_string());
    }
    const auto idx = layout.token_indices(w);
    for (std::size_t i = 0; i < idx.size(); ++i)
      std::copy_n(b.raw() + i * d, d, grid.values().raw() + idx[i] * d);
  }
  return grid;
}

std::vector<WindowLayout> bind_strategy(const WindowStrategy& ws, int depth, std::size_t grid_h,
                                        std::size_t grid_w) {
  if (ws.total_blocks() != depth) {
    throw BindingError("window strategy '" + format_strategy(ws) + "' covers " +
                       std::to_string(ws.total_blocks()) + " blocks but depth is " +
                       std::to_string(depth));
  }
  std::vector<WindowLayout> layouts;
  layouts.reserve(static_cast<std::size_t>(depth));
  for (const auto& phase : ws.phases) {
    WindowLayout layout;
    try {
      layout = plan_windows(grid_h, grid_w, phase.scale);
    } catch (const DivisibilityError& e) {
      throw BindingError(std::string("cannot bind strategy: ") + e.what());
    }
    layouts.insert(layouts.end(), static_cast<std::size_t>(phase.count), layout);
  }
  return layouts;
}

}  // namespace uvit
