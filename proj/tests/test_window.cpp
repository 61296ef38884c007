#include <doctest.h>

#include <algorithm>
#include <set>

#include "oracles.hpp"
#include "uvit/errors.hpp"
#include "uvit/window.hpp"

using namespace uvit;

namespace {

std::size_t parse_error_position(const std::string& text) {
  try {
    parse_strategy(text);
  } catch (const ParseError& e) {
    return e.position();
  }
  FAIL("expected a parse error for '" << text << "'");
  return 0;
}

}  // namespace

TEST_CASE("window scales") {
  for (int d : {1, 2, 3, 4, 8, 16}) CHECK(WindowScale::allowed(d));
  for (int d : {0, 5, 6, 32, -2}) {
    CHECK_FALSE(WindowScale::allowed(d));
    CHECK_THROWS_AS(WindowScale{d}, ConfigError);
  }
  CHECK(WindowScale(1).to_string() == "1");
  CHECK(WindowScale(8).to_string() == "8^-1");
  CHECK(WindowScale(4).value() == 0.25);
  CHECK(WindowScale(2) > WindowScale(1));
}

TEST_CASE("parse accepts the notation variants") {
  const WindowStrategy want{{{WindowScale(4), 14}, {WindowScale(2), 2}, {WindowScale(1), 2}}};
  for (const char* text : {"[4^-1]x14 -> [2^-1]x2 -> [1]x2", "[4^{-1}]\\times 14 \\rightarrow [2^{-1}]\\times 2 \\rightarrow [1]\\times 2",
                           "[4⁻¹]×14 → [2⁻¹]×2 → [1]×2", "[4^-1]X14->[2^-1]X2->[1^-1]X2",
                           "  [4^-1] x 14\\shortrightarrow[2^-1]x2 -> [1]x2  "}) {
    CAPTURE(text);
    CHECK(parse_strategy(text) == want);
  }
}

TEST_CASE("format and parse round-trip") {
  const char* strategies[] = {"[1]x18",
                              "[2^-1]x18",
                              "[16^-1]x4 -> [8^-1]x4 -> [4^-1]x4 -> [2^-1]x4 -> [1]x2",
                              "[8^-1]x9 -> [4^-1]x4 -> [2^-1]x3 -> [1]x2",
                              "[4^-1]x14 -> [2^-1]x2 -> [1]x2",
                              "[4^-1]x6 -> [2^-1]x12",
                              "[2^-1]x28 -> [1]x4",
                              "[3^-1]x1"};
  for (const char* s : strategies) {
    const WindowStrategy ws = parse_strategy(s);
    CHECK(format_strategy(ws) == s);
    CHECK(parse_strategy(format_strategy(ws)) == ws);
  }
  CHECK(parse_strategy("[2^-1]x28 -> [1]x4").total_blocks() == 32);
}

TEST_CASE("malformed strategies report positions") {
  CHECK(parse_error_position("") == 0);
  CHECK(parse_error_position("[2^-1]x18 ->") == 12);
  CHECK(parse_error_position("[5^-1]x2") == 1);
  CHECK(parse_error_position("[2^-1]18") == 6);
  CHECK(parse_error_position("[2^-1]x0") == 7);
  CHECK(parse_error_position("[0]x3") == 1);
  CHECK(parse_error_position("[1]x2 junk") == 6);
  CHECK(parse_error_position("[1]x99999999999999") == 4);
  CHECK(parse_error_position("(1)x2") == 0);
  try {
    parse_strategy("[1]x2 ->");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("position 8") != std::string::npos);
  }
}

TEST_CASE("plan_windows") {
  const WindowLayout l = plan_windows(112, 112, WindowScale(4));
  CHECK(l.window_h == 28);
  CHECK(l.window_count() == 16);
  CHECK(l.tokens_per_window() == 784);
  CHECK_THROWS_AS(plan_windows(6, 6, WindowScale(4)), DivisibilityError);
  CHECK_THROWS_AS(plan_windows(8, 6, WindowScale(4)), DivisibilityError);
  CHECK(plan_windows(6, 9, WindowScale(3)).window_w == 3);
}

TEST_CASE("bind_strategy") {
  const WindowStrategy ws = parse_strategy("[2^-1]x1 -> [1]x2");
  const auto layouts = bind_strategy(ws, 3, 4, 4);
  REQUIRE(layouts.size() == 3);
  CHECK(layouts[0].window_h == 2);
  CHECK(layouts[1].window_h == 4);
  CHECK(layouts[2] == layouts[1]);
  CHECK_THROWS_AS(bind_strategy(ws, 4, 4, 4), BindingError);
  CHECK_THROWS_AS(bind_strategy(parse_strategy("[4^-1]x2"), 2, 6, 6), BindingError);
}

TEST_CASE("token indices tile the grid exactly once") {
  for (int den : {1, 2, 3}) {
    const WindowLayout l = plan_windows(6, 12, WindowScale(den));
    std::multiset<std::size_t> seen;
    for (std::size_t w = 0; w < l.window_count(); ++w)
      for (std::size_t i : l.token_indices(w)) seen.insert(i);
    CHECK(seen.size() == 72);
    for (std::size_t i = 0; i < 72; ++i) CHECK(seen.count(i) == 1);
  }
  const WindowLayout l = plan_windows(4, 4, WindowScale(2));
  CHECK(l.token_indices(1) == std::vector<std::size_t>{2, 3, 6, 7});
}

TEST_CASE("partition and merge round-trip bit-exactly") {
  const TokenGrid g(oracle::random_tensor({8, 8, 5}, 42));
  for (int den : {1, 2, 4, 8}) {
    const WindowLayout l = plan_windows(8, 8, WindowScale(den));
    const auto blocks = window_partition(g, l);
    CHECK(blocks.size() == l.window_count());
    std::multiset<double> in(g.values().data().begin(), g.values().data().end()), out;
    for (const auto& b : blocks) out.insert(b.data().begin(), b.data().end());
    CHECK(in == out);
    CHECK(window_merge(blocks, l) == g);
  }
  CHECK_THROWS_AS(window_partition(g, plan_windows(4, 4, WindowScale(2))), DimensionError);
}
