#include <doctest.h>

#include "oracles.hpp"
#include "uvit/autodiff.hpp"
#include "uvit/errors.hpp"

using namespace uvit;
using ad::Var;
using Vars = std::vector<Var>;

namespace {

constexpr double kTol = 1e-4;

Tensor rnd(Dims d, std::uint64_t s) { return oracle::random_tensor(d, s); }

}  // namespace

TEST_CASE("matmul gradient") {
  auto f = [](const Vars& v) { return oracle::weighted_sum(ad::matmul(v[0], v[1]), 1); };
  CHECK(oracle::gradient_check(f, {rnd({3, 4}, 1), rnd({4, 5}, 2)}) < kTol);
}

TEST_CASE("transpose, add, mul, scale gradients") {
  auto f = [](const Vars& v) {
    const Var t = ad::transpose(v[0]);
    return oracle::weighted_sum(ad::scale(ad::mul(ad::add(t, v[1]), v[1]), -0.7), 3);
  };
  CHECK(oracle::gradient_check(f, {rnd({4, 3}, 4), rnd({3, 4}, 5)}) < kTol);
}

TEST_CASE("add_row_vector gradient") {
  auto f = [](const Vars& v) { return oracle::weighted_sum(ad::add_row_vector(v[0], v[1]), 6); };
  CHECK(oracle::gradient_check(f, {rnd({5, 3}, 7), rnd({3}, 8)}) < kTol);
}

TEST_CASE("softmax gradient") {
  auto f = [](const Vars& v) { return oracle::weighted_sum(ad::softmax_rows(v[0]), 9); };
  CHECK(oracle::gradient_check(f, {oracle::random_tensor({4, 6}, 10, -3, 3)}) < kTol);
}

TEST_CASE("layernorm gradient") {
  auto f = [](const Vars& v) { return oracle::weighted_sum(ad::layernorm(v[0], v[1], v[2], 1e-6), 11); };
  CHECK(oracle::gradient_check(f, {rnd({4, 7}, 12), rnd({7}, 13), rnd({7}, 14)}) < kTol);
}

TEST_CASE("gelu gradient") {
  auto f = [](const Vars& v) { return oracle::weighted_sum(ad::gelu(v[0]), 15); };
  CHECK(oracle::gradient_check(f, {oracle::random_tensor({3, 5}, 16, -3, 3)}) < kTol);
}

TEST_CASE("bilinear_resize gradient") {
  auto up = [](const Vars& v) { return oracle::weighted_sum(ad::bilinear_resize(v[0], 5, 7), 17); };
  CHECK(oracle::gradient_check(up, {rnd({3, 4, 2}, 18)}) < kTol);
  auto down = [](const Vars& v) { return oracle::weighted_sum(ad::bilinear_resize(v[0], 2, 3), 19); };
  CHECK(oracle::gradient_check(down, {rnd({6, 6, 2}, 20)}) < kTol);
}

TEST_CASE("reshape, sum, mean gradients") {
  auto f = [](const Vars& v) {
    return ad::add(ad::sum(ad::mul(ad::reshape(v[0], {6, 2}), ad::reshape(v[0], {6, 2}))), ad::mean(v[0]));
  };
  CHECK(oracle::gradient_check(f, {rnd({3, 4}, 21)}) < kTol);
}

TEST_CASE("row and column plumbing gradients") {
  auto f = [](const Vars& v) {
    const std::size_t rows[] = {2, 0, 2, 1};
    const Var g = ad::gather_rows(v[0], rows);
    const Var parts_r[] = {g, v[1]};
    const Var stacked = ad::concat_rows(parts_r);
    const Var left = ad::slice_cols(stacked, 0, 2), right = ad::slice_cols(stacked, 2, 3);
    const Var parts_c[] = {right, left};
    return oracle::weighted_sum(ad::concat_cols(parts_c), 22);
  };
  CHECK(oracle::gradient_check(f, {rnd({3, 5}, 23), rnd({2, 5}, 24)}) < kTol);

  auto g = [](const Vars& v) {
    const std::size_t idx[] = {5, 0, 0, 3, 11, 7};
    return oracle::weighted_sum(ad::gather(v[0], idx, {2, 3}), 25);
  };
  CHECK(oracle::gradient_check(g, {rnd({3, 4}, 26)}) < kTol);
}

TEST_CASE("a value reused along two paths accumulates both contributions") {
  const Var x = Var::parameter(Tensor({1}, {3.0}));
  const Var y = ad::add(ad::mul(x, x), ad::scale(x, 2.0));  // x^2 + 2x
  ad::backward(ad::sum(y));
  CHECK(x.grad()[0] == doctest::Approx(8.0));
}

TEST_CASE("backward clears earlier gradients") {
  const Var x = Var::parameter(Tensor({2}, {1.0, 2.0}));
  const Var y = ad::sum(ad::mul(x, x));
  ad::backward(y);
  const Tensor first = x.grad();
  ad::backward(y);
  CHECK(x.grad() == first);
}

TEST_CASE("constants and unreached nodes") {
  const Var c = Var::constant(Tensor({2}, 1.0));
  const Var p = Var::parameter(Tensor({2}, 2.0));
  const Var unused = Var::parameter(Tensor({3}, 1.0));
  CHECK_FALSE(c.requires_grad());
  CHECK(p.requires_grad());
  CHECK_FALSE(ad::mul(c, c).requires_grad());
  ad::backward(ad::sum(ad::mul(c, p)));
  CHECK(p.grad() == Tensor({2}, 1.0));
  CHECK(unused.grad() == Tensor({3}, 0.0));
  CHECK(c.grad() == Tensor({2}, 0.0));
}

TEST_CASE("backward needs a scalar") {
  const Var p = Var::parameter(Tensor({2}, 2.0));
  CHECK_THROWS_AS(ad::backward(ad::scale(p, 2.0)), ContractError);
}

TEST_CASE("ids increase with creation") {
  const Var a = Var::constant(Tensor());
  const Var b = ad::scale(a, 2.0);
  CHECK(b.id() > a.id());
}

TEST_CASE("plumbing shape errors") {
  const Var m = Var::constant(Tensor({3, 4}));
  const std::size_t bad[] = {3};
  CHECK_THROWS_AS(ad::gather_rows(m, bad), DimensionError);
  CHECK_THROWS_AS(ad::slice_cols(m, 3, 2), DimensionError);
  const Var parts[] = {m, Var::constant(Tensor({3, 2}))};
  CHECK_THROWS_AS(ad::concat_rows(parts), DimensionError);
}
