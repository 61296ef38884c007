#include <doctest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "uvit/errors.hpp"
#include "uvit/ops.hpp"

using namespace uvit;

TEST_CASE("tensor construction checks extents") {
  CHECK_THROWS_AS(Tensor(Dims{2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor(Dims{2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  CHECK(Tensor().size() == 1);
  const Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  CHECK(m.at(1, 2) == 6);
  CHECK(m.shape_string() == "[2x3]");
  CHECK_THROWS_AS(m.reshaped({4}), DimensionError);
  CHECK(m.reshaped({3, 2}).at(2, 1) == 6);
}

TEST_CASE("matmul matches the triple-loop oracle") {
  for (std::size_t m : {1, 4, 7})
    for (std::size_t k : {1, 5, 16})
      for (std::size_t n : {1, 3, 10}) {
        const Tensor a = oracle::random_tensor({m, k}, m * 100 + k), b = oracle::random_tensor({k, n}, n);
        CHECK(oracle::max_abs_diff(ops::matmul(a, b), oracle::matmul(a, b)) < 1e-13);
      }
  CHECK_THROWS_AS(ops::matmul(Tensor({2, 3}), Tensor({2, 3})), DimensionError);
}

TEST_CASE("shape errors name the shapes") {
  try {
    ops::add(Tensor({2, 3}), Tensor({3, 2}));
    FAIL("expected throw");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[3x2]") != std::string::npos);
  }
}

TEST_CASE("transpose, add_row_vector, scale") {
  const Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  CHECK(ops::transpose(m) == Tensor::matrix({{1, 4}, {2, 5}, {3, 6}}));
  CHECK(ops::add_row_vector(m, Tensor({3}, {10, 20, 30})) == Tensor::matrix({{11, 22, 33}, {14, 25, 36}}));
  CHECK(ops::scale(m, 2.0) == Tensor::matrix({{2, 4, 6}, {8, 10, 12}}));
  CHECK_THROWS_AS(ops::add_row_vector(m, Tensor({2})), DimensionError);
}

TEST_CASE("softmax closed forms") {
  const Tensor s = ops::softmax_rows(Tensor::matrix({{0.0, std::log(2.0), std::log(3.0)}}));
  CHECK(s.at(0, 0) == doctest::Approx(1.0 / 6).epsilon(1e-15));
  CHECK(s.at(0, 1) == doctest::Approx(2.0 / 6).epsilon(1e-15));
  CHECK(s.at(0, 2) == doctest::Approx(3.0 / 6).epsilon(1e-15));

  // Large logits stay finite thanks to the max shift.
  const Tensor big = ops::softmax_rows(Tensor::matrix({{1000.0, 1001.0}}));
  CHECK(big.at(0, 1) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));

  const Tensor r = ops::softmax_rows(oracle::random_tensor({6, 9}, 3, -20, 20));
  for (std::size_t i = 0; i < 6; ++i) {
    double sum = 0;
    for (std::size_t j = 0; j < 9; ++j) sum += r.at(i, j);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
  }
  CHECK_THROWS_AS(ops::softmax_rows(Tensor::matrix({{1.0, std::nan("")}})), NumericError);
  CHECK_THROWS_AS(ops::softmax_rows(Tensor::matrix({{std::numeric_limits<double>::infinity(), 0.0}})),
                  NumericError);
}

TEST_CASE("layernorm statistics") {
  const Tensor x = oracle::random_tensor({5, 12}, 9, -3, 3);
  const Tensor y = ops::layernorm(x, Tensor({12}, 1.0), Tensor({12}, 0.0), 1e-6);
  for (std::size_t i = 0; i < 5; ++i) {
    double mean = 0, var = 0, xm = 0, xv = 0;
    for (std::size_t j = 0; j < 12; ++j) {
      mean += y.at(i, j);
      xm += x.at(i, j);
    }
    mean /= 12;
    xm /= 12;
    for (std::size_t j = 0; j < 12; ++j) {
      var += (y.at(i, j) - mean) * (y.at(i, j) - mean);
      xv += (x.at(i, j) - xm) * (x.at(i, j) - xm);
    }
    var /= 12;
    xv /= 12;
    CHECK(std::abs(mean) < 1e-14);
    CHECK(var == doctest::Approx(xv / (xv + 1e-6)).epsilon(1e-12));
  }
  const Tensor g = ops::layernorm(Tensor::matrix({{1, 3}}), Tensor({2}, {2, 2}), Tensor({2}, {5, 5}), 1e-12);
  CHECK(g.at(0, 0) == doctest::Approx(3.0));
  CHECK(g.at(0, 1) == doctest::Approx(7.0));
}

TEST_CASE("gelu is x times the Gaussian CDF") {
  CHECK(ops::gelu(0.0) == 0.0);
  CHECK(ops::gelu(1.0) == doctest::Approx(oracle::normal_cdf_quadrature(1.0)).epsilon(1e-12));
  CHECK(ops::gelu(-2.0) == doctest::Approx(-2.0 * oracle::normal_cdf_quadrature(-2.0)).epsilon(1e-10));
  for (double x : {-3.0, -0.5, 0.0, 0.7, 2.5}) {
    const double h = 1e-5;
    const double fd = (ops::gelu(x + h) - ops::gelu(x - h)) / (2 * h);
    CHECK(ops::gelu_derivative(x) == doctest::Approx(fd).epsilon(1e-8));
  }
}

TEST_CASE("bilinear resize") {
  const Tensor g({2, 2, 1}, {1, 2, 3, 4});
  const Tensor up = ops::bilinear_resize(g, 3, 3);
  CHECK(up.at(1, 1, 0) == 2.5);
  CHECK(up.at(0, 0, 0) == 1);
  CHECK(up.at(2, 2, 0) == 4);
  CHECK(up.at(0, 1, 0) == 1.5);

  const Tensor c({4, 5, 2}, 0.3);
  const Tensor rc = ops::bilinear_resize(c, 7, 3);
  for (double v : rc.data()) CHECK(v == 0.3);

  const Tensor r = oracle::random_tensor({3, 4, 2}, 4);
  CHECK(ops::bilinear_resize(r, 3, 4) == r);

  const Tensor one({1, 1, 2}, {5.0, -1.0});
  const Tensor spread = ops::bilinear_resize(one, 2, 3);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(spread.at(i, j, 0) == 5.0);

  const auto tap = ops::resample_tap(0, 1, 5);
  CHECK(tap.lo == 0);
  CHECK(tap.hi == 0);
}

TEST_CASE("sum") { CHECK(ops::sum(Tensor({3}, {1, 2, 3.5})) == 6.5); }
