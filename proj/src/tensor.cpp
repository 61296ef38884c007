#include "uvit/tensor.hpp"

#include <sstream>
#include <utility>

#include "uvit/errors.hpp"
#include "uvit/token_grid.hpp"

namespace uvit {

std::size_t dims_product(const Dims& dims) {
  std::size_t n = 1;
  for (std::size_t d : dims) n *= d;
  return n;
}

std::string dims_string(const Dims& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << 'x';
    os << dims[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_dims(const Dims& dims) {
  if (dims.empty()) throw DimensionError("tensor needs at least one axis");
  for (std::size_t d : dims) {
    if (d == 0) throw DimensionError("tensor extent must be >= 1, got " + dims_string(dims));
  }
}

}  // namespace

Tensor::Tensor() : dims_{1}, data_(1, 0.0) {}

Tensor::Tensor(Dims dims, double fill) : dims_(std::move(dims)) {
  check_dims(dims_);
  data_.assign(dims_product(dims_), fill);
}

Tensor::Tensor(Dims dims, std::vector<double> data) : dims_(std::move(dims)), data_(std::move(data)) {
  check_dims(dims_);
  if (data_.size() != dims_product(dims_)) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match dims " + dims_string(dims_));
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Dims{1}, value); }

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

double& Tensor::at(std::size_t i, std::size_t j) { return data_[i * dims_[1] + j]; }
double Tensor::at(std::size_t i, std::size_t j) const { return data_[i * dims_[1] + j]; }

double& Tensor::at(std::size_t i, std::size_t j, std::size_t k) {
  return data_[(i * dims_[1] + j) * dims_[2] + k];
}
double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
  return data_[(i * dims_[1] + j) * dims_[2] + k];
}

Tensor Tensor::reshaped(Dims dims) const {
  if (dims_product(dims) != data_.size()) {
    throw DimensionError("cannot reshape " + dims_string(dims_) + " to " + dims_string(dims));
  }
  return Tensor(std::move(dims), data_);
}

double Tensor::item() const {
  if (data_.size() != 1) throw ContractError("item() on tensor of shape " + dims_string(dims_));
  return data_[0];
}

TokenGrid::TokenGrid(Tensor values) : values_(std::move(values)) {
  if (values_.rank() != 3) {
    throw DimensionError("token grid needs a rank-3 tensor, got " + values_.shape_string());
  }
}

}  // namespace uvit
