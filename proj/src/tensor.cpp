#include "protoflow/tensor.hpp"

#include <cmath>

#include "protoflow/error.hpp"

namespace protoflow {

namespace {

std::size_t count(const std::vector<std::size_t>& shape) {
  if (shape.empty()) return 0;
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
  if (shape_.empty() || shape_.size() > 2)
    throw ShapeError("tensor rank must be 1 or 2");
  for (std::size_t d : shape_)
    if (d == 0) throw ShapeError("tensor dimensions must be positive");
  data_.assign(count(shape_), 0.0);
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> data) {
  Tensor t(std::move(shape));
  if (data.size() != t.numel())
    throw ShapeError("data size does not match shape");
  t.data_ = std::move(data);
  if (!t.all_finite()) throw NumericError("non-finite value in tensor data");
  return t;
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  return Tensor(std::move(shape));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
  Tensor t(std::move(shape));
  for (double& x : t.data_) x = v;
  return t;
}

Tensor Tensor::randn(std::vector<std::size_t> shape, Rng& rng, double stddev) {
  Tensor t(std::move(shape));
  for (double& x : t.data_) x = stddev * rng.normal();
  return t;
}

Tensor Tensor::uniform(std::vector<std::size_t> shape, Rng& rng, double lo,
                       double hi) {
  Tensor t(std::move(shape));
  for (double& x : t.data_) x = rng.uniform(lo, hi);
  return t;
}

std::size_t Tensor::rows() const {
  if (ndim() != 2) throw ShapeError("rows(): tensor is not rank 2");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (ndim() != 2) throw ShapeError("cols(): tensor is not rank 2");
  return shape_[1];
}

double& Tensor::at(std::size_t r, std::size_t c) {
  return data_[r * cols() + c];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return data_[r * cols() + c];
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item(): tensor is not a scalar");
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double x : data_)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace protoflow
