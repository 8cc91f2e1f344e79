#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "protoflow/rng.hpp"

namespace protoflow {

// Dense row-major f64 tensor. Rank 1 ({n}) and rank 2 ({rows, cols}) cover
// everything this engine needs; scalars are shape {1}. Value semantics: copies
// are deep. `node` is the handle into the thread-local gradient tape, or -1
// for a constant.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);  // zero-filled

  // Validates element count and rejects NaN/Inf; entry point for external data.
  static Tensor from(std::vector<std::size_t> shape, std::vector<double> data);
  static Tensor scalar(double v);
  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double v);
  static Tensor randn(std::vector<std::size_t> shape, Rng& rng,
                      double stddev = 1.0);
  static Tensor uniform(std::vector<std::size_t> shape, Rng& rng, double lo,
                        double hi);

  bool defined() const { return !shape_.empty(); }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  bool is_scalar() const { return data_.size() == 1; }

  // Rank-2 helpers.
  std::size_t rows() const;
  std::size_t cols() const;

  double& at(std::size_t i) { return data_[i]; }
  double at(std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;
  double item() const;  // requires numel()==1

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool tracked() const { return node_ >= 0; }
  int node() const { return node_; }
  // `serial` identifies the owning tape; a tensor outliving its tape is
  // treated as a constant by later tapes instead of aliasing node ids.
  void set_node(int node, std::uint64_t serial = 0) {
    node_ = node;
    tape_serial_ = serial;
    requires_grad_ = node >= 0;
  }
  std::uint64_t tape_serial() const { return tape_serial_; }
  bool requires_grad() const { return requires_grad_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
  int node_ = -1;
  std::uint64_t tape_serial_ = 0;
  bool requires_grad_ = false;
};

}  // namespace protoflow
