#pragma once

#include <vector>

#include "protoflow/tape.hpp"
#include "protoflow/tensor.hpp"

namespace protoflow {

// Differentiable operations. Every op computes eagerly and, when a tape is
// active and an input is tracked, records a node whose backward lambda pushes
// hand-derived vector-Jacobian products to its parents. Elementwise ops
// broadcast only scalar<->tensor or equal shapes; anything else throws
// ShapeError.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, double c);
Tensor sub(const Tensor& a, double c);
Tensor sub(double c, const Tensor& a);
Tensor scale(const Tensor& a, double c);  // c * a
Tensor divide(const Tensor& a, double c);
Tensor divide(double c, const Tensor& a);
Tensor neg(const Tensor& a);

Tensor elu(const Tensor& a);  // alpha = 1
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);   // domain x > 0
Tensor sqrt(const Tensor& a);  // domain x >= 0
Tensor clamp_min(const Tensor& a, double lo);

// [m x k] @ [k x n]. Per-element accumulation runs in ascending-k order,
// matching a reference triple loop bit-for-bit.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// axis 0 stacks rows (rank-1 parts chain end to end), axis 1 widens columns.
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

// Numerically stable (max-shifted). Rank 1: axis must be 0. Rank 2: axis 1
// normalizes each row, axis 0 each column.
Tensor softmax(const Tensor& a, std::size_t axis);

// Rank-1 inputs of equal length; scalar output. Zero norm throws.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& a);   // scalar
Tensor mean(const Tensor& a);  // scalar

Tensor colsum(const Tensor& m);                           // [m x n] -> {n}
Tensor broadcast_row(const Tensor& v, std::size_t rows);  // {n} -> [rows x n]
Tensor add_rowvec(const Tensor& m, const Tensor& v);      // m + v per row
Tensor mul_rowvec(const Tensor& m, const Tensor& v);      // m[i,j] * v[j]
Tensor mul_colvec(const Tensor& m, const Tensor& v);      // m[i,j] * v[i]
Tensor rows_normalize(const Tensor& m);  // unit L2 rows; zero row throws
Tensor row_sqnorm(const Tensor& m);      // {m}: squared L2 norm per row
Tensor row(const Tensor& m, std::size_t r);  // [1 x n] view copy of row r

// Inverse of concat; plain (non-differentiable) helper.
std::vector<Tensor> split(const Tensor& t, std::size_t axis,
                          const std::vector<std::size_t>& sizes);

}  // namespace protoflow
