#include "protoflow/ops.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>

#include "protoflow/error.hpp"

namespace protoflow {

namespace {

void attach1(Tensor& out, const Tensor& a,
             std::function<Tensor(const Tensor&)> vjp) {
  Tape* t = Tape::current();
  if (!Tape::tracks(t, a)) return;
  const int pa = a.node();
  const int id = t->record(
      {pa}, [pa, vjp = std::move(vjp)](const Tensor& up, Tape& tape) {
        tape.accumulate(pa, vjp(up));
      });
  out.set_node(id, t->serial());
}

void attach2(Tensor& out, const Tensor& a, const Tensor& b,
             std::function<Tensor(const Tensor&)> vjp_a,
             std::function<Tensor(const Tensor&)> vjp_b) {
  Tape* t = Tape::current();
  const bool ta = Tape::tracks(t, a);
  const bool tb = Tape::tracks(t, b);
  if (!ta && !tb) return;
  const int pa = ta ? a.node() : -1;
  const int pb = tb ? b.node() : -1;
  std::vector<int> parents;
  if (ta) parents.push_back(pa);
  if (tb) parents.push_back(pb);
  const int id =
      t->record(std::move(parents),
                [pa, pb, vjp_a = std::move(vjp_a), vjp_b = std::move(vjp_b)](
                    const Tensor& up, Tape& tape) {
                  if (pa >= 0) tape.accumulate(pa, vjp_a(up));
                  if (pb >= 0) tape.accumulate(pb, vjp_b(up));
                });
  out.set_node(id, t->serial());
}

enum class Bc { Equal, AScalar, BScalar };

Bc bc_kind(const Tensor& a, const Tensor& b, const char* name) {
  if (a.same_shape(b)) return Bc::Equal;
  // b first, so a single-element lhs (e.g. a 1x1 matrix) keeps its shape.
  if (b.is_scalar()) return Bc::BScalar;
  if (a.is_scalar()) return Bc::AScalar;
  throw ShapeError(std::string(name) +
                   ": only scalar<->tensor or equal-shape broadcasting");
}

// Upstream passthrough for add/sub-like ops: the scalar side collects the sum.
Tensor pass_vjp(const Tensor& up, bool self_scalar, double sign) {
  if (self_scalar && !up.is_scalar()) {
    double s = 0.0;
    for (double u : up.data()) s += u;
    return Tensor::scalar(sign * s);
  }
  Tensor g = up;
  g.set_node(-1);
  if (sign != 1.0)
    for (double& x : g.data()) x = sign * x;
  return g;
}

// Contribution up .* w (w broadcast if single-valued), reduced to a scalar
// when the receiving side was the scalar operand.
Tensor weighted_vjp(const Tensor& up, const std::vector<double>& w,
                    bool self_scalar) {
  const bool w_scalar = w.size() == 1;
  if (self_scalar && !up.is_scalar()) {
    double s = 0.0;
    for (std::size_t i = 0; i < up.numel(); ++i)
      s += up.at(i) * (w_scalar ? w[0] : w[i]);
    return Tensor::scalar(s);
  }
  Tensor g(up.shape());
  for (std::size_t i = 0; i < up.numel(); ++i)
    g.at(i) = up.at(i) * (w_scalar ? w[0] : w[i]);
  return g;
}

template <typename F>
Tensor ewise_forward(const Tensor& a, const Tensor& b, Bc bc, F f) {
  const Tensor& ref = (bc == Bc::AScalar) ? b : a;
  Tensor out(ref.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const double x = (bc == Bc::AScalar) ? a.at(0) : a.at(i);
    const double y = (bc == Bc::BScalar) ? b.at(0) : b.at(i);
    out.at(i) = f(x, y);
  }
  return out;
}

template <typename F, typename DF>
Tensor unary(const Tensor& a, F f, DF df) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.at(i) = f(a.at(i));
  attach1(out, a, [av = a.data(), df](const Tensor& up) {
    Tensor g(up.shape());
    for (std::size_t i = 0; i < up.numel(); ++i)
      g.at(i) = up.at(i) * df(av[i]);
    return g;
  });
  return out;
}

// Row-major [m x k] @ [k x n] on raw buffers. b is transposed into scratch so
// inner products stream contiguously; each output element still accumulates
// in ascending-k order (one accumulator per element), so results are
// bit-identical to the reference triple loop. Four columns per pass keeps
// independent dependency chains in flight.
std::vector<double> matmul_data(const double* a, std::size_t m, std::size_t k,
                                const double* b, std::size_t n) {
  std::vector<double> bt(k * n);
  for (std::size_t t = 0; t < k; ++t)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + t] = b[t * n + j];
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* ar = a + i * k;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const double* b0 = bt.data() + (j + 0) * k;
      const double* b1 = bt.data() + (j + 1) * k;
      const double* b2 = bt.data() + (j + 2) * k;
      const double* b3 = bt.data() + (j + 3) * k;
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
      for (std::size_t t = 0; t < k; ++t) {
        const double x = ar[t];
        s0 += x * b0[t];
        s1 += x * b1[t];
        s2 += x * b2[t];
        s3 += x * b3[t];
      }
      out[i * n + j + 0] = s0;
      out[i * n + j + 1] = s1;
      out[i * n + j + 2] = s2;
      out[i * n + j + 3] = s3;
    }
    for (; j < n; ++j) {
      const double* bj = bt.data() + j * k;
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += ar[t] * bj[t];
      out[i * n + j] = s;
    }
  }
  return out;
}

std::vector<double> transpose_data(const double* a, std::size_t m,
                                   std::size_t n) {
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  return out;
}

void require_rank2(const Tensor& t, const char* name) {
  if (t.ndim() != 2) throw ShapeError(std::string(name) + ": expected rank 2");
}

void require_rank1(const Tensor& t, const char* name) {
  if (t.ndim() != 1) throw ShapeError(std::string(name) + ": expected rank 1");
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const Bc bc = bc_kind(a, b, "add");
  Tensor out = ewise_forward(a, b, bc, [](double x, double y) { return x + y; });
  attach2(
      out, a, b,
      [sa = bc == Bc::AScalar](const Tensor& up) { return pass_vjp(up, sa, 1.0); },
      [sb = bc == Bc::BScalar](const Tensor& up) { return pass_vjp(up, sb, 1.0); });
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const Bc bc = bc_kind(a, b, "sub");
  Tensor out = ewise_forward(a, b, bc, [](double x, double y) { return x - y; });
  attach2(
      out, a, b,
      [sa = bc == Bc::AScalar](const Tensor& up) { return pass_vjp(up, sa, 1.0); },
      [sb = bc == Bc::BScalar](const Tensor& up) { return pass_vjp(up, sb, -1.0); });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const Bc bc = bc_kind(a, b, "mul");
  Tensor out = ewise_forward(a, b, bc, [](double x, double y) { return x * y; });
  attach2(out, a, b,
          [bv = b.data(), sa = bc == Bc::AScalar](const Tensor& up) {
            return weighted_vjp(up, bv, sa);
          },
          [av = a.data(), sb = bc == Bc::BScalar](const Tensor& up) {
            return weighted_vjp(up, av, sb);
          });
  return out;
}

Tensor divide(const Tensor& a, const Tensor& b) {
  const Bc bc = bc_kind(a, b, "divide");
  for (double y : b.data())
    if (y == 0.0) throw NumericError("divide: division by zero");
  Tensor out = ewise_forward(a, b, bc, [](double x, double y) { return x / y; });
  // d/da = up / b
  std::vector<double> inv_b(b.numel());
  for (std::size_t i = 0; i < b.numel(); ++i) inv_b[i] = 1.0 / b.at(i);
  // d/db = -up * a / b^2, evaluated per output element
  const bool a_scalar = bc == Bc::AScalar;
  const bool b_scalar = bc == Bc::BScalar;
  std::vector<double> dinv(out.numel());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const double x = a_scalar ? a.at(0) : a.at(i);
    const double y = b_scalar ? b.at(0) : b.at(i);
    dinv[i] = -x / (y * y);
  }
  attach2(out, a, b,
          [inv_b, a_scalar](const Tensor& up) {
            return weighted_vjp(up, inv_b, a_scalar);
          },
          [dinv, b_scalar](const Tensor& up) {
            return weighted_vjp(up, dinv, b_scalar);
          });
  return out;
}

Tensor add(const Tensor& a, double c) { return add(a, Tensor::scalar(c)); }
Tensor sub(const Tensor& a, double c) { return sub(a, Tensor::scalar(c)); }
Tensor sub(double c, const Tensor& a) { return sub(Tensor::scalar(c), a); }
Tensor scale(const Tensor& a, double c) { return mul(a, Tensor::scalar(c)); }
Tensor divide(const Tensor& a, double c) {
  return divide(a, Tensor::scalar(c));
}
Tensor divide(double c, const Tensor& a) {
  return divide(Tensor::scalar(c), a);
}
Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor elu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : std::expm1(x); },
      [](double x) { return x > 0.0 ? 1.0 : std::exp(x); });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, [](double x) { return std::exp(x); },
      [](double x) { return std::exp(x); });
}

Tensor log(const Tensor& a) {
  for (double x : a.data())
    if (x <= 0.0) throw NumericError("log: non-positive input");
  return unary(
      a, [](double x) { return std::log(x); },
      [](double x) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  for (double x : a.data())
    if (x < 0.0) throw NumericError("sqrt: negative input");
  return unary(
      a, [](double x) { return std::sqrt(x); },
      [](double x) { return 0.5 / std::sqrt(x); });
}

Tensor clamp_min(const Tensor& a, double lo) {
  return unary(
      a, [lo](double x) { return x > lo ? x : lo; },
      [lo](double x) { return x > lo ? 1.0 : 0.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions do not match");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros({m, n});
  out.data() = matmul_data(a.data().data(), m, k, b.data().data(), n);
  attach2(out, a, b,
          [bv = b.data(), m, k, n](const Tensor& up) {
            // dA = up @ B^T
            const std::vector<double> bt = transpose_data(bv.data(), k, n);
            Tensor g = Tensor::zeros({m, k});
            g.data() = matmul_data(up.data().data(), m, n, bt.data(), k);
            return g;
          },
          [av = a.data(), m, k, n](const Tensor& up) {
            // dB = A^T @ up
            const std::vector<double> at = transpose_data(av.data(), m, k);
            Tensor g = Tensor::zeros({k, n});
            g.data() = matmul_data(at.data(), k, m, up.data().data(), n);
            return g;
          });
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros({n, m});
  out.data() = transpose_data(a.data().data(), m, n);
  attach1(out, a, [m, n](const Tensor& up) {
    Tensor g = Tensor::zeros({m, n});
    g.data() = transpose_data(up.data().data(), n, m);
    return g;
  });
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis > 1) throw ShapeError("concat: axis out of range");
  const std::size_t rank = parts[0].ndim();
  for (const Tensor& p : parts)
    if (p.ndim() != rank) throw ShapeError("concat: mixed ranks");
  if (rank == 1 && axis != 0) throw ShapeError("concat: axis out of range");

  Tensor out;
  // Per-part placement for the backward slice: (row offset, col offset).
  std::vector<std::pair<std::size_t, std::size_t>> offsets;
  if (rank == 1) {
    std::size_t total = 0;
    for (const Tensor& p : parts) total += p.numel();
    out = Tensor::zeros({total});
    std::size_t at = 0;
    for (const Tensor& p : parts) {
      offsets.emplace_back(at, 0);
      std::copy(p.data().begin(), p.data().end(), out.data().begin() + at);
      at += p.numel();
    }
  } else if (axis == 0) {
    const std::size_t ncols = parts[0].cols();
    std::size_t total_rows = 0;
    for (const Tensor& p : parts) {
      if (p.cols() != ncols) throw ShapeError("concat: column count mismatch");
      total_rows += p.rows();
    }
    out = Tensor::zeros({total_rows, ncols});
    std::size_t at = 0;
    for (const Tensor& p : parts) {
      offsets.emplace_back(at, 0);
      std::copy(p.data().begin(), p.data().end(),
                out.data().begin() + at * ncols);
      at += p.rows();
    }
  } else {
    const std::size_t nrows = parts[0].rows();
    std::size_t total_cols = 0;
    for (const Tensor& p : parts) {
      if (p.rows() != nrows) throw ShapeError("concat: row count mismatch");
      total_cols += p.cols();
    }
    out = Tensor::zeros({nrows, total_cols});
    std::size_t at = 0;
    for (const Tensor& p : parts) {
      offsets.emplace_back(0, at);
      for (std::size_t i = 0; i < nrows; ++i)
        std::copy(p.data().begin() + i * p.cols(),
                  p.data().begin() + (i + 1) * p.cols(),
                  out.data().begin() + i * total_cols + at);
      at += p.cols();
    }
  }

  Tape* t = Tape::current();
  if (t) {
    std::vector<int> parents;
    // (node, part index) for each tracked input.
    std::vector<std::pair<int, std::size_t>> tracked;
    for (std::size_t i = 0; i < parts.size(); ++i)
      if (Tape::tracks(t, parts[i])) {
        parents.push_back(parts[i].node());
        tracked.emplace_back(parts[i].node(), i);
      }
    if (!tracked.empty()) {
      std::vector<std::vector<std::size_t>> shapes;
      for (const Tensor& p : parts) shapes.push_back(p.shape());
      const int id = t->record(
          parents, [tracked, shapes, offsets, rank, axis](const Tensor& up,
                                                          Tape& tape) {
            for (const auto& [node, idx] : tracked) {
              Tensor g = Tensor::zeros(shapes[idx]);
              const auto [ro, co] = offsets[idx];
              if (rank == 1) {
                std::copy(up.data().begin() + ro,
                          up.data().begin() + ro + g.numel(),
                          g.data().begin());
              } else if (axis == 0) {
                std::copy(up.data().begin() + ro * up.cols(),
                          up.data().begin() + (ro + g.rows()) * up.cols(),
                          g.data().begin());
              } else {
                for (std::size_t i = 0; i < g.rows(); ++i)
                  std::copy(up.data().begin() + i * up.cols() + co,
                            up.data().begin() + i * up.cols() + co + g.cols(),
                            g.data().begin() + i * g.cols());
              }
              tape.accumulate(node, g);
            }
          });
      out.set_node(id, t->serial());
    }
  }
  return out;
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  if (a.ndim() == 1 && axis != 0)
    throw ShapeError("softmax: axis out of range for rank 1");
  if (a.ndim() == 2 && axis > 1) throw ShapeError("softmax: axis out of range");

  Tensor out(a.shape());
  const std::size_t slices = (a.ndim() == 1) ? 1 : (axis == 1 ? a.rows() : a.cols());
  const std::size_t len = (a.ndim() == 1) ? a.numel() : (axis == 1 ? a.cols() : a.rows());
  auto index = [&](std::size_t s, std::size_t i) {
    if (a.ndim() == 1) return i;
    return axis == 1 ? s * len + i : i * slices + s;
  };
  for (std::size_t s = 0; s < slices; ++s) {
    double mx = a.at(index(s, 0));
    for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, a.at(index(s, i)));
    double z = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double e = std::exp(a.at(index(s, i)) - mx);
      out.at(index(s, i)) = e;
      z += e;
    }
    for (std::size_t i = 0; i < len; ++i) out.at(index(s, i)) /= z;
  }

  attach1(out, a,
          [y = out.data(), shape = a.shape(), slices, len, axis,
           rank = a.ndim()](const Tensor& up) {
            Tensor g = Tensor::zeros(shape);
            auto idx = [&](std::size_t s, std::size_t i) {
              if (rank == 1) return i;
              return axis == 1 ? s * len + i : i * slices + s;
            };
            for (std::size_t s = 0; s < slices; ++s) {
              double dot = 0.0;
              for (std::size_t i = 0; i < len; ++i)
                dot += up.at(idx(s, i)) * y[idx(s, i)];
              for (std::size_t i = 0; i < len; ++i)
                g.at(idx(s, i)) = y[idx(s, i)] * (up.at(idx(s, i)) - dot);
            }
            return g;
          });
  return out;
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  require_rank1(a, "cosine_similarity");
  require_rank1(b, "cosine_similarity");
  if (!a.same_shape(b))
    throw ShapeError("cosine_similarity: length mismatch");
  double na2 = 0.0, nb2 = 0.0, dot = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    na2 += a.at(i) * a.at(i);
    nb2 += b.at(i) * b.at(i);
    dot += a.at(i) * b.at(i);
  }
  if (na2 == 0.0 || nb2 == 0.0)
    throw NumericError("cosine_similarity: zero-norm input");
  const double na = std::sqrt(na2), nb = std::sqrt(nb2);
  const double c = dot / (na * nb);
  Tensor out = Tensor::scalar(c);
  attach2(out, a, b,
          [av = a.data(), bv = b.data(), na, nb, c](const Tensor& up) {
            Tensor g = Tensor::zeros({av.size()});
            for (std::size_t i = 0; i < av.size(); ++i)
              g.at(i) = up.at(0) * (bv[i] / (na * nb) - c * av[i] / (na * na));
            return g;
          },
          [av = a.data(), bv = b.data(), na, nb, c](const Tensor& up) {
            Tensor g = Tensor::zeros({bv.size()});
            for (std::size_t i = 0; i < bv.size(); ++i)
              g.at(i) = up.at(0) * (av[i] / (na * nb) - c * bv[i] / (nb * nb));
            return g;
          });
  return out;
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  Tensor out = Tensor::scalar(s);
  attach1(out, a, [shape = a.shape()](const Tensor& up) {
    return Tensor::full(shape, up.at(0));
  });
  return out;
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  double s = 0.0;
  for (double x : a.data()) s += x;
  Tensor out = Tensor::scalar(s / n);
  attach1(out, a, [shape = a.shape(), n](const Tensor& up) {
    return Tensor::full(shape, up.at(0) / n);
  });
  return out;
}

Tensor colsum(const Tensor& m) {
  require_rank2(m, "colsum");
  Tensor out = Tensor::zeros({m.cols()});
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out.at(j) += m.at(i, j);
  attach1(out, m, [rows = m.rows(), cols = m.cols()](const Tensor& up) {
    Tensor g = Tensor::zeros({rows, cols});
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) g.at(i, j) = up.at(j);
    return g;
  });
  return out;
}

Tensor broadcast_row(const Tensor& v, std::size_t rows) {
  require_rank1(v, "broadcast_row");
  if (rows == 0) throw ShapeError("broadcast_row: zero rows");
  Tensor out = Tensor::zeros({rows, v.numel()});
  for (std::size_t i = 0; i < rows; ++i)
    std::copy(v.data().begin(), v.data().end(),
              out.data().begin() + i * v.numel());
  attach1(out, v, [](const Tensor& up) {
    Tensor g = Tensor::zeros({up.cols()});
    for (std::size_t i = 0; i < up.rows(); ++i)
      for (std::size_t j = 0; j < up.cols(); ++j) g.at(j) += up.at(i, j);
    return g;
  });
  return out;
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  require_rank2(m, "add_rowvec");
  require_rank1(v, "add_rowvec");
  if (v.numel() != m.cols()) throw ShapeError("add_rowvec: width mismatch");
  Tensor out = m;
  out.set_node(-1);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out.at(i, j) += v.at(j);
  attach2(out, m, v,
          [](const Tensor& up) {
            Tensor g = up;
            g.set_node(-1);
            return g;
          },
          [](const Tensor& up) {
            Tensor g = Tensor::zeros({up.cols()});
            for (std::size_t i = 0; i < up.rows(); ++i)
              for (std::size_t j = 0; j < up.cols(); ++j)
                g.at(j) += up.at(i, j);
            return g;
          });
  return out;
}

Tensor mul_rowvec(const Tensor& m, const Tensor& v) {
  require_rank2(m, "mul_rowvec");
  require_rank1(v, "mul_rowvec");
  if (v.numel() != m.cols()) throw ShapeError("mul_rowvec: width mismatch");
  Tensor out = Tensor::zeros(m.shape());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      out.at(i, j) = m.at(i, j) * v.at(j);
  attach2(out, m, v,
          [vv = v.data()](const Tensor& up) {
            Tensor g = Tensor::zeros(up.shape());
            for (std::size_t i = 0; i < up.rows(); ++i)
              for (std::size_t j = 0; j < up.cols(); ++j)
                g.at(i, j) = up.at(i, j) * vv[j];
            return g;
          },
          [mv = m.data(), cols = m.cols()](const Tensor& up) {
            Tensor g = Tensor::zeros({cols});
            for (std::size_t i = 0; i < up.rows(); ++i)
              for (std::size_t j = 0; j < cols; ++j)
                g.at(j) += up.at(i, j) * mv[i * cols + j];
            return g;
          });
  return out;
}

Tensor mul_colvec(const Tensor& m, const Tensor& v) {
  require_rank2(m, "mul_colvec");
  require_rank1(v, "mul_colvec");
  if (v.numel() != m.rows()) throw ShapeError("mul_colvec: height mismatch");
  Tensor out = Tensor::zeros(m.shape());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      out.at(i, j) = m.at(i, j) * v.at(i);
  attach2(out, m, v,
          [vv = v.data()](const Tensor& up) {
            Tensor g = Tensor::zeros(up.shape());
            for (std::size_t i = 0; i < up.rows(); ++i)
              for (std::size_t j = 0; j < up.cols(); ++j)
                g.at(i, j) = up.at(i, j) * vv[i];
            return g;
          },
          [mv = m.data(), cols = m.cols()](const Tensor& up) {
            Tensor g = Tensor::zeros({up.rows()});
            for (std::size_t i = 0; i < up.rows(); ++i)
              for (std::size_t j = 0; j < cols; ++j)
                g.at(i) += up.at(i, j) * mv[i * cols + j];
            return g;
          });
  return out;
}

Tensor rows_normalize(const Tensor& m) {
  require_rank2(m, "rows_normalize");
  Tensor out = Tensor::zeros(m.shape());
  std::vector<double> norms(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) s += m.at(i, j) * m.at(i, j);
    if (s == 0.0) throw NumericError("rows_normalize: zero row");
    norms[i] = std::sqrt(s);
    for (std::size_t j = 0; j < m.cols(); ++j)
      out.at(i, j) = m.at(i, j) / norms[i];
  }
  // d(x/r)/dx = (I - u u^T) / r with u the unit row.
  attach1(out, m, [u = out.data(), norms, cols = m.cols()](const Tensor& up) {
    Tensor g = Tensor::zeros(up.shape());
    for (std::size_t i = 0; i < up.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j)
        dot += up.at(i, j) * u[i * cols + j];
      for (std::size_t j = 0; j < cols; ++j)
        g.at(i, j) = (up.at(i, j) - dot * u[i * cols + j]) / norms[i];
    }
    return g;
  });
  return out;
}

Tensor row_sqnorm(const Tensor& m) {
  require_rank2(m, "row_sqnorm");
  Tensor out = Tensor::zeros({m.rows()});
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      out.at(i) += m.at(i, j) * m.at(i, j);
  attach1(out, m, [mv = m.data(), cols = m.cols()](const Tensor& up) {
    Tensor g = Tensor::zeros({up.numel(), cols});
    for (std::size_t i = 0; i < up.numel(); ++i)
      for (std::size_t j = 0; j < cols; ++j)
        g.at(i, j) = 2.0 * up.at(i) * mv[i * cols + j];
    return g;
  });
  return out;
}

Tensor row(const Tensor& m, std::size_t r) {
  require_rank2(m, "row");
  if (r >= m.rows()) throw ShapeError("row: index out of range");
  Tensor out = Tensor::zeros({1, m.cols()});
  std::copy(m.data().begin() + r * m.cols(),
            m.data().begin() + (r + 1) * m.cols(), out.data().begin());
  attach1(out, m, [rows = m.rows(), cols = m.cols(), r](const Tensor& up) {
    Tensor g = Tensor::zeros({rows, cols});
    std::copy(up.data().begin(), up.data().end(),
              g.data().begin() + r * cols);
    return g;
  });
  return out;
}

std::vector<Tensor> split(const Tensor& t, std::size_t axis,
                          const std::vector<std::size_t>& sizes) {
  std::vector<Tensor> out;
  std::size_t at = 0;
  for (std::size_t sz : sizes) {
    if (t.ndim() == 1) {
      if (axis != 0 || at + sz > t.numel())
        throw ShapeError("split: bad sizes");
      Tensor p = Tensor::zeros({sz});
      std::copy(t.data().begin() + at, t.data().begin() + at + sz,
                p.data().begin());
      out.push_back(std::move(p));
    } else if (axis == 0) {
      if (at + sz > t.rows()) throw ShapeError("split: bad sizes");
      Tensor p = Tensor::zeros({sz, t.cols()});
      std::copy(t.data().begin() + at * t.cols(),
                t.data().begin() + (at + sz) * t.cols(), p.data().begin());
      out.push_back(std::move(p));
    } else {
      if (at + sz > t.cols()) throw ShapeError("split: bad sizes");
      Tensor p = Tensor::zeros({t.rows(), sz});
      for (std::size_t i = 0; i < t.rows(); ++i)
        std::copy(t.data().begin() + i * t.cols() + at,
                  t.data().begin() + i * t.cols() + at + sz,
                  p.data().begin() + i * sz);
      out.push_back(std::move(p));
    }
    at += sz;
  }
  return out;
}

}  // namespace protoflow
