#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "protoflow/tensor.hpp"

namespace protoflow {

class Tape;

// Trainable tensor with an accumulating gradient buffer. Gradients persist
// across tapes (episode batching adds into them); the optimizer zeroes them.
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Tensor value);

  const std::string& name() const { return name_; }
  Tensor& value() { return value_; }
  const Tensor& value() const { return value_; }
  Tensor& grad() { return grad_; }
  const Tensor& grad() const { return grad_; }
  void zero_grad();

  // Leaf view of the current value on the active tape (plain copy when no
  // tape is active). Repeated use() calls within one tape share one leaf, so
  // gradients from every use accumulate into the same slot.
  Tensor use();

 private:
  std::string name_;
  Tensor value_;
  Tensor grad_;
};

// Dynamic reverse-mode tape, rebuilt per episode. Nodes are recorded in
// execution order, which is already a topological order of the DAG, so the
// backward sweep is a single reverse pass that visits each node once. One
// tape per thread; activation is scoped (TapeScope), never shared.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current();

  using BackwardFn = std::function<void(const Tensor& upstream, Tape& tape)>;

  int record(std::vector<int> parents, BackwardFn fn);
  int leaf_for(Parameter* p);

  // Seeds d(loss)/d(loss)=1 and sweeps the tape in reverse creation order.
  // Populates Parameter::grad (+=) for every watched parameter; parameters
  // not reachable from the loss receive zero contribution.
  void backward(const Tensor& loss);

  // Called by backward lambdas to add a contribution to a parent node.
  void accumulate(int node, const Tensor& contribution);

  // Gradient of the last backward() w.r.t. a tracked tensor.
  const Tensor& grad_of(const Tensor& t) const;

  std::size_t size() const { return nodes_.size(); }
  std::size_t last_backward_visits() const { return last_visits_; }
  std::uint64_t serial() const { return serial_; }

  // True when `t` carries a live node id on tape `tape` (which may be null).
  static bool tracks(const Tape* tape, const Tensor& t) {
    return tape && t.tracked() && t.tape_serial() == tape->serial();
  }

 private:
  struct Node {
    std::vector<int> parents;
    BackwardFn backward;
  };
  static std::uint64_t next_serial();
  std::uint64_t serial_ = next_serial();
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::unordered_map<Parameter*, int> watched_;
  std::vector<std::pair<int, Parameter*>> param_leaves_;
  std::size_t last_visits_ = 0;
};

// RAII activation of a tape on this thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Registers `value` as a differentiable leaf on the active tape (no-op
// passthrough when none). For gradients w.r.t. non-parameter inputs.
Tensor variable(Tensor value);

}  // namespace protoflow
