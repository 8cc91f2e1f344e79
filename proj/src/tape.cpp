#include "protoflow/tape.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <string>

#include "protoflow/error.hpp"

namespace protoflow {

namespace {
thread_local Tape* g_current_tape = nullptr;
}

std::uint64_t Tape::next_serial() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}

Parameter::Parameter(std::string name, Tensor value)
    : name_(std::move(name)),
      value_(std::move(value)),
      grad_(Tensor::zeros(value_.shape())) {}

void Parameter::zero_grad() { grad_ = Tensor::zeros(value_.shape()); }

Tensor Parameter::use() {
  Tensor v = value_;
  if (Tape* t = Tape::current()) v.set_node(t->leaf_for(this), t->serial());
  return v;
}

Tape* Tape::current() { return g_current_tape; }

int Tape::record(std::vector<int> parents, BackwardFn fn) {
  nodes_.push_back({std::move(parents), std::move(fn)});
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::leaf_for(Parameter* p) {
  auto it = watched_.find(p);
  if (it != watched_.end()) return it->second;
  const int id = record({}, nullptr);
  watched_.emplace(p, id);
  param_leaves_.emplace_back(id, p);
  return id;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.is_scalar()) throw ShapeError("backward: loss must be a scalar");
  if (!Tape::tracks(this, loss) || nodes_.empty())
    throw NumericError("backward: loss is not connected to this tape");
  grads_.assign(nodes_.size(), Tensor());
  grads_[static_cast<std::size_t>(loss.node())] = Tensor::scalar(1.0);
  last_visits_ = 0;
  for (int i = loss.node(); i >= 0; --i) {
    const auto idx = static_cast<std::size_t>(i);
    if (!grads_[idx].defined()) continue;  // not on the path to the loss
    ++last_visits_;
    if (nodes_[idx].backward) nodes_[idx].backward(grads_[idx], *this);
  }
  // Parameters may be shared by tapes running on other threads (parallel
  // episode batches); only this final fan-in touches shared state.
  static std::mutex param_mutex;
  std::lock_guard<std::mutex> lock(param_mutex);
  for (auto& [node, param] : param_leaves_) {
    const Tensor& g = grads_[static_cast<std::size_t>(node)];
    if (!g.defined()) continue;  // unreachable parameter: zero contribution
    auto& acc = param->grad().data();
    const auto& src = g.data();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += src[i];
  }
}

void Tape::accumulate(int node, const Tensor& contribution) {
  for (double x : contribution.data())
    if (std::isnan(x))
      throw NumericError("NaN gradient flowing into tape node " +
                         std::to_string(node));
  auto& slot = grads_[static_cast<std::size_t>(node)];
  if (!slot.defined()) {
    slot = contribution;
    slot.set_node(-1);
    return;
  }
  auto& acc = slot.data();
  const auto& src = contribution.data();
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += src[i];
}

const Tensor& Tape::grad_of(const Tensor& t) const {
  if (!Tape::tracks(this, t))
    throw NumericError("grad_of: tensor is not on this tape");
  const auto idx = static_cast<std::size_t>(t.node());
  if (idx >= grads_.size() || !grads_[idx].defined()) {
    static const Tensor undefined;
    return undefined;
  }
  return grads_[idx];
}

TapeScope::TapeScope(Tape& tape) : previous_(g_current_tape) {
  g_current_tape = &tape;
}

TapeScope::~TapeScope() { g_current_tape = previous_; }

Tensor variable(Tensor value) {
  if (Tape* t = Tape::current())
    value.set_node(t->record({}, nullptr), t->serial());
  return value;
}

}  // namespace protoflow
