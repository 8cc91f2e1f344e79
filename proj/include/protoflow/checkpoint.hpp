#pragma once

#include <string>
#include <utility>
#include <vector>

#include "protoflow/flow.hpp"
#include "protoflow/solver.hpp"
#include "protoflow/tensor.hpp"

namespace protoflow {

// Serializable model snapshot. On disk this is a "PFPW" stream of named
// tensors; the scalar metadata fields travel as reserved "meta.*" entries so
// the container stays a single uniform record type.
struct Checkpoint {
  FlowKind flow_kind = FlowKind::e2gradnet;
  SolverKind solver_kind = SolverKind::euler;
  std::size_t steps = 40;
  double integral_time = 40.0;
  double gamma = 10.0;
  std::size_t n_way = 5;
  std::size_t dim = 64;
  std::size_t modules = 4;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace protoflow
