#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "protoflow/dataset.hpp"
#include "protoflow/rng.hpp"
#include "protoflow/tensor.hpp"

namespace protoflow {

// Transductive episodes let the flow networks see the unlabeled query
// vectors; inductive episodes expose the support set only.
enum class EpisodeMode { inductive, transductive };

struct EpisodeConfig {
  std::size_t n_way = 5;
  std::size_t k_shot = 1;
  std::size_t queries_per_class = 15;
  EpisodeMode mode = EpisodeMode::transductive;
};

// One N-way K-shot task. Rows are class-major (all of label 0, then label 1,
// ...); labels are episode-local 0..N-1. `origin` pairs record the dataset
// class id and the sample index inside that class, for disjointness checks
// and diagnostics.
struct Episode {
  std::size_t n_way = 0;
  std::size_t k_shot = 0;
  std::size_t queries_per_class = 0;
  std::size_t dim = 0;
  EpisodeMode mode = EpisodeMode::transductive;

  std::vector<std::uint32_t> class_ids;  // episode label -> dataset class id

  Tensor support;  // [n_way*k_shot x dim]
  std::vector<std::size_t> support_labels;
  std::vector<std::pair<std::uint32_t, std::size_t>> support_origin;

  Tensor query;  // [n_way*queries_per_class x dim]
  std::vector<std::size_t> query_labels;
  std::vector<std::pair<std::uint32_t, std::size_t>> query_origin;

  Tensor support_onehot() const;  // [S x N]
  Tensor query_onehot() const;    // [Q x N]
};

// Draws N distinct classes, then K+Q distinct samples per class; the first K
// go to the support set. Deterministic given the rng state.
Episode sample_episode(const EmbeddingDataset& ds, const EpisodeConfig& config,
                       Rng& rng);

}  // namespace protoflow
