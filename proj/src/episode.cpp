#include "protoflow/episode.hpp"

#include <string>

#include "protoflow/error.hpp"

namespace protoflow {

namespace {

Tensor onehot_rows(const std::vector<std::size_t>& labels, std::size_t n_way) {
  Tensor out = Tensor::zeros({labels.size(), n_way});
  for (std::size_t i = 0; i < labels.size(); ++i) out.at(i, labels[i]) = 1.0;
  return out;
}

// First `take` elements of a partial Fisher-Yates pass over 0..n-1.
std::vector<std::size_t> pick_distinct(std::size_t n, std::size_t take,
                                       Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(take);
  return idx;
}

}  // namespace

Tensor Episode::support_onehot() const {
  return onehot_rows(support_labels, n_way);
}

Tensor Episode::query_onehot() const { return onehot_rows(query_labels, n_way); }

Episode sample_episode(const EmbeddingDataset& ds, const EpisodeConfig& config,
                       Rng& rng) {
  if (config.n_way < 2) throw SamplingError("episode: n_way must be >= 2");
  if (config.k_shot == 0 || config.queries_per_class == 0)
    throw SamplingError("episode: k_shot and queries_per_class must be >= 1");
  const auto ids = ds.class_ids();
  if (ids.size() < config.n_way)
    throw SamplingError("episode: dataset has " + std::to_string(ids.size()) +
                        " classes, need " + std::to_string(config.n_way));

  Episode ep;
  ep.n_way = config.n_way;
  ep.k_shot = config.k_shot;
  ep.queries_per_class = config.queries_per_class;
  ep.dim = ds.dim();
  ep.mode = config.mode;

  for (std::size_t slot : pick_distinct(ids.size(), config.n_way, rng))
    ep.class_ids.push_back(ids[slot]);

  const std::size_t per_class = config.k_shot + config.queries_per_class;
  ep.support = Tensor::zeros({config.n_way * config.k_shot, ds.dim()});
  ep.query =
      Tensor::zeros({config.n_way * config.queries_per_class, ds.dim()});

  for (std::size_t label = 0; label < config.n_way; ++label) {
    const std::uint32_t cid = ep.class_ids[label];
    const auto& samples = ds.samples_of(cid);
    if (samples.size() < per_class)
      throw SamplingError("episode: class " + std::to_string(cid) + " has " +
                          std::to_string(samples.size()) + " samples, need " +
                          std::to_string(per_class));
    const auto chosen = pick_distinct(samples.size(), per_class, rng);
    for (std::size_t s = 0; s < config.k_shot; ++s) {
      const std::size_t r = label * config.k_shot + s;
      for (std::size_t j = 0; j < ds.dim(); ++j)
        ep.support.at(r, j) = samples[chosen[s]][j];
      ep.support_labels.push_back(label);
      ep.support_origin.emplace_back(cid, chosen[s]);
    }
    for (std::size_t q = 0; q < config.queries_per_class; ++q) {
      const std::size_t r = label * config.queries_per_class + q;
      const std::size_t src = chosen[config.k_shot + q];
      for (std::size_t j = 0; j < ds.dim(); ++j)
        ep.query.at(r, j) = samples[src][j];
      ep.query_labels.push_back(label);
      ep.query_origin.emplace_back(cid, src);
    }
  }
  return ep;
}

}  // namespace protoflow
