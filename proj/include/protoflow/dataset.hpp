#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace protoflow {

enum class Split { train, val, test };

// Embedding vectors grouped by integer class id. Iteration order over classes
// is always ascending id (std::map), which keeps sampling deterministic.
class EmbeddingDataset {
 public:
  EmbeddingDataset() = default;
  EmbeddingDataset(std::size_t dim, Split split) : dim_(dim), split_(split) {}

  std::size_t dim() const { return dim_; }
  Split split() const { return split_; }
  void set_split(Split s) { split_ = s; }

  // Validates dimension and rejects non-finite values.
  void add(std::uint32_t class_id, std::vector<double> vec);

  const std::map<std::uint32_t, std::vector<std::vector<double>>>& classes()
      const {
    return classes_;
  }
  std::vector<std::uint32_t> class_ids() const;
  std::size_t num_classes() const { return classes_.size(); }
  std::size_t total_samples() const;
  const std::vector<std::vector<double>>& samples_of(
      std::uint32_t class_id) const;

  // Mean over every sample of the class (the population prototype used by
  // the bias diagnostics).
  std::vector<double> class_mean(std::uint32_t class_id) const;

 private:
  std::size_t dim_ = 0;
  Split split_ = Split::train;
  std::map<std::uint32_t, std::vector<std::vector<double>>> classes_;
};

struct SynthConfig {
  std::size_t num_classes = 30;
  std::size_t dim = 64;
  std::size_t samples_per_class = 200;
  double center_scale = 1.0;
  double noise_sigma = 0.35;
  std::uint64_t seed = 1;
};

// Class centers drawn uniformly on the sphere of radius center_scale, then
// isotropic Gaussian noise per sample.
EmbeddingDataset synth_gaussian(const SynthConfig& config);

// Binary dataset container. Little-endian layout:
//   "PFEB" | u32 version=1 | u32 dim | u64 record_count |
//   record_count x (u32 class_id, dim x f64)
void save_pfeb(const EmbeddingDataset& ds, const std::string& path);
EmbeddingDataset load_pfeb(const std::string& path);

// CSV with header: class_id,e0,...,e{dim-1}
EmbeddingDataset load_csv(const std::string& path);

// Dispatches on extension (.pfeb binary, .csv text).
EmbeddingDataset load_embeddings(const std::string& path);

// Partitions by ascending class id into disjoint train/val/test class sets.
std::array<EmbeddingDataset, 3> split_by_classes(const EmbeddingDataset& ds,
                                                 std::size_t n_train,
                                                 std::size_t n_val,
                                                 std::size_t n_test);

}  // namespace protoflow
