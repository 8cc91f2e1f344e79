#include "protoflow/dataset.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "protoflow/binio.hpp"
#include "protoflow/error.hpp"
#include "protoflow/rng.hpp"

namespace protoflow {

void EmbeddingDataset::add(std::uint32_t class_id, std::vector<double> vec) {
  if (dim_ == 0) dim_ = vec.size();
  if (vec.size() != dim_)
    throw ShapeError("dataset: vector dimension mismatch");
  for (double x : vec)
    if (!std::isfinite(x))
      throw NumericError("dataset: non-finite embedding value");
  classes_[class_id].push_back(std::move(vec));
}

std::vector<std::uint32_t> EmbeddingDataset::class_ids() const {
  std::vector<std::uint32_t> ids;
  ids.reserve(classes_.size());
  for (const auto& [id, _] : classes_) ids.push_back(id);
  return ids;
}

std::size_t EmbeddingDataset::total_samples() const {
  std::size_t n = 0;
  for (const auto& [_, v] : classes_) n += v.size();
  return n;
}

const std::vector<std::vector<double>>& EmbeddingDataset::samples_of(
    std::uint32_t class_id) const {
  auto it = classes_.find(class_id);
  if (it == classes_.end())
    throw SamplingError("dataset: unknown class id " +
                        std::to_string(class_id));
  return it->second;
}

std::vector<double> EmbeddingDataset::class_mean(
    std::uint32_t class_id) const {
  const auto& samples = samples_of(class_id);
  std::vector<double> mean(dim_, 0.0);
  for (const auto& s : samples)
    for (std::size_t j = 0; j < dim_; ++j) mean[j] += s[j];
  for (double& x : mean) x /= static_cast<double>(samples.size());
  return mean;
}

EmbeddingDataset synth_gaussian(const SynthConfig& config) {
  if (config.num_classes == 0 || config.dim == 0 ||
      config.samples_per_class == 0)
    throw ConfigError("synth: classes, dim and samples must be positive");
  if (config.noise_sigma < 0.0 || config.center_scale <= 0.0)
    throw ConfigError("synth: bad scale parameters");
  Rng rng(config.seed);
  EmbeddingDataset ds(config.dim, Split::train);
  for (std::uint32_t c = 0; c < config.num_classes; ++c) {
    std::vector<double> center(config.dim);
    double norm2 = 0.0;
    for (double& x : center) {
      x = rng.normal();
      norm2 += x * x;
    }
    const double r = std::sqrt(norm2);
    for (double& x : center) x = config.center_scale * x / r;
    for (std::size_t s = 0; s < config.samples_per_class; ++s) {
      std::vector<double> v(config.dim);
      for (std::size_t j = 0; j < config.dim; ++j)
        v[j] = center[j] + config.noise_sigma * rng.normal();
      ds.add(c, std::move(v));
    }
  }
  return ds;
}

namespace {

constexpr char kMagic[4] = {'P', 'F', 'E', 'B'};
constexpr std::uint32_t kVersion = 1;

using binio::read_le;
using binio::write_le;

}  // namespace

void save_pfeb(const EmbeddingDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(kMagic, 4);
  write_le<std::uint32_t>(out, kVersion);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.dim()));
  write_le<std::uint64_t>(out, ds.total_samples());
  for (const auto& [class_id, samples] : ds.classes())
    for (const auto& v : samples) {
      write_le<std::uint32_t>(out, class_id);
      for (double x : v) write_le<double>(out, x);
    }
  if (!out) throw IoError("write failure: " + path);
}

EmbeddingDataset load_pfeb(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("bad magic: " + path);
  const auto version = read_le<std::uint32_t>(in);
  if (version != kVersion)
    throw FormatError("unsupported version " + std::to_string(version));
  const auto dim = read_le<std::uint32_t>(in);
  const auto count = read_le<std::uint64_t>(in);
  if (dim == 0) throw FormatError("zero dimension");
  EmbeddingDataset ds(dim, Split::train);
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto class_id = read_le<std::uint32_t>(in);
    std::vector<double> v(dim);
    for (std::uint32_t j = 0; j < dim; ++j) v[j] = read_le<double>(in);
    ds.add(class_id, std::move(v));
  }
  return ds;
}

EmbeddingDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty csv: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::stringstream header(line);
  std::string col;
  if (!std::getline(header, col, ',') || col != "class_id")
    throw FormatError("csv header must start with class_id");
  std::size_t dim = 0;
  while (std::getline(header, col, ',')) {
    if (col != "e" + std::to_string(dim))
      throw FormatError("csv header column " + std::to_string(dim + 1) +
                        " must be e" + std::to_string(dim));
    ++dim;
  }
  if (dim == 0) throw FormatError("csv has no embedding columns");
  EmbeddingDataset ds(dim, Split::train);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    if (!std::getline(row, cell, ','))
      throw FormatError("csv line " + std::to_string(lineno) + ": empty row");
    std::uint32_t class_id = 0;
    try {
      class_id = static_cast<std::uint32_t>(std::stoul(cell));
    } catch (const std::exception&) {
      throw FormatError("csv line " + std::to_string(lineno) +
                        ": bad class id '" + cell + "'");
    }
    std::vector<double> v;
    v.reserve(dim);
    while (std::getline(row, cell, ',')) {
      try {
        v.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw FormatError("csv line " + std::to_string(lineno) +
                          ": bad value '" + cell + "'");
      }
    }
    if (v.size() != dim)
      throw FormatError("csv line " + std::to_string(lineno) + ": expected " +
                        std::to_string(dim) + " values, got " +
                        std::to_string(v.size()));
    ds.add(class_id, std::move(v));
  }
  return ds;
}

EmbeddingDataset load_embeddings(const std::string& path) {
  const auto dot = path.find_last_of('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
  if (ext == ".csv") return load_csv(path);
  return load_pfeb(path);
}

std::array<EmbeddingDataset, 3> split_by_classes(const EmbeddingDataset& ds,
                                                 std::size_t n_train,
                                                 std::size_t n_val,
                                                 std::size_t n_test) {
  const auto ids = ds.class_ids();
  if (n_train + n_val + n_test > ids.size())
    throw ConfigError("split: dataset has only " +
                      std::to_string(ids.size()) + " classes");
  std::array<EmbeddingDataset, 3> out = {
      EmbeddingDataset(ds.dim(), Split::train),
      EmbeddingDataset(ds.dim(), Split::val),
      EmbeddingDataset(ds.dim(), Split::test)};
  for (std::size_t i = 0; i < n_train + n_val + n_test; ++i) {
    const std::size_t part = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);
    for (const auto& v : ds.samples_of(ids[i])) out[part].add(ids[i], v);
  }
  return out;
}

}  // namespace protoflow
