#include "protoflow/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include "protoflow/binio.hpp"
#include "protoflow/error.hpp"

namespace protoflow {

namespace {

constexpr char kMagic[4] = {'P', 'F', 'P', 'W'};
constexpr std::uint32_t kVersion = 1;

using binio::read_le;
using binio::write_le;

void write_entry(std::ostream& out, const std::string& name,
                 const Tensor& t) {
  if (name.size() > 0xffff)
    throw FormatError("checkpoint: tensor name too long");
  write_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.ndim()));
  for (std::size_t d : t.shape())
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  for (double v : t.data()) write_le<double>(out, v);
}

std::pair<std::string, Tensor> read_entry(std::istream& in) {
  const auto name_len = read_le<std::uint16_t>(in);
  std::string name(name_len, '\0');
  in.read(name.data(), name_len);
  if (!in) throw IoError("truncated stream");
  const auto rank = read_le<std::uint32_t>(in);
  if (rank < 1 || rank > 2)
    throw FormatError("checkpoint: unsupported tensor rank");
  std::vector<std::size_t> shape;
  std::size_t numel = 1;
  for (std::uint32_t r = 0; r < rank; ++r) {
    const auto d = read_le<std::uint32_t>(in);
    if (d == 0) throw FormatError("checkpoint: zero tensor dimension");
    shape.push_back(d);
    numel *= d;
  }
  std::vector<double> data(numel);
  for (double& v : data) v = read_le<double>(in);
  Tensor t = Tensor::zeros(shape);
  t.data() = std::move(data);
  return {std::move(name), std::move(t)};
}

double meta_value(const std::map<std::string, Tensor>& meta,
                  const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end())
    throw FormatError("checkpoint: missing metadata field " + key);
  return it->second.at(0);
}

std::size_t meta_count(const std::map<std::string, Tensor>& meta,
                       const std::string& key) {
  const double v = meta_value(meta, key);
  if (v < 0 || v != std::floor(v))
    throw FormatError("checkpoint: bad integer field " + key);
  return static_cast<std::size_t>(v);
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(kMagic, 4);
  write_le<std::uint32_t>(out, kVersion);

  const std::vector<std::pair<std::string, double>> meta = {
      {"meta.flow_kind", static_cast<double>(static_cast<int>(ck.flow_kind))},
      {"meta.solver_kind",
       static_cast<double>(static_cast<int>(ck.solver_kind))},
      {"meta.steps", static_cast<double>(ck.steps)},
      {"meta.integral_time", ck.integral_time},
      {"meta.gamma", ck.gamma},
      {"meta.n_way", static_cast<double>(ck.n_way)},
      {"meta.dim", static_cast<double>(ck.dim)},
      {"meta.modules", static_cast<double>(ck.modules)},
  };
  write_le<std::uint64_t>(out, meta.size() + ck.tensors.size());
  for (const auto& [name, v] : meta)
    write_entry(out, name, Tensor::scalar(v));
  for (const auto& [name, t] : ck.tensors) write_entry(out, name, t);
  if (!out) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("not a PFPW checkpoint: " + path);
  const auto version = read_le<std::uint32_t>(in);
  if (version != kVersion)
    throw FormatError("unsupported PFPW version");
  const auto count = read_le<std::uint64_t>(in);

  std::map<std::string, Tensor> meta;
  Checkpoint ck;
  ck.tensors.clear();
  for (std::uint64_t i = 0; i < count; ++i) {
    auto [name, t] = read_entry(in);
    if (name.rfind("meta.", 0) == 0)
      meta.emplace(std::move(name), std::move(t));
    else
      ck.tensors.emplace_back(std::move(name), std::move(t));
  }

  const std::size_t fk = meta_count(meta, "meta.flow_kind");
  const std::size_t sk = meta_count(meta, "meta.solver_kind");
  if (fk > 3) throw FormatError("checkpoint: unknown flow kind");
  if (sk > 2) throw FormatError("checkpoint: unknown solver kind");
  ck.flow_kind = static_cast<FlowKind>(fk);
  ck.solver_kind = static_cast<SolverKind>(sk);
  ck.steps = meta_count(meta, "meta.steps");
  ck.integral_time = meta_value(meta, "meta.integral_time");
  ck.gamma = meta_value(meta, "meta.gamma");
  ck.n_way = meta_count(meta, "meta.n_way");
  ck.dim = meta_count(meta, "meta.dim");
  ck.modules = meta_count(meta, "meta.modules");
  return ck;
}

}  // namespace protoflow
