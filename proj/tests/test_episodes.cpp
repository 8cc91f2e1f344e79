#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <string>

#include "oracles.hpp"
#include "protoflow/dataset.hpp"
#include "protoflow/episode.hpp"
#include "protoflow/error.hpp"

using namespace protoflow;

namespace {

std::string temp_path(const std::string& name) {
  return std::string("/tmp/protoflow_test_") + name;
}

// Byte-level writer independent of the library implementation (assumes a
// little-endian host, which the build targets).
void write_reference_pfeb(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  out.write("PFEB", 4);
  const std::uint32_t version = 1, dim = 2;
  const std::uint64_t count = 3;
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&dim), 4);
  out.write(reinterpret_cast<const char*>(&count), 8);
  const std::uint32_t ids[3] = {7, 7, 9};
  const double vecs[3][2] = {{1.5, -2.5}, {0.25, 0.75}, {-1.0, 3.0}};
  for (int r = 0; r < 3; ++r) {
    out.write(reinterpret_cast<const char*>(&ids[r]), 4);
    out.write(reinterpret_cast<const char*>(vecs[r]), 16);
  }
}

EmbeddingDataset tiny_synth(std::size_t classes = 20, std::size_t dim = 8,
                            std::size_t per_class = 40,
                            std::uint64_t seed = 5) {
  SynthConfig cfg;
  cfg.num_classes = classes;
  cfg.dim = dim;
  cfg.samples_per_class = per_class;
  cfg.seed = seed;
  return synth_gaussian(cfg);
}

}  // namespace

TEST_CASE("binary round-trip preserves every record") {
  EmbeddingDataset ds(3, Split::train);
  Rng rng(17);
  for (std::uint32_t c : {2u, 5u, 11u})
    for (int s = 0; s < 4; ++s)
      ds.add(c, {rng.normal(), rng.normal(), rng.normal()});

  const std::string path = temp_path("roundtrip.pfeb");
  save_pfeb(ds, path);
  EmbeddingDataset back = load_pfeb(path);
  CHECK(back.dim() == 3);
  CHECK(back.num_classes() == 3);
  CHECK(back.total_samples() == 12);
  for (std::uint32_t c : {2u, 5u, 11u}) {
    const auto& a = ds.samples_of(c);
    const auto& b = back.samples_of(c);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
      CHECK(oracle::max_abs_diff(a[i], b[i]) == 0.0);
  }
  std::remove(path.c_str());
}

TEST_CASE("binary loader reads a hand-written reference file") {
  const std::string path = temp_path("reference.pfeb");
  write_reference_pfeb(path);
  EmbeddingDataset ds = load_pfeb(path);
  CHECK(ds.dim() == 2);
  CHECK(ds.num_classes() == 2);
  CHECK(ds.samples_of(7).size() == 2);
  CHECK(ds.samples_of(7)[0][0] == 1.5);
  CHECK(ds.samples_of(7)[1][1] == 0.75);
  CHECK(ds.samples_of(9)[0][1] == 3.0);
  std::remove(path.c_str());
}

TEST_CASE("binary loader rejects malformed files") {
  const std::string path = temp_path("bad.pfeb");
  {
    std::ofstream out(path, std::ios::binary);
    out.write("NOPE", 4);
  }
  CHECK_THROWS_AS(load_pfeb(path), FormatError);

  {
    std::ofstream out(path, std::ios::binary);
    out.write("PFEB", 4);
    const std::uint32_t version = 99;
    out.write(reinterpret_cast<const char*>(&version), 4);
  }
  CHECK_THROWS_AS(load_pfeb(path), FormatError);

  write_reference_pfeb(path);
  // Truncate mid-record.
  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  in.close();
  {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 9));
  }
  CHECK_THROWS_AS(load_pfeb(path), IoError);
  CHECK_THROWS_AS(load_pfeb(temp_path("missing_file.pfeb")), IoError);
  std::remove(path.c_str());
}

TEST_CASE("csv ingestion parses valid files and rejects bad ones") {
  const std::string path = temp_path("data.csv");
  {
    std::ofstream out(path);
    out << "class_id,e0,e1\n";
    out << "3,0.5,-1.5\n";
    out << "3,1.0,2.0\n";
    out << "8,0.0,0.25\n";
  }
  EmbeddingDataset ds = load_csv(path);
  CHECK(ds.dim() == 2);
  CHECK(ds.samples_of(3).size() == 2);
  CHECK(ds.samples_of(8)[0][1] == 0.25);
  CHECK(load_embeddings(path).total_samples() == 3);

  {
    std::ofstream out(path);
    out << "id,e0,e1\n3,0.5,-1.5\n";
  }
  CHECK_THROWS_AS(load_csv(path), FormatError);
  {
    std::ofstream out(path);
    out << "class_id,e0,e1\n3,0.5\n";
  }
  CHECK_THROWS_AS(load_csv(path), FormatError);
  {
    std::ofstream out(path);
    out << "class_id,e0,e1\n3,0.5,abc\n";
  }
  CHECK_THROWS_AS(load_csv(path), FormatError);
  std::remove(path.c_str());
}

TEST_CASE("synthetic generator is deterministic with unit-sphere centers") {
  SynthConfig cfg;
  cfg.num_classes = 4;
  cfg.dim = 16;
  cfg.samples_per_class = 10;
  cfg.center_scale = 2.5;
  cfg.noise_sigma = 0.0;
  cfg.seed = 99;
  EmbeddingDataset a = synth_gaussian(cfg);
  EmbeddingDataset b = synth_gaussian(cfg);
  CHECK(a.num_classes() == 4);
  for (std::uint32_t c : a.class_ids()) {
    // noise 0: every sample sits exactly on the center, radius center_scale
    const auto& sa = a.samples_of(c);
    double n2 = 0.0;
    for (double x : sa[0]) n2 += x * x;
    CHECK(std::sqrt(n2) == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(oracle::max_abs_diff(sa[0], sa.back()) == 0.0);
    CHECK(oracle::max_abs_diff(sa[0], b.samples_of(c)[0]) == 0.0);
  }
  cfg.seed = 100;
  EmbeddingDataset c2 = synth_gaussian(cfg);
  CHECK(oracle::max_abs_diff(a.samples_of(0)[0], c2.samples_of(0)[0]) > 0.0);
}

TEST_CASE("synthetic sample means concentrate on the class centers") {
  SynthConfig cfg;
  cfg.num_classes = 2;
  cfg.dim = 8;
  cfg.samples_per_class = 10000;
  cfg.noise_sigma = 0.35;
  cfg.seed = 31;
  EmbeddingDataset ds = synth_gaussian(cfg);

  // The center is recoverable from a zero-noise run with the same seed only
  // for the first class (the rng stream interleaves), so bound the spread of
  // the sample mean around the *empirical* center instead: mean of 10k i.i.d.
  // draws must sit within 3*sigma/sqrt(n) of the true center per coordinate,
  // and the true center is within the same band of the mean.
  const double band = 3.0 * cfg.noise_sigma / std::sqrt(10000.0);
  for (std::uint32_t c : ds.class_ids()) {
    const auto mean = ds.class_mean(c);
    double mean_norm = 0.0;
    for (double x : mean) mean_norm += x * x;
    // center has norm 1; the mean must land within the band of the sphere
    CHECK(std::fabs(std::sqrt(mean_norm) - 1.0) < band * std::sqrt(8.0));
  }
}

TEST_CASE("episode sampling yields disjoint class-major support and query") {
  EmbeddingDataset ds = tiny_synth();
  EpisodeConfig cfg;
  cfg.n_way = 5;
  cfg.k_shot = 3;
  cfg.queries_per_class = 4;
  Rng rng = Rng::derive(123, 0);
  Episode ep = sample_episode(ds, cfg, rng);

  CHECK(ep.support.rows() == 15);
  CHECK(ep.query.rows() == 20);
  CHECK(ep.class_ids.size() == 5);

  std::set<std::uint32_t> distinct(ep.class_ids.begin(), ep.class_ids.end());
  CHECK(distinct.size() == 5);

  // class-major labels: 0,0,0,1,1,1,...
  for (std::size_t i = 0; i < ep.support_labels.size(); ++i)
    CHECK(ep.support_labels[i] == i / cfg.k_shot);
  for (std::size_t i = 0; i < ep.query_labels.size(); ++i)
    CHECK(ep.query_labels[i] == i / cfg.queries_per_class);

  // support and query draw from the same classes, never the same record
  std::set<std::pair<std::uint32_t, std::size_t>> seen;
  for (const auto& o : ep.support_origin) CHECK(seen.insert(o).second);
  for (const auto& o : ep.query_origin) CHECK(seen.insert(o).second);

  // one-hot helpers agree with labels
  Tensor sh = ep.support_onehot();
  for (std::size_t i = 0; i < ep.support_labels.size(); ++i) {
    CHECK(sh.at(i, ep.support_labels[i]) == 1.0);
    double rowsum = 0.0;
    for (std::size_t k = 0; k < 5; ++k) rowsum += sh.at(i, k);
    CHECK(rowsum == 1.0);
  }
}

TEST_CASE("episode sampling is deterministic per derived stream") {
  EmbeddingDataset ds = tiny_synth();
  EpisodeConfig cfg;
  for (std::uint64_t index : {0ull, 7ull}) {
    Rng r1 = Rng::derive(42, index);
    Rng r2 = Rng::derive(42, index);
    Episode a = sample_episode(ds, cfg, r1);
    Episode b = sample_episode(ds, cfg, r2);
    CHECK(a.class_ids == b.class_ids);
    CHECK(oracle::max_abs_diff(a.support.data(), b.support.data()) == 0.0);
    CHECK(oracle::max_abs_diff(a.query.data(), b.query.data()) == 0.0);
  }
  Rng r3 = Rng::derive(42, 0);
  Rng r4 = Rng::derive(43, 0);
  Episode a = sample_episode(ds, cfg, r3);
  Episode b = sample_episode(ds, cfg, r4);
  CHECK((a.class_ids != b.class_ids ||
         oracle::max_abs_diff(a.support.data(), b.support.data()) > 0.0));
}

TEST_CASE("class appearance frequency is uniform over many episodes") {
  EmbeddingDataset ds = tiny_synth(20, 4, 20, 77);
  EpisodeConfig cfg;
  cfg.n_way = 5;
  cfg.k_shot = 1;
  cfg.queries_per_class = 1;
  std::map<std::uint32_t, std::size_t> hits;
  const std::size_t episodes = 10000;
  for (std::size_t e = 0; e < episodes; ++e) {
    Rng rng = Rng::derive(2718, e);
    Episode ep = sample_episode(ds, cfg, rng);
    for (std::uint32_t c : ep.class_ids) ++hits[c];
  }
  const double expected = 5.0 / 20.0;
  for (const auto& [c, n] : hits) {
    const double freq = static_cast<double>(n) / episodes;
    CHECK(std::fabs(freq - expected) <= 0.01);
  }
}

TEST_CASE("sampling failures raise errors") {
  EmbeddingDataset ds = tiny_synth(3, 4, 5, 1);
  EpisodeConfig cfg;
  cfg.n_way = 5;
  Rng rng(1);
  CHECK_THROWS_AS(sample_episode(ds, cfg, rng), SamplingError);
  cfg.n_way = 3;
  cfg.k_shot = 3;
  cfg.queries_per_class = 3;  // needs 6 > 5 per class
  CHECK_THROWS_AS(sample_episode(ds, cfg, rng), SamplingError);
}

TEST_CASE("class splits are disjoint and ordered") {
  EmbeddingDataset ds = tiny_synth(30, 4, 6, 3);
  auto [train, val, test] = split_by_classes(ds, 20, 5, 5);
  CHECK(train.num_classes() == 20);
  CHECK(val.num_classes() == 5);
  CHECK(test.num_classes() == 5);
  CHECK(train.split() == Split::train);
  CHECK(val.split() == Split::val);
  CHECK(test.split() == Split::test);
  std::set<std::uint32_t> all;
  for (auto c : train.class_ids()) all.insert(c);
  for (auto c : val.class_ids()) all.insert(c);
  for (auto c : test.class_ids()) all.insert(c);
  CHECK(all.size() == 30);
  CHECK_THROWS_AS(split_by_classes(ds, 30, 5, 5), ConfigError);
}

TEST_CASE("dataset validation") {
  EmbeddingDataset ds(3, Split::train);
  ds.add(1, {1.0, 2.0, 3.0});
  CHECK_THROWS_AS(ds.add(1, {1.0, 2.0}), ShapeError);
  CHECK_THROWS_AS(ds.add(1, {1.0, 2.0, std::nan("")}), NumericError);
  CHECK_THROWS_AS(ds.samples_of(99), SamplingError);
  const auto mean = ds.class_mean(1);
  CHECK(mean[2] == 3.0);
}
