#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "protoflow/error.hpp"
#include "protoflow/flow.hpp"
#include "protoflow/gradcheck.hpp"
#include "protoflow/ops.hpp"

using namespace protoflow;

namespace {

std::vector<double> cosine_probs_oracle(const Tensor& p, const double* x,
                                        std::size_t d, double gamma) {
  std::vector<double> logits(p.rows());
  double xn = 0.0;
  for (std::size_t j = 0; j < d; ++j) xn += x[j] * x[j];
  xn = std::sqrt(xn);
  for (std::size_t k = 0; k < p.rows(); ++k) {
    double dot = 0.0, pn = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dot += x[j] * p.at(k, j);
      pn += p.at(k, j) * p.at(k, j);
    }
    logits[k] = gamma * dot / (xn * std::sqrt(pn));
  }
  return oracle::softmax_ld(logits);
}

FlowInput random_input(Rng& rng, std::size_t n, std::size_t d, std::size_t sup,
                       std::size_t unl) {
  PrototypeState st;
  st.prototypes = Tensor::randn({n, d}, rng);
  Tensor F = Tensor::randn({sup + unl, d}, rng);
  Tensor Y = Tensor::zeros({sup + unl, n});
  for (std::size_t i = 0; i < sup; ++i) Y.at(i, rng.uniform_int(n)) = 1.0;
  for (std::size_t i = sup; i < sup + unl; ++i)
    for (std::size_t k = 0; k < n; ++k)
      Y.at(i, k) = 1.0 / static_cast<double>(n);
  return make_flow_input(st, F, Y);
}

double max_abs(const Tensor& t) {
  double m = 0.0;
  for (double v : t.data()) m = std::max(m, std::fabs(v));
  return m;
}

}  // namespace

TEST_CASE("flow input assembly and validation") {
  Rng rng(3);
  Episode ep;
  ep.n_way = 2;
  ep.k_shot = 2;
  ep.queries_per_class = 3;
  ep.dim = 4;
  ep.support = Tensor::randn({4, 4}, rng);
  ep.query = Tensor::randn({6, 4}, rng);
  ep.support_labels = {0, 0, 1, 1};
  ep.query_labels = {0, 0, 0, 1, 1, 1};

  PrototypeState st = init_prototypes(ep);

  SUBCASE("transductive: support one-hots then uniform pseudo-labels") {
    FlowInput in = make_flow_input(st, ep, EpisodeMode::transductive);
    CHECK(in.features.rows() == 10);
    CHECK(in.labels.at(0, 0) == 1.0);
    CHECK(in.labels.at(2, 1) == 1.0);
    for (std::size_t i = 4; i < 10; ++i) {
      CHECK(in.labels.at(i, 0) == 0.5);
      CHECK(in.labels.at(i, 1) == 0.5);
    }
    CHECK(in.features.at(7, 2) == ep.query.at(3, 2));
    CHECK(in.class_code.at(0, 0) == 1.0);
    CHECK(in.class_code.at(0, 1) == 0.0);
  }

  SUBCASE("inductive: queries never enter") {
    Episode other = ep;
    other.query = Tensor::randn({6, 4}, rng);  // different queries
    FlowInput a = make_flow_input(st, ep, EpisodeMode::inductive);
    FlowInput b = make_flow_input(st, other, EpisodeMode::inductive);
    CHECK(a.features.rows() == 4);
    CHECK(a.features.data() == b.features.data());
    CHECK(a.labels.data() == b.labels.data());
  }

  SUBCASE("label rows must sum to one") {
    Tensor F = Tensor::randn({2, 4}, rng);
    Tensor bad = Tensor::from({2, 2}, {0.7, 0.2, 1.0, 0.0});
    CHECK_THROWS_AS(make_flow_input(st, F, bad), NumericError);
  }

  SUBCASE("dimension mismatch rejected") {
    Tensor F = Tensor::randn({2, 5}, rng);
    Tensor Y = Tensor::from({2, 2}, {1.0, 0.0, 0.0, 1.0});
    CHECK_THROWS_AS(make_flow_input(st, F, Y), ShapeError);
  }
}

TEST_CASE("single module ensemble reduces to the weighted mean") {
  Rng rng(11);
  FlowInput in = random_input(rng, 3, 4, 6, 0);
  GradNetParams params(3, 4, 1, 77);
  GradNetDiag diag;
  Tensor flow = gradnet_flow(params, in, &diag);
  CHECK(flow.rows() == 3);
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(flow.at(k, j) == params.beta0 * diag.means[k][j]);
}

TEST_CASE("attention weights are a distribution over samples") {
  Rng rng(12);
  FlowInput in = random_input(rng, 2, 3, 4, 2);
  GradNetParams params(2, 3, 2, 5);
  GradNetDiag diag;
  gradnet_flow(params, in, &diag);
  REQUIRE(diag.weights.size() == 4);  // 2 classes x 2 modules
  for (const auto& w : diag.weights) {
    REQUIRE(w.size() == 6);
    double s = 0.0;
    for (double x : w) {
      CHECK(x > 0.0);
      s += x;
    }
    CHECK(std::fabs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("single visible sample forces unit weight and the variance floor") {
  Rng rng(13);
  PrototypeState st;
  st.prototypes = Tensor::randn({2, 3}, rng);
  Tensor F = Tensor::randn({1, 3}, rng);
  Tensor Y = Tensor::from({1, 2}, {1.0, 0.0});
  FlowInput in = make_flow_input(st, F, Y);

  GradNetParams params(2, 3, 2, 9);
  GradNetDiag diag;
  Tensor flow = gradnet_flow(params, in, &diag);
  for (const auto& w : diag.weights) {
    REQUIRE(w.size() == 1);
    CHECK(w[0] == 1.0);
  }
  // sigma^2 = 0 everywhere, so both modules are floored to the same inverse
  // variance and the combination collapses to the plain module average.
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t j = 0; j < 3; ++j) {
      const double avg =
          0.5 * (diag.means[k * 2][j] + diag.means[k * 2 + 1][j]);
      CHECK(flow.at(k, j) ==
            doctest::Approx(params.beta0 * avg).epsilon(1e-12));
    }
}

TEST_CASE("ensemble output decays by xi between t=0 and t=T") {
  Rng rng(14);
  FlowInput at0 = random_input(rng, 2, 3, 5, 2);
  FlowInput atT = at0;
  atT.state.time = 40.0;

  GradNetParams params(2, 3, 3, 21);
  Tensor f0 = gradnet_flow(params, at0);
  Tensor fT = gradnet_flow(params, atT);
  for (std::size_t i = 0; i < f0.numel(); ++i) {
    if (std::fabs(f0.at(i)) < 1e-12) continue;
    CHECK(fT.at(i) / f0.at(i) == doctest::Approx(params.xi).epsilon(1e-12));
  }
}

TEST_CASE("attention flow is exactly class-permutation equivariant") {
  Rng rng(15);
  const std::size_t n = 3, d = 5;
  FlowInput a = random_input(rng, n, d, 4, 2);
  GradNetParams params(n, d, 2, 31);
  Tensor fa = gradnet_flow(params, a);

  const std::size_t perm[3] = {1, 2, 0};  // new class j = old class perm[j]
  FlowInput b;
  b.n_way = n;
  b.state.time = a.state.time;
  b.state.prototypes = Tensor::zeros({n, d});
  b.class_code = Tensor::zeros({n, n});
  b.features = a.features;
  b.labels = Tensor::zeros({a.labels.rows(), n});
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t c = 0; c < d; ++c)
      b.state.prototypes.at(j, c) = a.state.prototypes.at(perm[j], c);
    for (std::size_t c = 0; c < n; ++c)
      b.class_code.at(j, c) = a.class_code.at(perm[j], c);
    for (std::size_t i = 0; i < a.labels.rows(); ++i)
      b.labels.at(i, j) = a.labels.at(i, perm[j]);
  }
  Tensor fb = gradnet_flow(params, b);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t c = 0; c < d; ++c)
      CHECK(fb.at(j, c) == fa.at(perm[j], c));  // bitwise
}

TEST_CASE("both flows ignore sample order") {
  Rng rng(16);
  const std::size_t n = 2, d = 4, S = 6;
  FlowInput a = random_input(rng, n, d, 4, 2);

  // rotate the sample rows by two
  FlowInput b = a;
  for (std::size_t i = 0; i < S; ++i) {
    const std::size_t src = (i + 2) % S;
    for (std::size_t j = 0; j < d; ++j)
      b.features.at(i, j) = a.features.at(src, j);
    for (std::size_t k = 0; k < n; ++k)
      b.labels.at(i, k) = a.labels.at(src, k);
  }

  GradNetParams gp(n, d, 2, 41);
  Tensor ga = gradnet_flow(gp, a), gb = gradnet_flow(gp, b);
  const double gscale = std::max(max_abs(ga), 1e-12);
  for (std::size_t i = 0; i < ga.numel(); ++i)
    CHECK(std::fabs(ga.at(i) - gb.at(i)) / gscale <= 1e-12);

  Rng wrng(42);
  E2GradNetParams ep(n, 43);
  ep.w1.value() = Tensor::randn({n, n}, wrng);
  ep.b1.value() = Tensor::randn({n}, wrng);
  ep.w2.value() = Tensor::randn({n, n}, wrng);
  ep.b2.value() = Tensor::randn({n}, wrng);
  ClassifierConfig cfg;
  Tensor ea = e2gradnet_flow(ep, a, cfg), eb = e2gradnet_flow(ep, b, cfg);
  const double escale = std::max(max_abs(ea), 1e-12);
  for (std::size_t i = 0; i < ea.numel(); ++i)
    CHECK(std::fabs(ea.at(i) - eb.at(i)) / escale <= 1e-12);
}

TEST_CASE("residual flow equivariance") {
  Rng rng(17);
  const std::size_t n = 3, d = 4;
  FlowInput a = random_input(rng, n, d, 5, 3);
  const std::size_t perm[3] = {2, 0, 1};

  auto permute_input = [&](const FlowInput& src) {
    FlowInput out = src;
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t c = 0; c < d; ++c)
        out.state.prototypes.at(j, c) = src.state.prototypes.at(perm[j], c);
      for (std::size_t i = 0; i < src.labels.rows(); ++i)
        out.labels.at(i, j) = src.labels.at(i, perm[j]);
    }
    return out;
  };
  FlowInput b = permute_input(a);
  ClassifierConfig cfg;

  SUBCASE("zero output layer: equivariant for free") {
    E2GradNetParams ep(n, 7);
    Rng wrng(6);
    ep.w1.value() = Tensor::randn({n, n}, wrng);
    ep.w2.value() = Tensor::zeros({n, n});  // estimate is identically zero
    Tensor fa = e2gradnet_flow(ep, a, cfg);
    Tensor fb = e2gradnet_flow(ep, b, cfg);
    const double s = std::max(max_abs(fa), 1e-12);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < d; ++c)
        CHECK(std::fabs(fb.at(j, c) - fa.at(perm[j], c)) / s <= 1e-12);
  }

  SUBCASE("fresh weights: the zero flow is trivially equivariant") {
    E2GradNetParams ep(n, 7);
    Tensor fa = e2gradnet_flow(ep, a, cfg);
    Tensor fb = e2gradnet_flow(ep, b, cfg);
    for (std::size_t i = 0; i < fa.numel(); ++i) {
      CHECK(fa.at(i) == 0.0);
      CHECK(fb.at(i) == 0.0);
    }
  }

  SUBCASE("generic weights: equivariant under conjugated parameters") {
    Rng wrng(8);
    E2GradNetParams ep(n, 9);
    ep.w1.value() = Tensor::randn({n, n}, wrng);
    ep.b1.value() = Tensor::randn({n}, wrng);
    ep.w2.value() = Tensor::randn({n, n}, wrng);
    ep.b2.value() = Tensor::randn({n}, wrng);
    Tensor fa = e2gradnet_flow(ep, a, cfg);

    E2GradNetParams conj(n, 10);
    for (std::size_t m = 0; m < n; ++m)
      for (std::size_t c = 0; c < n; ++c) {
        conj.w1.value().at(m, c) = ep.w1.value().at(perm[m], perm[c]);
        conj.w2.value().at(m, c) = ep.w2.value().at(perm[m], perm[c]);
      }
    for (std::size_t c = 0; c < n; ++c) {
      conj.b1.value().at(c) = ep.b1.value().at(perm[c]);
      conj.b2.value().at(c) = ep.b2.value().at(perm[c]);
    }
    Tensor fb = e2gradnet_flow(conj, b, cfg);
    const double s = std::max(max_abs(fa), 1e-12);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < d; ++c)
        CHECK(std::fabs(fb.at(j, c) - fa.at(perm[j], c)) / s <= 1e-12);
  }
}

TEST_CASE("residual flow matches a hand-rolled loop oracle") {
  Rng rng(18);
  ClassifierConfig cfg;
  for (auto [n, d, S] : {std::tuple<std::size_t, std::size_t, std::size_t>{
                             2, 3, 2},
                         {3, 4, 7}}) {
    FlowInput in = random_input(rng, n, d, S, 0);
    Rng wrng(19);
    E2GradNetParams params(n, 20);
    params.w1.value() = Tensor::randn({n, n}, wrng);
    params.b1.value() = Tensor::randn({n}, wrng);
    params.w2.value() = Tensor::randn({n, n}, wrng);
    params.b2.value() = Tensor::randn({n}, wrng);
    Tensor flow = e2gradnet_flow(params, in, cfg);

    const Tensor& p = in.state.prototypes;
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < S; ++i) {
          auto P = cosine_probs_oracle(p, &in.features.data()[i * d], d,
                                       cfg.gamma);
          std::vector<double> h(n), yhat(n);
          for (std::size_t c = 0; c < n; ++c) {
            double z = params.b1.value().at(c);
            for (std::size_t m = 0; m < n; ++m)
              z += P[m] * params.w1.value().at(m, c);
            h[c] = z > 0.0 ? z : std::expm1(z);
          }
          for (std::size_t c = 0; c < n; ++c) {
            double z = params.b2.value().at(c);
            for (std::size_t m = 0; m < n; ++m)
              z += h[m] * params.w2.value().at(m, c);
            yhat[c] = z;
          }
          acc += (yhat[k] - P[k]) * (in.features.at(i, j) - p.at(k, j));
        }
        CHECK(std::fabs(flow.at(k, j) - acc / S) <= 1e-12);
      }
  }
}

TEST_CASE("identity-surrogate residual produces exactly zero flow") {
  Rng rng(23);
  FlowInput in = random_input(rng, 4, 5, 8, 4);
  E2GradNetParams params = E2GradNetParams::identity_surrogate(4);
  ClassifierConfig cfg;
  Tensor flow = e2gradnet_flow(params, in, cfg);
  for (double v : flow.data()) CHECK(v == 0.0);
}

TEST_CASE("perfect residual recovers the analytic population flow") {
  Rng rng(24);
  const std::size_t n = 3, d = 6, S = 30;
  FlowInput in = random_input(rng, n, d, S, 0);
  ClassifierConfig cfg;

  Tensor probs = classify_batch(in.state, in.features, cfg);
  Tensor part1 = sub(in.labels, probs);  // y_hat == true labels
  Tensor flow = flow_from_discrepancy(part1, in.features, in.state.prototypes);
  Tensor want = analytic_flow(in.state, in.features, in.labels, cfg);
  for (std::size_t i = 0; i < flow.numel(); ++i)
    CHECK(std::fabs(flow.at(i) - want.at(i)) <= 1e-12);
}

TEST_CASE("residual flow parameter gradients pass gradcheck") {
  Rng rng(25);
  const std::size_t n = 2, d = 3;
  Tensor p0 = Tensor::randn({n, d}, rng);
  Tensor F = Tensor::randn({4, d}, rng);
  Tensor Y = Tensor::from({4, 2}, {1, 0, 0, 1, 0.5, 0.5, 0.5, 0.5});
  Tensor dirs = Tensor::randn({n, d}, rng);
  ClassifierConfig cfg;

  E2GradNetParams params(n, 26);
  Rng wrng(27);
  params.w1.value() = Tensor::randn({n, n}, wrng);
  params.b1.value() = Tensor::randn({n}, wrng);
  params.w2.value() = Tensor::randn({n, n}, wrng);
  params.b2.value() = Tensor::randn({n}, wrng);
  Parameter proto("prototypes", p0);

  auto build = [&]() {
    PrototypeState st{proto.use(), 0.0};
    FlowInput in = make_flow_input(st, F, Y);
    return sum(mul(e2gradnet_flow(params, in, cfg), dirs));
  };
  std::vector<Parameter*> all = params.parameters();
  all.push_back(&proto);
  GradcheckReport report = gradcheck(build, all);
  CHECK(report.pass(1e-6));
}

TEST_CASE("attention flow gradients pass a directional derivative check") {
  Rng rng(28);
  const std::size_t n = 2, d = 3;
  Tensor p0 = Tensor::randn({n, d}, rng);
  Tensor F = Tensor::randn({4, d}, rng);
  Tensor Y = Tensor::from({4, 2}, {1, 0, 0, 1, 0.5, 0.5, 0.5, 0.5});
  Tensor dirs = Tensor::randn({n, d}, rng);

  GradNetParams params(n, d, 2, 29);
  Parameter proto("prototypes", p0);
  std::vector<Parameter*> all = params.parameters();
  all.push_back(&proto);

  auto loss_value = [&]() {
    PrototypeState st{proto.use(), 0.0};
    FlowInput in = make_flow_input(st, F, Y);
    return sum(mul(gradnet_flow(params, in), dirs));
  };

  for (int trial = 0; trial < 2; ++trial) {
    // one random direction across every parameter
    Rng drng(100 + trial);
    std::vector<Tensor> v;
    for (Parameter* q : all)
      v.push_back(Tensor::randn(q->value().shape(), drng));

    for (Parameter* q : all) q->zero_grad();
    Tape tape;
    {
      TapeScope scope(tape);
      tape.backward(loss_value());
    }
    double gv = 0.0;
    for (std::size_t i = 0; i < all.size(); ++i)
      for (std::size_t c = 0; c < v[i].numel(); ++c)
        gv += all[i]->grad().at(c) * v[i].at(c);

    const double h = 1e-6;
    auto shift = [&](double step) {
      for (std::size_t i = 0; i < all.size(); ++i)
        for (std::size_t c = 0; c < v[i].numel(); ++c)
          all[i]->value().at(c) += step * v[i].at(c);
    };
    shift(+h);
    const double plus = loss_value().item();
    shift(-2 * h);
    const double minus = loss_value().item();
    shift(+h);  // restore

    const double fd = (plus - minus) / (2 * h);
    CHECK(std::fabs(fd - gv) / std::max({std::fabs(gv), std::fabs(fd), 1e-6}) <=
          1e-5);
  }
}

TEST_CASE("non-finite values are reported with module and class context") {
  Rng rng(30);
  FlowInput in = random_input(rng, 2, 3, 4, 0);
  GradNetParams params(2, 3, 1, 31);
  params.module(0).scale_w1.value().at(0, 0) = std::nan("");
  try {
    gradnet_flow(params, in);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("module 0") != std::string::npos);
    CHECK(msg.find("class") != std::string::npos);
  }

  E2GradNetParams ep(2, 32);
  ep.b2.value().at(0) = std::nan("");
  ClassifierConfig cfg;
  CHECK_THROWS_AS(e2gradnet_flow(ep, in, cfg), NumericError);
}

TEST_CASE("zero prototype row is rejected") {
  Rng rng(33);
  FlowInput in = random_input(rng, 2, 3, 3, 0);
  for (std::size_t j = 0; j < 3; ++j) in.state.prototypes.at(1, j) = 0.0;
  GradNetParams params(2, 3, 1, 34);
  CHECK_THROWS_AS(gradnet_flow(params, in), NumericError);
}

TEST_CASE("complexity probe basics") {
  CHECK_THROWS_AS(
      flow_complexity_probe(FlowKind::e2gradnet, 2, 1, 1, 4, 2), ConfigError);

  ProbeStats e2 = flow_complexity_probe(FlowKind::e2gradnet, 5, 5, 15, 64, 3);
  REQUIRE(e2.samples.size() == 3);
  CHECK(e2.median_seconds > 0.0);
  CHECK(e2.min_seconds <= e2.median_seconds);
  CHECK(e2.median_seconds <= e2.max_seconds);

  ProbeStats mg = flow_complexity_probe(FlowKind::meangrad, 5, 5, 15, 64, 3);
  CHECK(mg.median_seconds > 0.0);

  // the attention network does vastly more work per evaluation
  ProbeStats gn = flow_complexity_probe(FlowKind::gradnet, 5, 5, 15, 64, 3);
  CHECK(gn.median_seconds / e2.median_seconds >= 2.0);
}
