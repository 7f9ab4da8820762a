#include <doctest.h>

#include <cmath>

#include "idg/errors.hpp"
#include "idg/objectives.hpp"

using namespace idg;
using namespace idg::ad;

namespace {

Tensor randn(Rng& rng, std::size_t r, std::size_t c, double sd = 1.0) {
  Tensor t(r, c);
  for (double& v : t.data) v = rng.normal(0.0, sd);
  return t;
}

Batch make_batch(Rng& rng, std::size_t per, std::size_t n_domains, std::size_t n_labels, std::size_t width) {
  Batch b;
  const std::size_t n = per * n_domains * n_labels;
  b.x = randn(rng, n, width);
  b.a = randn(rng, n, width);
  b.label = std::vector<std::size_t>();
  for (std::size_t d = 0; d < n_domains; ++d)
    for (std::size_t y = 0; y < n_labels; ++y)
      for (std::size_t k = 0; k < per; ++k) {
        b.domain.push_back(d);
        b.label->push_back(y);
      }
  return b;
}

SyntheticSpec two_domain_spec() {
  SyntheticSpec s;
  s.n_domains = 2;
  s.n_labels = 2;
  s.label_dims = 3;
  s.domain_dims = 3;
  s.per_cluster = 16;
  return s;
}

}  // namespace

TEST_CASE("InfoNCE limits") {
  Tape t;
  const LossParts flat = infonce_from_scores(t.leaf(Tensor(4, 4, 0.3)));
  CHECK(flat.aug.value().item() == doctest::Approx(std::log(4.0)));
  CHECK(flat.bound == doctest::Approx(0.0));
  Tensor s(4, 4, 0.0);
  for (std::size_t i = 0; i < 4; ++i) s(i, i) = 200.0;
  const LossParts sharp = infonce_from_scores(t.leaf(s));
  CHECK(sharp.aug.value().item() == doctest::Approx(0.0));
  CHECK(sharp.bound == doctest::Approx(std::log(4.0)));
  CHECK_THROWS_AS(infonce_from_scores(t.leaf(Tensor(1, 1))), DimensionError);
}

TEST_CASE("CAD support term edge cases") {
  Rng rng(1);
  Tape t;
  Batch b = make_batch(rng, 3, 1, 2, 4);
  const Var z = l2_normalize_rows(t.leaf(randn(rng, b.size(), 3)));
  const Var za = l2_normalize_rows(t.leaf(randn(rng, b.size(), 3)));
  const LossParts one_domain = cad_loss(z, za, b, 0.7);
  CHECK(one_domain.supp->value().item() == 0.0);
  CHECK(one_domain.empty_pools == b.size());
  CHECK(one_domain.total.value().item() == infonce_loss(z, za).aug.value().item());

  // Two samples, one per domain: the pools coincide, so the term is 0.
  Batch two;
  two.x = Tensor(2, 1, {0.0, 1.0});
  two.domain = {0, 1};
  const Var z2 = t.leaf(Tensor(2, 2, {1.0, 0.0, 1.0, 0.0}));
  CHECK(cad_support(z2, two.x, two.domain, 0.05).value.value().item() == doctest::Approx(0.0));

  // Distinct labels leave every conditional pool empty.
  Batch distinct = make_batch(rng, 1, 1, 4, 2);
  distinct.domain = {0, 1, 0, 1};
  const Var z4 = l2_normalize_rows(t.leaf(randn(rng, 4, 3)));
  const LossParts c = ccad_loss(z4, z4, distinct, 1.0);
  CHECK(c.supp->value().item() == 0.0);
  CHECK(c.empty_pools == 4);
  distinct.label.reset();
  CHECK_THROWS_AS(ccad_loss(z4, z4, distinct, 1.0), HypothesisError);

  // Duplicate inputs across domains use the count estimate.
  Tensor dup(3, 1, {0.5, 0.5, 2.0});
  const Var z3 = l2_normalize_rows(t.leaf(randn(rng, 3, 3)));
  const double v = cad_support(z3, dup, {0, 1, 0}, 1.0).value.value().item();
  CHECK(std::isfinite(v));
  CHECK(v >= 0.0);
}

TEST_CASE("lambda zero reproduces InfoNCE") {
  Rng rng(2);
  Tape t;
  const Batch b = make_batch(rng, 2, 2, 2, 3);
  const Var z = l2_normalize_rows(t.leaf(randn(rng, b.size(), 4)));
  const Var za = l2_normalize_rows(t.leaf(randn(rng, b.size(), 4)));
  const double ref = infonce_loss(z, za).total.value().item();
  CHECK(cad_loss(z, za, b, 0.0).total.value().item() == ref);
  CHECK(ccad_loss(z, za, b, 0.0).total.value().item() == ref);
  const Var mu = t.leaf(Tensor(1, 4)), ls = t.leaf(Tensor(1, 4));
  CHECK(ent_loss(z, za, Tensor(b.size(), 4), mu, ls, 0.0).total.value().item() == ref);
  CHECK(mi_loss(z, za, z, za, mu, ls, 0.0).total.value().item() == ref);
}

TEST_CASE("bottleneck closed forms") {
  Tape t;
  const double e = ent_bits(t.leaf(Tensor(1, 1)), Tensor(1, 1), t.leaf(Tensor(1, 1)), t.leaf(Tensor(1, 1)))
                       .value()
                       .item();
  CHECK(e == doctest::Approx(-std::log(2.0 / (1.0 + std::exp(-0.5)) - 1.0)));
  CHECK(e == doctest::Approx(1.406829).epsilon(1e-6));

  const Var m = t.leaf(Tensor(2, 3, {0.5, -1.0, 2.0, 0.0, 1.5, -0.3}));
  const Var zero = t.leaf(Tensor(2, 3));
  const Var p0 = t.leaf(Tensor(1, 3));
  double expect = 0.0;
  for (double v : m.value().data) expect += v * v / 2.0;
  CHECK(gaussian_rate(m, zero, p0, p0).value().item() == doctest::Approx(expect / 2.0));
  CHECK(gaussian_rate(m, zero, m, zero).value().item() == doctest::Approx(0.0));

  // Collapsing embeddings toward the location lowers the rate.
  Rng rng(3);
  const Tensor noise = Tensor(4, 2);
  const Tensor spread = randn(rng, 4, 2, 3.0);
  Tensor tight = spread;
  for (double& v : tight.data) v *= 0.1;
  const Var mu = t.leaf(Tensor(1, 2)), ls = t.leaf(Tensor(1, 2));
  CHECK(ent_bits(t.leaf(tight), noise, mu, ls).value().item() <
        ent_bits(t.leaf(spread), noise, mu, ls).value().item());
}

TEST_CASE("objective gradients match finite differences") {
  Rng rng(4);
  const MlpSpec spec{5, 6, 3, false};
  const MlpSpec sspec{5, 6, 3, true};
  const Batch b = make_batch(rng, 2, 2, 2, 5);
  const Tensor noise = [&] {
    Tensor n(b.size(), 3);
    for (double& v : n.data) v = rng.uniform(-0.5, 0.5);
    return n;
  }();
  const Tensor eps = randn(rng, b.size(), 3), eps_a = randn(rng, b.size(), 3);
  const auto enc = init_mlp(spec, rng).values;
  auto senc = init_mlp(sspec, rng).values;

  const auto forward = [&](const MlpSpec& s, const std::vector<Var>& p, Tape& t, const Tensor& x,
                           const Tensor* e) {
    return mlp_forward(s, std::vector<Var>(p.begin(), p.begin() + (s.stochastic ? 6 : 4)), t.constant(x), e);
  };
  const LossBuilder infonce = [&](Tape& t, const std::vector<Var>& p) {
    return infonce_loss(forward(spec, p, t, b.x, nullptr).z, forward(spec, p, t, b.a, nullptr).z, 0.5).total;
  };
  const LossBuilder cad = [&](Tape& t, const std::vector<Var>& p) {
    return cad_loss(forward(spec, p, t, b.x, nullptr).z, forward(spec, p, t, b.a, nullptr).z, b, 0.7, 0.5).total;
  };
  const LossBuilder ccad = [&](Tape& t, const std::vector<Var>& p) {
    return ccad_loss(forward(spec, p, t, b.x, nullptr).z, forward(spec, p, t, b.a, nullptr).z, b, 0.7, 0.5).total;
  };
  const LossBuilder ent = [&](Tape& t, const std::vector<Var>& p) {
    return ent_loss(forward(spec, p, t, b.x, nullptr).z, forward(spec, p, t, b.a, nullptr).z, noise, p[4], p[5],
                    0.7, 0.5)
        .total;
  };
  const LossBuilder mi = [&](Tape& t, const std::vector<Var>& p) {
    const auto o = forward(sspec, p, t, b.x, &eps);
    return mi_loss(o.z, forward(sspec, p, t, b.a, &eps_a).z, *o.mean, *o.logvar, p[6], p[7], 0.7, 0.5).total;
  };
  auto with_extra = [&](std::vector<Tensor> p) {
    p.push_back(randn(rng, 1, 3, 0.3));
    p.push_back(randn(rng, 1, 3, 0.3));
    return p;
  };
  CHECK(gradient_check(infonce, enc).max_rel_error < 1e-4);
  CHECK(gradient_check(cad, enc).max_rel_error < 1e-4);
  CHECK(gradient_check(ccad, enc).max_rel_error < 1e-4);
  CHECK(gradient_check(ent, with_extra(enc)).max_rel_error < 1e-4);
  CHECK(gradient_check(mi, with_extra(senc)).max_rel_error < 1e-4);
}

TEST_CASE("CAD implied domain posterior") {
  Tensor scores(1, 2, {0.0, std::log(3.0)});
  const auto q = cad_domain_posterior(scores, {{1.0, 0.0}, {0.0, 1.0}});
  CHECK(q[0][0] == doctest::Approx(0.25));
  CHECK(q[0][1] == doctest::Approx(0.75));
}

TEST_CASE("training") {
  const auto data = gen_synthetic(11, two_domain_spec());
  TrainConfig c;
  c.epochs = 200;
  c.batch_per_domain = 8;
  c.seed = 5;
  const auto r = train(data, c);
  CHECK(r.history.size() == 200);
  const auto emb = data.with_features(embed(r.spec, r.params, data.features(data.rows_of(0).size() ? [&] {
    std::vector<std::size_t> all(data.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }() : std::vector<std::size_t>{})));
  for (std::size_t d = 0; d < 2; ++d)
    CHECK(evaluate_probe(linear_probe(emb, d, {}), emb, emb.rows_of(d)).accuracy >= 0.99);
  const auto again = train(data, c);
  CHECK(again.params.values[0].data == r.params.values[0].data);

  c.epochs = 3;
  c.bottleneck = Bottleneck::CAD;
  c.lambda = 0.0;
  TrainConfig none = c;
  none.bottleneck = Bottleneck::None;
  const auto h1 = train(data, c).history, h0 = train(data, none).history;
  for (std::size_t e = 0; e < h0.size(); ++e) CHECK(h1[e].total == h0[e].total);

  TrainConfig bad = c;
  bad.bottleneck = Bottleneck::Ent;
  bad.stochastic = true;
  CHECK_THROWS_AS(train(data, bad), HypothesisError);
  bad = c;
  bad.bottleneck = Bottleneck::MI;
  CHECK_THROWS_AS(train(data, bad), HypothesisError);
  bad = c;
  bad.objective = Objective::InfoNCE;
  bad.bottleneck = Bottleneck::CondCAD;
  bad.use_labels = false;
  CHECK_THROWS_AS(validate_config(bad, data), HypothesisError);

  for (auto kind : {Bottleneck::CAD, Bottleneck::CondCAD, Bottleneck::Ent, Bottleneck::MI}) {
    TrainConfig k = c;
    k.objective = Objective::InfoNCE;
    k.bottleneck = kind;
    k.lambda = 0.1;
    k.stochastic = kind == Bottleneck::MI;
    const auto h = train(data, k).history;
    CHECK(std::isfinite(h.back().total));
  }

  nlohmann::json j = c;
  CHECK(nlohmann::json(j.get<TrainConfig>()) == j);
  CHECK(history_csv(h0).rfind("epoch,L_aug,L_supp,total\n", 0) == 0);
}
