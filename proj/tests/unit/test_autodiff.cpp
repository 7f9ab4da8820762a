#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "idg/autodiff.hpp"
#include "idg/errors.hpp"
#include "idg/rng.hpp"

using namespace idg;
using namespace idg::ad;

namespace {

Tensor randn(Rng& rng, std::size_t r, std::size_t c, double sd = 1.0) {
  Tensor t(r, c);
  for (double& v : t.data) v = rng.normal(0.0, sd);
  return t;
}

}  // namespace

TEST_CASE("forward values") {
  Tape t;
  const Var z = t.leaf(Tensor(1, 2, {0.0, 0.0}));
  CHECK(logsumexp(z, 1).value().item() == doctest::Approx(std::log(2.0)));
  Tensor w(1, 3, {0.0, 1.0, 0.0});
  CHECK(masked_logsumexp(t.leaf(Tensor(1, 3, {5.0, -2.5, 7.0})), w).value().item() == -2.5);
  CHECK_THROWS_AS(masked_logsumexp(z, Tensor(1, 2, 0.0)), DimensionError);
  const Var m = t.leaf(Tensor(2, 2, {0.3, -1, 2, 0.5}));
  const Var l = t.leaf(Tensor(2, 2, {0.1, 0.2, -0.3, 0.0}));
  for (double v : gaussian_kl(m, l, m, l).value().data) CHECK(v == doctest::Approx(0.0));
  const Var big = t.leaf(Tensor(1, 3, {1000.0, 999.0, -1000.0}));
  CHECK(std::isfinite(logsumexp(big, 1).value().item()));
  CHECK_THROWS_AS(add(z, t.leaf(Tensor(3, 3))), DimensionError);
}

TEST_CASE("logistic bin log-probability") {
  Tape t;
  const Var lp = logistic_bin_logprob(t.leaf(Tensor::scalar(0.0)), t.leaf(Tensor::scalar(0.0)),
                                      t.leaf(Tensor::scalar(0.0)));
  const double oracle = -std::log(2.0 / (1.0 + std::exp(-0.5)) - 1.0);
  CHECK(-lp.value().item() == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(-lp.value().item() == doctest::Approx(1.406829).epsilon(1e-6));
}

TEST_CASE("simple gradients") {
  Tape t;
  const Var x = t.leaf(Tensor::scalar(3.0));
  const Var y = mul(x, x);
  t.backward(y);
  CHECK(x.grad().item() == doctest::Approx(6.0));

  Tape u;
  const Var a = u.leaf(Tensor(1, 3, {0.1, 2.0, -1.0}));
  u.backward(sum(logsumexp(a, 1)));
  double s = 0;
  for (double v : a.value().data) s += std::exp(v);
  for (std::size_t j = 0; j < 3; ++j)
    CHECK(a.grad().data[j] == doctest::Approx(std::exp(a.value().data[j]) / s));
  CHECK_THROWS_AS(u.backward(a), DimensionError);
}

TEST_CASE("gradient check over composed graphs") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t b = 3 + rng.uniform_int(4), d = 2 + rng.uniform_int(3);
    std::vector<Tensor> ps{randn(rng, b, d), randn(rng, d, d, 0.5), randn(rng, 1, d, 0.3),
                           randn(rng, 1, d, 0.3)};
    std::vector<std::size_t> tgt(b);
    for (auto& v : tgt) v = rng.uniform_int(d);
    Tensor mask(b, d);
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < d; ++j) mask(i, j) = rng.bernoulli(0.6) ? rng.uniform(0.2, 1) : 0;
      mask(i, rng.uniform_int(d)) = 1.0;
    }
    const LossBuilder f = [&](Tape&, const std::vector<Var>& v) {
      const Var h = tanh(add(matmul(v[0], v[1]), v[2]));
      // Central differences lose accuracy near zero-norm rows; keep them away.
      const Var n = l2_normalize_rows(add_scalar(h, 1.5));
      const Var s = scale(matmul(n, transpose(n)), 2.0);
      const Var ce = softmax_cross_entropy(concat_cols(h, exp(scale(h, 0.3))), tgt);
      const Var ml = mean(masked_logsumexp(h, mask));
      const Var kl = mean(gaussian_kl(h, scale(h, 0.1), v[2], v[3]));
      const Var eb = mean(logistic_bin_logprob(h, v[2], v[3]));
      const Var sp = mean(softplus(sub(h, v[3])));
      const Var rl = mean(relu(add_scalar(mul(gather_rows(h, {0, 1, 0}), v[3]), 2.0)));
      const Var pk = mean(pick(s, std::vector<std::size_t>(s.rows(), 0)));
      const Var lg = mean(log(add_scalar(exp(h), 1.0)));
      return add(add(add(add(ce, ml), add(kl, eb)), add(add(sp, rl), pk)), add(lg, mean(sum(s, 0))));
    };
    const auto gc = gradient_check(f, ps);
    INFO("trial ", trial);
    CHECK(gc.max_rel_error < 1e-6);
  }
}

TEST_CASE("backward is deterministic") {
  Rng rng(2);
  std::vector<Tensor> ps{randn(rng, 4, 3), randn(rng, 3, 3)};
  const LossBuilder f = [](Tape&, const std::vector<Var>& v) {
    return mean(logsumexp(tanh(matmul(v[0], v[1])), 1));
  };
  const auto a = value_and_grad(f, ps).second;
  const auto b = value_and_grad(f, ps).second;
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].data == b[i].data);
}

TEST_CASE("optimizers and schedule") {
  std::vector<Tensor> x{Tensor::scalar(1.0)};
  Sgd sgd(0.1);
  for (int i = 0; i < 100; ++i) sgd.step(x, {Tensor::scalar(2.0 * x[0].item())});
  CHECK(std::abs(x[0].item()) < 1e-9);

  std::vector<Tensor> p{Tensor(1, 2, {0.0, 0.0})};
  Adam adam(0.01);
  adam.step(p, {Tensor(1, 2, {3.0, -0.2})});
  CHECK(p[0].data[0] == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(p[0].data[1] == doctest::Approx(0.01).epsilon(1e-6));

  Adam resumed(0.5);
  resumed.load_state(adam.state());
  std::vector<Tensor> q = p;
  adam.step(p, {Tensor(1, 2, {1.0, 1.0})});
  resumed.step(q, {Tensor(1, 2, {1.0, 1.0})});
  CHECK(p[0].data == q[0].data);

  CHECK(cosine_lr(0.1, 0, 100) == 0.1);
  CHECK(cosine_lr(0.1, 100, 100) == doctest::Approx(0.0));
}

TEST_CASE("checkpoint round trip") {
  ParamSet p;
  p.add("w", Tensor(2, 2, {1.5, -0.25, 1e-300, 3.0}));
  p.add("b", Tensor(1, 2, {0.1, 0.2}));
  const auto dir = std::filesystem::temp_directory_path() / "idg_ckpt_test";
  std::filesystem::create_directories(dir);
  const std::string prefix = (dir / "model").string();
  save_checkpoint(prefix, p, {{"note", "x"}});
  nlohmann::json extra;
  const ParamSet q = load_checkpoint(prefix, &extra);
  CHECK(q.names == p.names);
  CHECK(q.values[0].data == p.values[0].data);
  CHECK(extra.at("note") == "x");
  std::filesystem::remove_all(dir);
}
