#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "idg/errors.hpp"
#include "idg/world.hpp"

using namespace idg;

namespace {

World single_kernel_world(const std::vector<std::vector<double>>& rows, LossSpec loss,
                          std::vector<double> px) {
  FiniteDist pd({1.0});
  CondKernel pxd(1, px.size(), px);
  return World(pd, pxd, CondKernel(rows), product(pd, pd), loss);
}

double h(std::vector<double> p) {
  double s = 0;
  for (double v : p)
    if (v > 0) s -= v * std::log(v);
  return s;
}

// Minimizer of -sum p log q over {q >= eps} by bisection on the single free
// coordinate (binary case).
double clamp_oracle_binary(double p0, double eps) {
  double lo = eps, hi = 1 - eps;
  for (int i = 0; i < 200; ++i) {
    const double m = 0.5 * (lo + hi);
    const double grad = -p0 / m + (1 - p0) / (1 - m);
    (grad > 0 ? hi : lo) = m;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("validate_world clauses") {
  CHECK(validate_world(fx::four_input()).all_pass());

  // Label 1 only in domain 1.
  FiniteDist pd({0.5, 0.5});
  CondKernel pxd(2, 3, {0.5, 0.5, 0.0, 0.0, 0.5, 0.5});
  CondKernel pyx(3, 2, {1, 0, 1, 0, 0, 1});
  const auto r = validate_world(World(pd, pxd, pyx, product(pd, pd), LossSpec::zero_one()));
  CHECK_FALSE(r.constant_bayes_image);
  CHECK(r.unique_optima);

  const auto tie = single_kernel_world({{0.5, 0.5}, {1, 0}}, LossSpec::zero_one(), {0.5, 0.5});
  CHECK_FALSE(validate_world(tie).unique_optima);

  JointTable diag({2, 2}, {0.5, 0, 0, 0.5});
  const auto e = validate_world(World(pd, CondKernel(2, 3, {0.5, 0.5, 0, 0, 0.5, 0.5}),
                                      CondKernel(3, 2, {1, 0, 0, 1, 1, 0}), diag,
                                      LossSpec::zero_one()));
  CHECK_FALSE(e.pair_full_support);
}

TEST_CASE("generalized covariate shift passes with shared argmax") {
  FiniteDist pd({0.5, 0.5});
  CondKernel pxd(2, 2, {0.5, 0.5, 0.5, 0.5});
  std::vector<CondKernel> per{CondKernel(2, 2, {0.9, 0.1, 0.2, 0.8}),
                              CondKernel(2, 2, {0.6, 0.4, 0.4, 0.6})};
  const World w(pd, pxd, per, product(pd, pd), LossSpec::zero_one());
  CHECK(validate_world(w).generalized_covariate_shift);
  CHECK(validate_world(w).all_pass());

  std::vector<CondKernel> flip{CondKernel(2, 2, {0.9, 0.1, 0.2, 0.8}),
                               CondKernel(2, 2, {0.4, 0.6, 0.4, 0.6})};
  const World v(pd, pxd, flip, product(pd, pd), LossSpec::zero_one());
  CHECK_FALSE(validate_world(v).generalized_covariate_shift);
}

TEST_CASE("bayes predictor") {
  const auto w0 = single_kernel_world({{0.7, 0.3}}, LossSpec::zero_one(), {1.0});
  CHECK(bayes_predictor(w0).actions[0].argmax() == 0);
  const auto w1 = single_kernel_world({{0.7, 0.3}}, LossSpec::log(), {1.0});
  CHECK(bayes_predictor(w1).actions[0].q[0] == doctest::Approx(0.7));
  const auto w2 = single_kernel_world({{0.999, 0.001}}, LossSpec::clamped_log(0.01), {1.0});
  const auto q = bayes_predictor(w2).actions[0].q;
  CHECK(q[0] == doctest::Approx(0.99).epsilon(1e-12));
  CHECK(q[1] == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(q[0] == doctest::Approx(clamp_oracle_binary(0.999, 0.01)).epsilon(1e-9));

  const auto tie = single_kernel_world({{0.5, 0.5}}, LossSpec::zero_one(), {1.0});
  CHECK_THROWS_AS(bayes_predictor(tie), AssumptionViolation);
}

TEST_CASE("clamp projection against bisection") {
  for (double p0 : {0.5, 0.7, 0.95, 0.999, 0.9999}) {
    const std::vector<double> p{p0, 1 - p0};
    const auto q = clamp_project(p, 0.01);
    CHECK(q[0] == doctest::Approx(clamp_oracle_binary(p0, 0.01)).epsilon(1e-8));
  }
  const auto q = clamp_project(std::vector<double>{0.998, 0.001, 0.001}, 0.01);
  CHECK(q[1] == doctest::Approx(0.01));
  CHECK(q[0] == doctest::Approx(0.98));
}

TEST_CASE("bayes risk") {
  const auto det = fx::four_input();
  CHECK(bayes_risk_from_x(det) == 0.0);
  CHECK(bayes_risk_from_x(det.with_loss(LossSpec::log())) == 0.0);
  const auto w = single_kernel_world({{0.7, 0.3}, {0.7, 0.3}}, LossSpec::zero_one(), {0.5, 0.5});
  CHECK(bayes_risk_from_x(w) == doctest::Approx(0.3));
  const auto l =
      single_kernel_world({{0.9, 0.1}, {0.6, 0.4}}, LossSpec::log(), {0.5, 0.5});
  CHECK(bayes_risk_from_x(l) == doctest::Approx(0.5 * h({0.9, 0.1}) + 0.5 * h({0.6, 0.4})));
  CHECK(bayes_risk_from_x(l) == doctest::Approx(0.499047).epsilon(1e-6));
}

TEST_CASE("bayes image") {
  const auto one = single_kernel_world({{0.8, 0.2}, {0.8, 0.2}}, LossSpec::log(), {0.5, 0.5});
  CHECK(bayes_image(one).size() == 1);
  CHECK(bayes_image(fx::four_input()).size() == 2);
  const auto three = single_kernel_world({{0.9, 0.1}, {0.9, 0.1}, {0.2, 0.8}}, LossSpec::log(),
                                         {0.3, 0.3, 0.4});
  CHECK(bayes_image(three).size() == 2);
}

TEST_CASE("random_world") {
  const WorldSizes sz{2, 4, 2};
  const World a = random_world(0, sz), b = random_world(0, sz);
  CHECK(nlohmann::json(a) == nlohmann::json(b));
  for (std::uint64_t s = 0; s < 30; ++s) {
    const World w = random_world(s, {1 + s % 3, 3 + s % 3, 2 + s % 2});
    CHECK(validate_world(w).all_pass());
    for (std::size_t d = 0; d < w.n_domains(); ++d)
      for (const auto& act : bayes_image(w, d)) CHECK(find_action(bayes_image(w), act));
  }
  WorldConstraints adv;
  adv.adversarial = true;
  const auto r = validate_world(random_world(3, {2, 4, 2}, adv));
  CHECK_FALSE(r.constant_bayes_image);
  WorldConstraints cl;
  cl.loss = LossSpec::clamped_log(1e-3);
  cl.max_image = 3;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const World w = random_world(s, {2, 5, 3}, cl);
    CHECK(validate_world(w).all_pass());
    CHECK(bayes_image(w).size() <= 3);
  }
}

TEST_CASE("log risk equals conditional entropy") {
  WorldConstraints c;
  c.loss = LossSpec::log();
  for (std::uint64_t s = 0; s < 20; ++s) {
    const World w = random_world(s, {2, 4, 3}, c);
    const FiniteDist px = w.p_x();
    double hyx = 0;
    for (std::size_t x = 0; x < w.n_inputs(); ++x) {
      std::vector<double> row(w.p_y_given_x().row(x).begin(), w.p_y_given_x().row(x).end());
      hyx += px[x] * h(row);
    }
    CHECK(std::abs(bayes_risk_from_x(w) - hyx) < 1e-10);
  }
}

TEST_CASE("world json round trip") {
  const World w = random_world(5, {2, 4, 2});
  const nlohmann::json j = w;
  CHECK(nlohmann::json(world_from_json(j)) == j);
  CHECK(j.at("loss").at("kind") == "zero_one");
}
