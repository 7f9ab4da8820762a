#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "idg/encoder_risk.hpp"
#include "idg/oracle.hpp"
#include "idg/rng.hpp"

using namespace idg;

TEST_CASE("induced joint") {
  const World w = fx::four_input();
  const auto id = induced_joint(w, Encoder::identity(4));
  for (std::size_t d = 0; d < 2; ++d)
    CHECK(linf_distance(id.p_z_given_d(d).probs(), w.p_x_given(d).probs()) < 1e-12);
  const auto c = induced_joint(w, Encoder::constant(4));
  CHECK(c.p_y_given_z(0)[0] == doctest::Approx(0.5));
  const auto b = induced_joint(w, fx::bucketing());
  CHECK(b.p_y_given_z(0)[0] == 1.0);
}

TEST_CASE("support match") {
  const World w = fx::four_input();
  CHECK(support_match(w, Encoder::constant(4)));
  CHECK_FALSE(support_match(w, Encoder::identity(4)));
  CHECK(support_match(w, fx::bucketing()));
}

TEST_CASE("risk from z") {
  const World w = fx::four_input();
  CHECK(risk_from_z(w, Encoder::identity(4)) == doctest::Approx(bayes_risk_from_x(w)));
  CHECK(risk_from_z(w, Encoder::constant(4)) == doctest::Approx(0.5));

  FiniteDist pd({1.0});
  const World m(pd, CondKernel(1, 2, {0.5, 0.5}), CondKernel(2, 2, {0.9, 0.1, 0.6, 0.4}),
                product(pd, pd), LossSpec::zero_one());
  // Merged conditional (0.75, 0.25): risk 0.25.
  CHECK(risk_from_z(m, Encoder::constant(2)) == doctest::Approx(0.25));
}

TEST_CASE("source optimal family") {
  const World w = fx::four_input();
  const auto fam = source_optimal_family(w, Encoder::from_map({0, 0, 1, 1}, 3), 0);
  CHECK(fam[0].kind == CodeFamily::Kind::TieSet);
  CHECK(fam[0].actions.size() == 2);
  CHECK(fam[1].kind == CodeFamily::Kind::Free);
  CHECK(fam[2].kind == CodeFamily::Kind::Free);
  const auto lf = source_optimal_family(w.with_loss(LossSpec::log()), fx::bucketing(), 0);
  CHECK(lf[0].kind == CodeFamily::Kind::Fixed);
}

TEST_CASE("idg risk on the four-input fixture") {
  const World w = fx::four_input();
  CHECK(idg_risk(w, fx::bucketing()).idg_risk == 0.0);
  const auto rep = idg_risk(w, Encoder::identity(4));
  CHECK(rep.idg_risk == doctest::Approx(0.5));
  CHECK(rep.per_pair[0][1] == doctest::Approx(1.0));
  CHECK(rep.per_pair[1][0] == doctest::Approx(1.0));
  CHECK(best_case_risk(w, Encoder::identity(4)) == 0.0);
  CHECK(best_case_risk(w, fx::bucketing()) == 0.0);
  CHECK(std::isinf(idg_risk(w.with_loss(LossSpec::log()), Encoder::identity(4)).idg_risk));
  const nlohmann::json j = idg_risk(w.with_loss(LossSpec::log()), Encoder::identity(4));
  CHECK(j.at("idg_risk") == "inf");
}

TEST_CASE("risk ordering, DPI and permutation invariance on random pairs") {
  Rng rng(11);
  WorldConstraints cl;
  cl.loss = LossSpec::clamped_log(1e-3);
  for (std::uint64_t s = 0; s < 60; ++s) {
    const World w = random_world(s, {2 + s % 2, 4, 2 + s % 2}, s % 2 ? cl : WorldConstraints{});
    for (const Encoder& e : sample_stochastic_encoders(s, 5, w.n_inputs(), 3)) {
      const double bx = bayes_risk_from_x(w);
      const double rz = risk_from_z(w, e);
      CHECK(rz >= bx - 1e-10);
      const double idg = idg_risk(w, e).idg_risk;
      const double best = best_case_risk(w, e);
      CHECK(idg >= best - 1e-10);
      CHECK(best >= domain_averaged_risk_from_z(w, e) - 1e-10);
      CHECK(domain_averaged_risk_from_z(w, e) >= bx - 1e-10);
      std::vector<std::size_t> perm(3);
      std::iota(perm.begin(), perm.end(), 0);
      std::reverse(perm.begin(), perm.end());
      CHECK(risks_equal(idg_risk(w, e.permuted(perm)).idg_risk, idg, 1e-12));
    }
  }
}
