#include <doctest.h>

#include "fixtures.hpp"
#include "idg/augmentation.hpp"
#include "idg/errors.hpp"
#include "idg/oracle.hpp"

using namespace idg;

TEST_CASE("domain-agnostic checker") {
  const World w = fx::four_input();
  const auto id = check_domain_agnostic(w, Augmenter(CondKernel::identity(4)));
  CHECK_FALSE(id.ok);
  REQUIRE(id.domain);
  CHECK(check_domain_agnostic(w, build_regime_augmenter(w, RegimeSpec::supervised())).ok);

  FiniteDist pd({1.0});
  const World single(pd, CondKernel(1, 1, {1.0}), CondKernel(1, 2, {1, 0}), product(pd, pd),
                     LossSpec::zero_one());
  CHECK(check_domain_agnostic(single, Augmenter(CondKernel::identity(1))).ok);
}

TEST_CASE("Bayes-preserving checker") {
  const World w = fx::four_input();
  CHECK(check_bayes_preserving(w, Augmenter(CondKernel::identity(4))).ok);
  const Augmenter merge(CondKernel::deterministic({0, 0, 1, 1}, 2));
  const auto c = check_bayes_preserving(w, merge);
  CHECK_FALSE(c.ok);
  CHECK(c.pair == std::pair<std::size_t, std::size_t>{0, 1});
  CHECK(check_bayes_preserving(w, build_regime_augmenter(w, RegimeSpec::supervised())).ok);
}

TEST_CASE("maximal invariant") {
  CHECK(maximal_invariant(Augmenter(CondKernel::deterministic({0, 0, 0}, 1))).n_classes == 1);
  CHECK(maximal_invariant(Augmenter(CondKernel::identity(4))).n_classes == 4);
  const CondKernel k(4, 2, {0.3, 0.7, 0.3, 0.7, 0.9, 0.1, 0.9, 0.1});
  CHECK(maximal_invariant(Augmenter(k)).class_id == std::vector<std::size_t>{0, 0, 1, 1});
  const CondKernel near(2, 2, {0.3, 0.7, 0.3 + 1e-11, 0.7 - 1e-11});
  CHECK(maximal_invariant(Augmenter(near)).n_classes == 1);
}

TEST_CASE("exact I(A;Z)") {
  const World w = fx::four_input();
  const Augmenter sup = build_regime_augmenter(w, RegimeSpec::supervised());
  CHECK(exact_mi_az(w, sup, Encoder::constant(4)) == doctest::Approx(0.0).epsilon(1e-14));
  const auto m = maximal_invariant(sup);
  const Encoder bucket = Encoder::from_map(m.class_id, m.n_classes);
  CHECK(exact_mi_az(w, sup, bucket) == doctest::Approx(exact_mi_ax(w, sup)).epsilon(1e-12));
  for (const Encoder& e : sample_stochastic_encoders(3, 50, 4, 3))
    CHECK(exact_mi_az(w, sup, e) <= exact_mi_ax(w, sup) + 1e-10);
}

TEST_CASE("regime augmenters") {
  const World w = fx::four_input();
  const auto sup = build_regime_augmenter(w, RegimeSpec::supervised()).kernel();
  CHECK(sup(0, 0) == doctest::Approx(0.5));
  CHECK(sup(0, 2) == doctest::Approx(0.5));
  CHECK(sup(0, 1) == 0.0);

  const auto intra = build_regime_augmenter(w, RegimeSpec::intra_dom()).kernel();
  CHECK(intra(0, 0) == 1.0);
  const auto approx = build_regime_augmenter(w, RegimeSpec::approx_da(0.1)).kernel();
  for (std::size_t x = 0; x < 4; ++x)
    for (std::size_t v = 0; v < 4; ++v)
      CHECK(approx(x, v) == doctest::Approx(0.1 * sup(x, v) + 0.9 * intra(x, v)));

  const auto single = build_regime_augmenter(w, RegimeSpec::single_dom(1)).kernel();
  CHECK(single(0, 2) == 1.0);
  CHECK(check_domain_agnostic(w, Augmenter(single)).ok);
  CHECK_FALSE(check_domain_agnostic(w, Augmenter(intra)).ok);

  // Domain 1 only carries label 0.
  FiniteDist pd({0.5, 0.5});
  const World lacking(pd, CondKernel(2, 3, {0.5, 0.5, 0, 0, 0, 1}),
                      CondKernel(3, 2, {1, 0, 0, 1, 1, 0}), product(pd, pd),
                      LossSpec::zero_one());
  CHECK_THROWS_WITH_AS(build_regime_augmenter(lacking, RegimeSpec::single_dom(1)),
                       doctest::Contains("input 1"), HypothesisError);

  const CondKernel noise = within_domain_noise_kernel(w, 0.8);
  CHECK(noise(0, 1) == doctest::Approx(0.2));
  CHECK(noise(0, 2) == 0.0);
  CHECK_FALSE(check_domain_agnostic(w, build_regime_augmenter(w, RegimeSpec::standard(noise))).ok);
  CHECK_THROWS_AS(build_regime_augmenter(w, RegimeSpec::standard(CondKernel(4, 4, {
                                                                   0, 0, 1, 0, 0, 1, 0, 0,
                                                                   0, 0, 1, 0, 0, 0, 0, 1}))),
                  HypothesisError);
}

TEST_CASE("supervised maximizers are optimal on the fixture") {
  const World w = fx::four_input();
  const auto r = verify_ssl_prop(w, build_regime_augmenter(w, RegimeSpec::supervised()), 2);
  REQUIRE(r.applicable);
  CHECK(r.maximizers == std::vector<std::uint64_t>{5, 10});
  CHECK(r.all_optimal);
  CHECK(r.bucketing_is_maximizer);
  const auto s = verify_ssl_prop(
      w, build_regime_augmenter(w, RegimeSpec::standard(within_domain_noise_kernel(w, 0.8))), 4);
  CHECK_FALSE(s.applicable);
}

TEST_CASE("supervised maximizers are optimal on random worlds") {
  for (std::uint64_t s = 0; s < 15; ++s) {
    const World w = random_world(s, {2, 5, 2});
    const Augmenter a = build_regime_augmenter(w, RegimeSpec::supervised());
    const auto r = verify_ssl_prop(w, a, 3);
    REQUIRE(r.applicable);
    CHECK(r.all_optimal);
    CHECK(r.bucketing_is_maximizer);
  }
}

TEST_CASE("regime json") {
  const RegimeSpec r = RegimeSpec::approx_da(0.25);
  const nlohmann::json j = r;
  CHECK(j.at("regime") == "approx_da");
  CHECK(j.get<RegimeSpec>().mix == 0.25);
  CHECK_THROWS_AS(nlohmann::json({{"regime", "bogus"}}).get<RegimeSpec>(), ParseError);
}
