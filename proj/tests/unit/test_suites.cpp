#include <doctest.h>

#include "idg/errors.hpp"
#include "idg/suites.hpp"

using namespace idg;

TEST_CASE("every suite passes on 40 worlds") {
  SuiteOptions o;
  o.worlds = 40;
  o.seed = 3;
  for (const auto& name : kSuiteNames) {
    CAPTURE(name);
    const SuiteReport r = run_suite(name, o);
    CHECK(r.passed);
    CHECK(r.failures.empty());
    CHECK(r.checked > 0);
  }
}

TEST_CASE("worst representation suite covers error-free sources") {
  SuiteOptions o;
  o.worlds = 40;
  const SuiteReport r = run_worstrep_suite(o);
  CHECK(r.exact > 0);
  CHECK(r.exact <= r.checked);
}

TEST_CASE("suite reports do not depend on jobs") {
  SuiteOptions o;
  o.worlds = 12;
  o.seed = 5;
  const nlohmann::json one = run_suite("theorem1", o);
  o.jobs = 3;
  const nlohmann::json three = run_suite("theorem1", o);
  CHECK(one == three);
}

TEST_CASE("injected invalid worlds are reported, not failed") {
  SuiteOptions o;
  o.worlds = 10;
  o.allow_invalid = true;
  const SuiteReport r = run_theorem1_suite(o);
  CHECK(r.passed);
  CHECK(r.not_applicable >= 5);
}

TEST_CASE("suite argument errors") {
  SuiteOptions o;
  CHECK_THROWS_AS(run_suite("nope", o), ParseError);
  o.worlds = 0;
  CHECK_THROWS_AS(run_suite("dpi", o), DimensionError);
  o.worlds = 4;
  o.budget = 10;
  CHECK_THROWS_AS(run_suite("cmi", o), BudgetExceeded);
}

TEST_CASE("suite world sizes stay in range") {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const WorldSizes w = suite_world_sizes(s);
    CHECK(w.n_inputs >= 3);
    CHECK(w.n_inputs <= 5);
    CHECK(w.n_labels >= 2);
    CHECK(w.n_labels <= 3);
    CHECK(w.n_domains >= 2);
    CHECK(w.n_domains <= 3);
  }
}
