#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "idg/oracle.hpp"

namespace idg {

// Randomized verification suites over seeded finite worlds.
struct SuiteOptions {
  std::size_t worlds = 100;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  std::uint64_t budget = kDefaultEnumerationBudget;
  // Mix in assumption-violating worlds; they are reported as not applicable
  // instead of failing the suite.
  bool allow_invalid = false;
  // Stochastic encoders drawn per world by the dpi suite.
  std::size_t encoders_per_world = 100;
};

struct SuiteReport {
  std::string suite;
  bool passed = true;
  std::size_t checked = 0;         // instances that exercised an assertion
  std::size_t not_applicable = 0;  // instances whose hypotheses failed
  std::size_t exact = 0;           // worstrep: error-free sources, sup risk exactly 1 - delta
  std::vector<std::string> failures;
  nlohmann::json detail = nlohmann::json::array();
};

inline const std::vector<std::string> kSuiteNames = {"theorem1", "dpi",      "cmi",
                                                     "nofreelunch", "worstrep", "sslprop"};

// Sizes drawn per world: |X| in [3, 5], |Y| in {2, 3}, |D| in {2, 3}.
WorldSizes suite_world_sizes(std::uint64_t world_seed);

// Optimality characterization over deterministic encoders with |Z| in {2, 3}
// under ZeroOne and ClampedLog(1e-3), plus the existence construction.
SuiteReport run_theorem1_suite(const SuiteOptions& o);
// R[Y|X] <= R[Y|Z] + 1e-10 for random stochastic encoders.
SuiteReport run_dpi_suite(const SuiteOptions& o);
// Over all deterministic encoders: R[Y|Z] = R[Y|X] iff, for every code, some
// optimal action for p(Y|z) is optimal for every input mapped to it.
SuiteReport run_cmi_suite(const SuiteOptions& o);
// Random 0-1 fixtures; each qualifying one is swept over delta in (0, q/(1+q)).
SuiteReport run_nofreelunch_suite(const SuiteOptions& o);
// Sup risk equals 1 - delta + delta R_s[Y|Z] (exactly 1 - delta when the
// encoder keeps the source error-free) and is at least 1 - epsilon.
SuiteReport run_worstrep_suite(const SuiteOptions& o);
// Supervised-regime augmenters: every support-matched maximizer of I(A;Z) is
// IDG-optimal and the bucketing encoder is a maximizer.
SuiteReport run_sslprop_suite(const SuiteOptions& o);

// Throws ParseError for an unknown name.
SuiteReport run_suite(const std::string& name, const SuiteOptions& o);

void to_json(nlohmann::json& j, const SuiteReport& r);

}  // namespace idg
