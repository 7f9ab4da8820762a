#include <doctest.h>

#include <cmath>

#include "idg/errors.hpp"
#include "idg/finite_prob.hpp"
#include "idg/rng.hpp"

using namespace idg;

namespace {

// Plain summation, independent of the library's entropy routine.
double naive_entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0) h -= v * std::log(v);
  return h;
}

CondKernel random_sparse_kernel(Rng& rng, std::size_t n_in, std::size_t n_out) {
  std::vector<std::vector<double>> rows(n_in);
  for (auto& r : rows) {
    r = rng.dirichlet_flat(n_out);
    for (auto& v : r)
      if (rng.bernoulli(0.4)) v = 0.0;
    double s = 0;
    for (double v : r) s += v;
    if (s == 0) {
      r.assign(n_out, 0.0);
      r[rng.uniform_int(n_out)] = 1.0;
    } else {
      for (auto& v : r) v /= s;
    }
  }
  return CondKernel(rows);
}

}  // namespace

TEST_CASE("support") {
  CHECK(support(FiniteDist({0.5, 0.5, 0.0})) == std::vector<std::size_t>{0, 1});
  CHECK(support(FiniteDist::point_mass(4, 2)) == std::vector<std::size_t>{2});
  CHECK(support(FiniteDist({0.3, 1e-15, 0.7 - 1e-15})) == std::vector<std::size_t>{0, 2});
}

TEST_CASE("entropy") {
  CHECK(entropy(FiniteDist::uniform(4)) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  CHECK(entropy(FiniteDist::point_mass(3, 1)) == 0.0);
  CHECK(entropy(FiniteDist({0.5, 0.25, 0.25})) == doctest::Approx(1.0397207708399179).epsilon(1e-12));
}

TEST_CASE("mutual information") {
  CHECK(mutual_information(product(FiniteDist({0.3, 0.7}), FiniteDist({0.2, 0.8}))) ==
        doctest::Approx(0.0).epsilon(1e-12));
  CHECK(mutual_information(joint_from(FiniteDist::uniform(3), CondKernel::identity(3))) ==
        doctest::Approx(std::log(3.0)).epsilon(1e-12));
  JointTable j({2, 2}, {0.4, 0.1, 0.1, 0.4});
  const double oracle = 2 * naive_entropy({0.5, 0.5}) - naive_entropy({0.4, 0.1, 0.1, 0.4});
  CHECK(mutual_information(j) == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(mutual_information(j) == doctest::Approx(0.192745).epsilon(1e-6));
}

TEST_CASE("pushforward") {
  const FiniteDist d({0.5, 0.5});
  CHECK(pushforward(CondKernel::identity(2), d) == d);
  const auto c = pushforward(CondKernel::deterministic({1, 1}, 3), d);
  CHECK(c[1] == 1.0);
  const auto out = pushforward(CondKernel(2, 2, {1, 0, 0.2, 0.8}), d);
  CHECK(out[0] == doctest::Approx(0.6));
  CHECK(out[1] == doctest::Approx(0.4));
  CHECK_THROWS_AS(pushforward(CondKernel::identity(3), d), DimensionError);
}

TEST_CASE("condition") {
  const FiniteDist a({0.3, 0.7}), b({0.2, 0.8});
  const auto c = condition(product(a, b), 0, 1);
  CHECK(linf_distance(c.probs(), b.probs()) < 1e-12);
  JointTable j({2, 2}, {0.4, 0.1, 0.1, 0.4});
  const auto s = condition(j, 0, 0);
  CHECK(s[0] == doctest::Approx(0.8));
  CHECK(s[1] == doctest::Approx(0.2));
  JointTable z({2, 2}, {0.5, 0.5, 0.0, 0.0});
  CHECK_THROWS_AS(condition(z, 0, 1), ZeroProbabilityEvent);
}

TEST_CASE("constructors reject invalid mass") {
  CHECK_THROWS_AS(FiniteDist({0.5, 0.6}), InvalidDistribution);
  CHECK_THROWS_AS(FiniteDist({-0.1, 1.1}), InvalidDistribution);
  CHECK_THROWS_AS(CondKernel(1, 2, {0.5, 0.4}), InvalidDistribution);
  CHECK_THROWS_AS(JointTable({2}, {0.5, 0.6}), InvalidDistribution);
  CHECK_NOTHROW(FiniteDist({0.5, 0.5 + 1e-10}));
}

TEST_CASE("properties on random instances") {
  Rng rng(7);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng.uniform_int(4), m = 2 + rng.uniform_int(4);
    const CondKernel k = random_sparse_kernel(rng, n, m);
    auto dv = rng.dirichlet_flat(n);
    dv[rng.uniform_int(n)] = 0.0;
    double s = 0;
    for (double v : dv) s += v;
    for (auto& v : dv) v /= s;
    const FiniteDist d(dv);

    std::vector<bool> expected(m, false);
    for (std::size_t x : support(d, 0.0))
      for (std::size_t z : support(k.row(x), 0.0)) expected[z] = true;
    std::vector<std::size_t> exp_ids;
    for (std::size_t z = 0; z < m; ++z)
      if (expected[z]) exp_ids.push_back(z);
    CHECK(support(pushforward(k, d), 0.0) == exp_ids);

    CHECK(kl_divergence(d, d) == doctest::Approx(0.0).epsilon(1e-14));
    const FiniteDist q(rng.dirichlet_flat(n));
    CHECK(kl_divergence(d, q) >= 0.0);
    const JointTable j = joint_from(d, k);
    const JointTable prod = product(j.marginal(0), j.marginal(1));
    CHECK(std::abs(mutual_information(j) - kl_divergence(j.flatten(), prod.flatten())) < 1e-10);
  }
}

TEST_CASE("json round trip") {
  const CondKernel k(2, 3, {0.2, 0.3, 0.5, 1, 0, 0});
  nlohmann::json j = k;
  CHECK(j.contains("rows"));
  CHECK(j.get<CondKernel>() == k);
  const FiniteDist d({0.25, 0.75});
  CHECK(nlohmann::json(d).get<FiniteDist>() == d);
  CHECK(extended_to_json(kInf) == "inf");
  CHECK(extended_from_json(extended_to_json(kInf)) == kInf);
}
