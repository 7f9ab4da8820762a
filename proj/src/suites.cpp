#include "idg/suites.hpp"

#include <algorithm>
#include <cmath>

#include "idg/augmentation.hpp"
#include "idg/errors.hpp"
#include "idg/parallel.hpp"
#include "idg/rng.hpp"

namespace idg {

namespace {

constexpr double kDpiTol = 1e-10;

std::string world_tag(std::size_t i, std::uint64_t seed, const LossSpec& loss) {
  return "world " + std::to_string(i) + " (seed " + std::to_string(seed) + ", " + loss.name() + ")";
}

// Per-world results are collected by index and merged in order, so reports
// do not depend on the number of jobs.
struct Partial {
  std::size_t checked = 0;
  std::size_t not_applicable = 0;
  std::size_t exact = 0;
  std::vector<std::string> failures;
  nlohmann::json detail = nlohmann::json::array();
};

SuiteReport merge(std::string name, std::vector<Partial>& parts) {
  SuiteReport r;
  r.suite = std::move(name);
  for (auto& p : parts) {
    r.checked += p.checked;
    r.not_applicable += p.not_applicable;
    r.exact += p.exact;
    for (auto& f : p.failures) r.failures.push_back(std::move(f));
    for (auto& d : p.detail) r.detail.push_back(std::move(d));
  }
  if (r.checked == 0) r.failures.push_back("no instance satisfied the suite hypotheses");
  r.passed = r.failures.empty();
  return r;
}

void check_options(const SuiteOptions& o) {
  if (o.worlds == 0) throw DimensionError("at least one world is required");
}

std::uint64_t world_seed(const SuiteOptions& o, std::size_t i) { return Rng::derive(o.seed, i); }

bool injected_invalid(const SuiteOptions& o, std::size_t i) { return o.allow_invalid && i % 2 == 1; }

World suite_world(const SuiteOptions& o, std::size_t i, const LossSpec& loss,
                  std::optional<std::size_t> max_image = std::nullopt) {
  const std::uint64_t s = world_seed(o, i);
  WorldConstraints c;
  c.loss = loss;
  c.max_image = max_image;
  c.adversarial = injected_invalid(o, i);
  return random_world(s, suite_world_sizes(s), c);
}

// p(Y | z) under the pooled input marginal, or nullopt when p(z) = 0.
std::optional<std::vector<double>> label_given_code(const World& w, const Encoder& e, std::size_t z) {
  const FiniteDist px = w.p_x();
  std::vector<double> p(w.n_labels(), 0.0);
  double mass = 0.0;
  for (std::size_t x = 0; x < w.n_inputs(); ++x) {
    const double m = px[x] * e.kernel()(x, z);
    if (m <= 0.0) continue;
    mass += m;
    for (std::size_t y = 0; y < w.n_labels(); ++y) p[y] += m * w.p_y_given_x()(x, y);
  }
  if (mass <= 0.0) return std::nullopt;
  for (double& v : p) v /= mass;
  return p;
}

// The characterization side of the equality case, decided from actions alone.
bool actions_match_bayes(const World& w, const Encoder& e) {
  const FiniteDist px = w.p_x();
  for (std::size_t z = 0; z < e.n_codes(); ++z) {
    const auto pz = label_given_code(w, e, z);
    if (!pz) continue;
    bool some = false;
    for (const Action& a : optimal_actions(w.loss(), *pz)) {
      bool all = true;
      for (std::size_t x = 0; x < w.n_inputs() && all; ++x) {
        if (px[x] <= 0.0 || e.kernel()(x, z) <= 0.0) continue;
        const auto py = w.p_y_given_x().row(x);
        all = expected_loss(w.loss(), py, a) <= best_expected_loss(w.loss(), py) + kRiskTol;
      }
      if (all) {
        some = true;
        break;
      }
    }
    if (!some) return false;
  }
  return true;
}

// Brute-force sup of the 0-1 target risk over deterministic heads g: Z -> Y
// that minimize the source risk.
double brute_sup_risk(const DomainSlice& source, const DomainSlice& target, const Encoder& e) {
  const std::size_t nz = e.n_codes(), ny = source.p_y_given_x.n_out(), nx = source.p_x.size();
  const auto joint = [&](const DomainSlice& s) {
    std::vector<double> m(nz * ny, 0.0);
    for (std::size_t x = 0; x < nx; ++x)
      for (std::size_t z = 0; z < nz; ++z)
        for (std::size_t y = 0; y < ny; ++y) m[z * ny + y] += s.p_x[x] * e.kernel()(x, z) * s.p_y_given_x(x, y);
    return m;
  };
  const auto ms = joint(source), mt = joint(target);
  std::uint64_t total = 1;
  for (std::size_t z = 0; z < nz; ++z) total *= ny;
  std::vector<std::pair<double, double>> risks;
  double best = INFINITY;
  for (std::uint64_t id = 0; id < total; ++id) {
    std::uint64_t rest = id;
    double rs = 0.0, rt = 0.0;
    for (std::size_t z = 0; z < nz; ++z) {
      const std::size_t g = rest % ny;
      rest /= ny;
      for (std::size_t y = 0; y < ny; ++y)
        if (y != g) {
          rs += ms[z * ny + y];
          rt += mt[z * ny + y];
        }
    }
    risks.emplace_back(rs, rt);
    best = std::min(best, rs);
  }
  double sup = 0.0;
  for (const auto& [rs, rt] : risks)
    if (rs <= best + kTieTol) sup = std::max(sup, rt);
  return sup;
}

// 0-1 Bayes risk of the source from Z.
double source_risk_from_z(const DomainSlice& source, const Encoder& e) {
  const std::size_t nz = e.n_codes(), ny = source.p_y_given_x.n_out(), nx = source.p_x.size();
  double r = 0.0;
  for (std::size_t z = 0; z < nz; ++z) {
    std::vector<double> m(ny, 0.0);
    for (std::size_t x = 0; x < nx; ++x)
      for (std::size_t y = 0; y < ny; ++y) m[y] += source.p_x[x] * e.kernel()(x, z) * source.p_y_given_x(x, y);
    double tot = 0.0;
    for (double v : m) tot += v;
    r += tot - *std::max_element(m.begin(), m.end());
  }
  return r;
}

// Random 0-1 fixture for the impossibility constructions: deterministic
// labels, a source on a few inputs, a good target on the rest.
struct LunchFixture {
  DomainSlice source, good_target;
  Encoder encoder;
};

LunchFixture lunch_fixture(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t nx = 4 + rng.uniform_int(3);
  const std::size_t ny = 2 + rng.uniform_int(2);
  std::vector<std::size_t> order(nx);
  for (std::size_t i = 0; i < nx; ++i) order[i] = i;
  rng.shuffle(order);
  // At least |Y| inputs stay outside the source so the good target can
  // realise every label.
  const std::size_t n_src = 1 + rng.uniform_int(nx - ny);
  // Source labels cycle through a random order of Y, target inputs start
  // with one of each label.
  std::vector<std::size_t> ys(ny);
  for (std::size_t y = 0; y < ny; ++y) ys[y] = y;
  rng.shuffle(ys);
  std::vector<std::size_t> label(nx);
  for (std::size_t k = 0; k < nx; ++k)
    label[order[k]] = k < n_src ? ys[k % ny] : k - n_src < ny ? k - n_src : rng.uniform_int(ny);
  std::vector<double> ky(nx * ny, 0.0);
  for (std::size_t x = 0; x < nx; ++x) ky[x * ny + label[x]] = 1.0;
  const CondKernel labels(nx, ny, ky);

  std::vector<double> ps(nx, 0.0), pt(nx, 0.0);
  const auto ws = rng.dirichlet_flat(n_src);
  for (std::size_t k = 0; k < n_src; ++k) ps[order[k]] = ws[k];
  const auto wt = rng.dirichlet_flat(nx - n_src);
  for (std::size_t k = n_src; k < nx; ++k) pt[order[k]] = wt[k - n_src];

  Encoder e;
  const std::size_t kind = rng.uniform_int(3);
  if (kind == 0) {
    // Arbitrary deterministic map.
    const std::size_t nz = 2 + rng.uniform_int(3);
    std::vector<std::size_t> map(nx);
    for (auto& z : map) z = rng.uniform_int(nz);
    e = Encoder::from_map(map, nz);
  } else if (kind == 1) {
    // Code = label, with at most one off-source input sent to a spare code.
    std::vector<std::size_t> map(label);
    if (rng.bernoulli(0.5)) map[order[n_src + rng.uniform_int(nx - n_src)]] = ny;
    e = Encoder::from_map(map, ny + 1);
  } else {
    // Stochastic, each row a flat Dirichlet over one or two random codes.
    const std::size_t nz = 2 + rng.uniform_int(3);
    std::vector<double> rows(nx * nz, 0.0);
    for (std::size_t x = 0; x < nx; ++x) {
      const std::size_t a = rng.uniform_int(nz), b = rng.uniform_int(nz);
      const auto w = rng.dirichlet_flat(2);
      rows[x * nz + a] += w[0];
      rows[x * nz + b] += w[1];
    }
    e = Encoder(CondKernel(nx, nz, rows));
  }
  return {{FiniteDist(ps), labels}, {FiniteDist(pt), labels}, e};
}

}  // namespace

WorldSizes suite_world_sizes(std::uint64_t world_seed) {
  Rng rng(Rng::derive(world_seed, 0x5155));
  WorldSizes s;
  s.n_inputs = 3 + rng.uniform_int(3);
  s.n_labels = 2 + rng.uniform_int(2);
  s.n_domains = 2 + rng.uniform_int(2);
  return s;
}

SuiteReport run_theorem1_suite(const SuiteOptions& o) {
  check_options(o);
  std::vector<Partial> parts(o.worlds);
  OracleOptions oo;
  oo.budget = o.budget;
  parallel_for(o.worlds, o.jobs, [&](std::uint64_t i) {
    Partial& p = parts[i];
    for (const LossSpec& loss : {LossSpec::zero_one(), LossSpec::clamped_log(1e-3)}) {
      const World w = suite_world(o, i, loss, 3);
      const std::string tag = world_tag(i, world_seed(o, i), loss);
      nlohmann::json row = {{"world", i}, {"seed", world_seed(o, i)}, {"loss", loss.name()}};
      bool any = false;
      for (std::size_t nz : {2, 3}) {
        const TheoremReport rep = verify_theorem1(w, nz, oo);
        row["codes_" + std::to_string(nz)] = rep;
        if (!rep.applicable) continue;
        any = true;
        if (!rep.equal) p.failures.push_back(tag + ", |Z|=" + std::to_string(nz) + ": optimal sets differ");
        if (!risks_equal(rep.min_idg, rep.bayes_risk_x))
          p.failures.push_back(tag + ", |Z|=" + std::to_string(nz) + ": min IDG risk differs from R[Y|X]");
      }
      if (!any) {
        ++p.not_applicable;
        if (!o.allow_invalid) p.failures.push_back(tag + ": no applicable encoder space");
        p.detail.push_back(row);
        continue;
      }
      ++p.checked;
      // Existence: the constructed encoder meets both conditions and reaches R[Y|X].
      const std::size_t n_image = bayes_image(w).size();
      const Encoder e = construct_optimal_encoder(w, n_image);
      const bool matched = support_match(w, e);
      const bool minimal = risks_equal(risk_from_z(w, e), bayes_risk_from_x(w));
      const double idg = idg_risk(w, e).idg_risk;
      bool listed = true;
      if (n_image <= 3) {
        const TheoremReport rep = verify_theorem1(w, n_image, oo);
        const std::uint64_t id = enumerate_det_encoders(w.n_inputs(), n_image, o.budget).id_of(e.code_map());
        listed = std::binary_search(rep.set_idg_optimal.begin(), rep.set_idg_optimal.end(), id);
      }
      row["existence"] = {{"support_match", matched}, {"risk_minimal", minimal}, {"idg", idg}, {"listed", listed}};
      if (!matched || !minimal || !risks_equal(idg, bayes_risk_from_x(w)) || !listed)
        p.failures.push_back(tag + ": constructed encoder is not optimal");
      p.detail.push_back(row);
    }
  });
  return merge("theorem1", parts);
}

SuiteReport run_dpi_suite(const SuiteOptions& o) {
  check_options(o);
  std::vector<Partial> parts(o.worlds);
  const LossSpec losses[] = {LossSpec::zero_one(), LossSpec::clamped_log(1e-3), LossSpec::log()};
  parallel_for(o.worlds, o.jobs, [&](std::uint64_t i) {
    Partial& p = parts[i];
    const LossSpec& loss = losses[i % 3];
    const World w = suite_world(o, i, loss);
    const double rx = bayes_risk_from_x(w);
    const std::size_t nz = 2 + i % 3;
    const auto encoders = sample_stochastic_encoders(Rng::derive(world_seed(o, i), 1), o.encoders_per_world,
                                                     w.n_inputs(), nz);
    double worst_slack = INFINITY;
    for (std::size_t k = 0; k < encoders.size(); ++k) {
      const double rz = risk_from_z(w, encoders[k]);
      ++p.checked;
      worst_slack = std::min(worst_slack, rz - rx);
      if (!(rx <= rz + kDpiTol))
        p.failures.push_back(world_tag(i, world_seed(o, i), loss) + ", encoder " + std::to_string(k) +
                             ": R[Y|X] exceeds R[Y|Z]");
    }
    p.detail.push_back({{"world", i}, {"loss", loss.name()}, {"bayes_risk_x", rx}, {"min_gap", worst_slack}});
  });
  return merge("dpi", parts);
}

SuiteReport run_cmi_suite(const SuiteOptions& o) {
  check_options(o);
  std::vector<Partial> parts(o.worlds);
  const LossSpec losses[] = {LossSpec::zero_one(), LossSpec::clamped_log(1e-3), LossSpec::log()};
  parallel_for(o.worlds, o.jobs, [&](std::uint64_t i) {
    Partial& p = parts[i];
    const LossSpec& loss = losses[i % 3];
    const World w = suite_world(o, i, loss);
    const double rx = bayes_risk_from_x(w);
    std::size_t n_equal = 0, n_enc = 0;
    for (std::size_t nz : {2, 3}) {
      const auto space = enumerate_det_encoders(w.n_inputs(), nz, o.budget);
      for (std::uint64_t id = 0; id < space.size(); ++id) {
        const Encoder e = space.at(id);
        const bool equal = risks_equal(risk_from_z(w, e), rx);
        const bool predicted = actions_match_bayes(w, e);
        ++p.checked;
        ++n_enc;
        n_equal += equal;
        if (equal != predicted)
          p.failures.push_back(world_tag(i, world_seed(o, i), loss) + ", |Z|=" + std::to_string(nz) +
                               ", encoder " + std::to_string(id) + (equal ? ": equality without matching actions"
                                                                          : ": matching actions without equality"));
      }
    }
    p.detail.push_back({{"world", i}, {"loss", loss.name()}, {"encoders", n_enc}, {"equality_cases", n_equal}});
  });
  return merge("cmi", parts);
}

SuiteReport run_nofreelunch_suite(const SuiteOptions& o) {
  check_options(o);
  std::vector<Partial> parts(o.worlds);
  parallel_for(o.worlds, o.jobs, [&](std::uint64_t i) {
    Partial& p = parts[i];
    const std::uint64_t seed = world_seed(o, i);
    const LunchFixture f = lunch_fixture(seed);
    const std::string tag = "fixture " + std::to_string(i) + " (seed " + std::to_string(seed) + ")";
    NoFreeLunchRecord first;
    try {
      first = no_free_lunch_construct(f.source, f.encoder, f.good_target, 1e-6);
    } catch (const HypothesisError& e) {
      ++p.not_applicable;
      p.detail.push_back({{"fixture", i}, {"applicable", false}, {"reason", e.what()}});
      return;
    }
    ++p.checked;
    nlohmann::json deltas = nlohmann::json::array();
    for (int k = 1; k <= 9; ++k) {
      const double delta = first.delta_upper * k / 10.0;
      const auto rec = no_free_lunch_construct(f.source, f.encoder, f.good_target, delta);
      const Encoder constant = Encoder::constant(f.encoder.n_inputs());
      const double enc_sup = brute_sup_risk(f.source, rec.adversarial.target, f.encoder);
      const double const_sup = brute_sup_risk(f.source, rec.adversarial.target, constant);
      deltas.push_back({{"delta", delta}, {"encoder_sup_risk", rec.encoder_sup_risk},
                        {"constant_sup_risk", rec.constant_sup_risk}, {"brute_encoder", enc_sup},
                        {"brute_constant", const_sup}});
      if (!rec.strictly_worse || !(rec.encoder_sup_risk > rec.constant_sup_risk))
        p.failures.push_back(tag + ", delta " + std::to_string(delta) + ": encoder not strictly worse");
      if (std::abs(enc_sup - rec.encoder_sup_risk) > kRiskTol ||
          std::abs(const_sup - rec.constant_sup_risk) > kRiskTol)
        p.failures.push_back(tag + ", delta " + std::to_string(delta) + ": brute-force sup risk disagrees");
    }
    p.detail.push_back({{"fixture", i}, {"applicable", true}, {"q", first.q}, {"delta_upper", first.delta_upper},
                        {"deltas", deltas}});
  });
  return merge("nofreelunch", parts);
}

SuiteReport run_worstrep_suite(const SuiteOptions& o) {
  check_options(o);
  std::vector<Partial> parts(o.worlds);
  constexpr double kEpsilon = 0.05;
  parallel_for(o.worlds, o.jobs, [&](std::uint64_t i) {
    Partial& p = parts[i];
    const std::uint64_t seed = world_seed(o, i);
    const LunchFixture f = lunch_fixture(seed);
    const std::string tag = "fixture " + std::to_string(i) + " (seed " + std::to_string(seed) + ")";
    // Codes of x_b are free, so the sup is (1 - delta) plus delta times the
    // source risk, which every source minimizer shares.
    const double rs = source_risk_from_z(f.source, f.encoder);
    nlohmann::json deltas = nlohmann::json::array();
    for (double delta : {1e-4, 1e-3, 1e-2, 0.03, 0.0499}) {
      WorstRepresentationRecord rec;
      try {
        rec = worst_representation_construct(f.source, f.encoder, kEpsilon, delta);
      } catch (const HypothesisError& e) {
        ++p.not_applicable;
        p.detail.push_back({{"fixture", i}, {"applicable", false}, {"reason", e.what()}});
        return;
      }
      const double brute = brute_sup_risk(f.source, rec.adversarial.target, f.encoder);
      const double expected = 1.0 - delta + delta * rs;
      deltas.push_back({{"delta", delta}, {"sup_risk", rec.sup_risk}, {"brute", brute}, {"expected", expected}});
      const std::string at = tag + ", delta " + std::to_string(delta);
      if (!risks_equal(rec.sup_risk, expected) || !risks_equal(brute, expected))
        p.failures.push_back(at + ": sup risk is not 1 - delta + delta R_s[Y|Z]");
      if (!(rec.sup_risk >= 1.0 - kEpsilon))
        p.failures.push_back(at + ": sup risk below 1 - epsilon");
      if (rs <= kRiskTol && !risks_equal(rec.sup_risk, 1.0 - delta))
        p.failures.push_back(at + ": error-free source but sup risk is not 1 - delta");
    }
    ++p.checked;
    if (rs <= kRiskTol) ++p.exact;
    p.detail.push_back({{"fixture", i}, {"applicable", true}, {"source_risk_z", rs}, {"deltas", deltas}});
  });
  SuiteReport r = merge("worstrep", parts);
  if (r.exact == 0) {
    r.failures.push_back("no fixture with an error-free source");
    r.passed = false;
  }
  return r;
}

SuiteReport run_sslprop_suite(const SuiteOptions& o) {
  check_options(o);
  std::vector<Partial> parts(o.worlds);
  parallel_for(o.worlds, o.jobs, [&](std::uint64_t i) {
    Partial& p = parts[i];
    const World w = suite_world(o, i, LossSpec::zero_one());
    const std::string tag = world_tag(i, world_seed(o, i), w.loss());
    SslPropReport rep;
    try {
      const Augmenter a = build_regime_augmenter(w, RegimeSpec::supervised());
      rep = verify_ssl_prop(w, a, std::max<std::size_t>(2, maximal_invariant(a).n_classes), o.budget);
    } catch (const HypothesisError& e) {
      rep.applicable = false;
      rep.reason = e.what();
    }
    p.detail.push_back(rep);
    if (!rep.applicable) {
      ++p.not_applicable;
      if (!o.allow_invalid) p.failures.push_back(tag + ": not applicable (" + rep.reason + ")");
      return;
    }
    ++p.checked;
    if (!rep.all_optimal) p.failures.push_back(tag + ": a support-matched maximizer is not IDG-optimal");
    if (!rep.bucketing_is_maximizer) p.failures.push_back(tag + ": bucketing encoder is not a maximizer");
  });
  return merge("sslprop", parts);
}

SuiteReport run_suite(const std::string& name, const SuiteOptions& o) {
  if (name == "theorem1") return run_theorem1_suite(o);
  if (name == "dpi") return run_dpi_suite(o);
  if (name == "cmi") return run_cmi_suite(o);
  if (name == "nofreelunch") return run_nofreelunch_suite(o);
  if (name == "worstrep") return run_worstrep_suite(o);
  if (name == "sslprop") return run_sslprop_suite(o);
  throw ParseError("unknown suite '" + name + "'");
}

void to_json(nlohmann::json& j, const SuiteReport& r) {
  j = {{"suite", r.suite},
       {"passed", r.passed},
       {"checked", r.checked},
       {"not_applicable", r.not_applicable},
       {"exact", r.exact},
       {"failures", r.failures},
       {"detail", r.detail}};
}

}  // namespace idg
