// Acceptance run: one PASS/FAIL line per criterion. Exit 0 iff all pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "idg/experiments.hpp"
#include "idg/objectives.hpp"
#include "idg/oracle.hpp"
#include "idg/suites.hpp"

#ifndef IDG_LAB_PATH
#define IDG_LAB_PATH "idg-lab"
#endif

using namespace idg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("%s [%d] %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string first_failure(const SuiteReport& r) { return r.failures.empty() ? "" : "; first: " + r.failures[0]; }

// ---- finite-world criteria -------------------------------------------------

Outcome theorem1() {
  SuiteOptions o;
  o.worlds = 100;
  o.seed = 7;
  const auto t0 = std::chrono::steady_clock::now();
  const SuiteReport r = run_theorem1_suite(o);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::size_t sets = 0;
  for (const auto& row : r.detail)
    for (const char* k : {"codes_2", "codes_3"})
      if (row.contains(k) && row[k].value("applicable", false)) ++sets;
  std::size_t char_fail = 0;
  for (const auto& f : r.failures)
    if (f.find("constructed encoder") == std::string::npos) ++char_fail;
  return {char_fail == 0 && r.checked == 200 && secs < 60.0,
          fmt("%zu (world, loss) cases, %zu encoder spaces, %zu mismatches, %.2fs of 60s", r.checked, sets, char_fail,
              secs) +
              first_failure(r)};
}

Outcome dpi_cmi() {
  SuiteOptions o;
  o.worlds = 100;
  o.encoders_per_world = 100;
  o.seed = 11;
  const SuiteReport dpi = run_dpi_suite(o);
  const SuiteReport cmi = run_cmi_suite(o);
  std::size_t eq = 0, neq = 0;
  for (const auto& row : cmi.detail) {
    const std::size_t e = row.value("equality_cases", std::size_t{0});
    eq += e;
    neq += row.value("encoders", std::size_t{0}) - e;
  }
  return {dpi.passed && cmi.passed && dpi.checked >= 10000 && eq > 0 && neq > 0,
          fmt("DPI %zu pairs, %zu violations; CMI %zu encoders (%zu equality, %zu strict), %zu disagreements",
              dpi.checked, dpi.failures.size(), cmi.checked, eq, neq, cmi.failures.size()) +
              first_failure(dpi) + first_failure(cmi)};
}

Outcome existence() {
  SuiteOptions o;
  o.worlds = 100;
  o.seed = 7;
  const SuiteReport r = run_theorem1_suite(o);
  std::size_t built = 0, listed = 0, bad = 0;
  for (const auto& row : r.detail) {
    if (!row.contains("existence")) continue;
    ++built;
    const auto& e = row["existence"];
    if (e["listed"].get<bool>()) ++listed;
  }
  for (const auto& f : r.failures)
    if (f.find("constructed encoder") != std::string::npos) ++bad;
  return {bad == 0 && built == 200,
          fmt("%zu constructions, %zu found in the enumerated optimal set, %zu not optimal", built, listed, bad)};
}

Outcome no_free_lunch() {
  SuiteOptions o;
  o.worlds = 1000;
  o.seed = 13;
  const SuiteReport nfl = run_nofreelunch_suite(o);
  const SuiteReport wr = run_worstrep_suite(o);
  return {nfl.passed && wr.passed && nfl.checked > 0 && wr.exact > 0,
          fmt("no-free-lunch %zu qualifying fixtures x 9 deltas, %zu failures; worst representation %zu fixtures "
              "(%zu error-free sources at exactly 1-delta), %zu failures",
              nfl.checked, nfl.failures.size(), wr.checked, wr.exact, wr.failures.size()) +
              first_failure(nfl) + first_failure(wr)};
}

Outcome ssl_prop() {
  SuiteOptions o;
  o.worlds = 50;
  o.seed = 17;
  const SuiteReport r = run_sslprop_suite(o);
  return {r.passed && r.checked == 50,
          fmt("%zu worlds, %zu failures", r.checked, r.failures.size()) + first_failure(r)};
}

// ---- objectives --------------------------------------------------------------

ad::Tensor randn(Rng& rng, std::size_t r, std::size_t c, double sd = 1.0) {
  ad::Tensor t(r, c);
  for (double& v : t.data) v = rng.normal(0.0, sd);
  return t;
}

Outcome gradients() {
  using namespace ad;
  const char* names[] = {"infonce", "cad", "ccad", "ent", "mi"};
  double worst[5] = {0, 0, 0, 0, 0};
  for (std::uint64_t s = 0; s < 50; ++s) {
    Rng rng(Rng::derive(0x67726164, s));
    const std::size_t in = 3 + rng.uniform_int(4), hidden = 3 + rng.uniform_int(5), out = 2 + rng.uniform_int(3);
    const std::size_t nd = 2 + rng.uniform_int(2), ny = 1 + rng.uniform_int(3), per = 1 + rng.uniform_int(2);
    const double lambda = rng.uniform(0.1, 2.0), tau = rng.uniform(0.2, 1.0);
    Batch b;
    b.label = std::vector<std::size_t>();
    for (std::size_t d = 0; d < nd; ++d)
      for (std::size_t y = 0; y < ny; ++y)
        for (std::size_t k = 0; k < per; ++k) {
          b.domain.push_back(d);
          b.label->push_back(y);
        }
    const std::size_t n = b.domain.size();
    b.x = randn(rng, n, in);
    b.a = randn(rng, n, in);
    // Repeat one input so the count estimates are not all degenerate.
    if (n > 2)
      for (std::size_t j = 0; j < in; ++j) b.x(n - 1, j) = b.x(0, j);
    const MlpSpec spec{in, hidden, out, false}, sspec{in, hidden, out, true};
    Tensor noise(n, out);
    for (double& v : noise.data) v = rng.uniform(-0.5, 0.5);
    const Tensor eps = randn(rng, n, out), eps_a = randn(rng, n, out);
    auto enc = init_mlp(spec, rng).values;
    auto senc = init_mlp(sspec, rng).values;
    const auto fwd = [&](const MlpSpec& sp, const std::vector<Var>& p, Tape& t, const Tensor& x, const Tensor* e) {
      return mlp_forward(sp, std::vector<Var>(p.begin(), p.begin() + (sp.stochastic ? 6 : 4)), t.constant(x), e);
    };
    const LossBuilder fs[5] = {
        [&](Tape& t, const std::vector<Var>& p) {
          return infonce_loss(fwd(spec, p, t, b.x, nullptr).z, fwd(spec, p, t, b.a, nullptr).z, tau).total;
        },
        [&](Tape& t, const std::vector<Var>& p) {
          return cad_loss(fwd(spec, p, t, b.x, nullptr).z, fwd(spec, p, t, b.a, nullptr).z, b, lambda, tau).total;
        },
        [&](Tape& t, const std::vector<Var>& p) {
          return ccad_loss(fwd(spec, p, t, b.x, nullptr).z, fwd(spec, p, t, b.a, nullptr).z, b, lambda, tau).total;
        },
        [&](Tape& t, const std::vector<Var>& p) {
          return ent_loss(fwd(spec, p, t, b.x, nullptr).z, fwd(spec, p, t, b.a, nullptr).z, noise, p[4], p[5],
                          lambda, tau)
              .total;
        },
        [&](Tape& t, const std::vector<Var>& p) {
          const auto o = fwd(sspec, p, t, b.x, &eps);
          return mi_loss(o.z, fwd(sspec, p, t, b.a, &eps_a).z, *o.mean, *o.logvar, p[6], p[7], lambda, tau).total;
        }};
    auto with_extra = [&](std::vector<Tensor> p) {
      p.push_back(randn(rng, 1, out, 0.3));
      p.push_back(randn(rng, 1, out, 0.3));
      return p;
    };
    const std::vector<Tensor> params[5] = {enc, enc, enc, with_extra(enc), with_extra(senc)};
    for (int k = 0; k < 5; ++k) worst[k] = std::max(worst[k], gradient_check(fs[k], params[k]).max_rel_error);
  }
  bool ok = true;
  std::string d = "max relative error over 50 batches:";
  for (int k = 0; k < 5; ++k) {
    ok = ok && worst[k] <= 1e-4;
    d += fmt(" %s %.1e", names[k], worst[k]);
  }
  return {ok, d};
}

struct Stat {
  double mean, se;
};

Stat bound_stat(const World& w, const Augmenter& a, const Encoder& e, std::size_t n, Rng& rng, int reps) {
  std::vector<double> v;
  for (int r = 0; r < reps; ++r) v.push_back(infonce_bound_sample(w, a, e, n, rng));
  const MeanSe m = mean_se(v);
  return {m.mean, m.se};
}

Outcome infonce_bound() {
  const World w = random_world(0, {2, 5, 3});
  const Augmenter a = build_regime_augmenter(w, RegimeSpec::supervised());
  const Encoder e = Encoder::identity(5);
  const double mi = exact_mi_az(w, a, e);
  Rng rng(1);
  const Stat big = bound_stat(w, a, e, 1024, rng, 50);
  // Below I(A;Z) up to three standard errors of the 50-sample mean.
  const bool below = big.mean <= mi + 3.0 * big.se;
  const bool close = std::abs(big.mean - mi) <= 0.05;
  std::vector<Stat> curve;
  for (std::size_t n : {7, 63, 255, 1023}) curve.push_back(bound_stat(w, a, e, n, rng, 50));
  bool mono = true;
  for (std::size_t k = 0; k + 1 < curve.size(); ++k)
    mono = mono && curve[k + 1].mean >= curve[k].mean - 3.0 * std::hypot(curve[k].se, curve[k + 1].se);
  return {below && close && mono,
          fmt("I(A;Z)=%.4f, bound at n=1024 %.4f +- %.4f; n=7,63,255,1023: %.4f %.4f %.4f %.4f", mi, big.mean, big.se,
              curve[0].mean, curve[1].mean, curve[2].mean, curve[3].mean)};
}

Outcome cad_fidelity_check() {
  const World w = random_world(0, {2, 5, 3});
  Rng rng(2);
  std::vector<std::vector<double>> rows;
  Rng er(3);
  for (int x = 0; x < 5; ++x) rows.push_back(er.dirichlet_flat(3));
  double worst = 0.0, mean = 0.0;
  for (const Encoder& e : {Encoder::identity(5), Encoder(CondKernel(rows))}) {
    const CadFidelity f = cad_fidelity(w, e, 4096, rng);
    worst = std::max(worst, f.max_tv);
    mean = std::max(mean, f.mean_tv);
  }
  return {worst <= 0.05, fmt("max TV over codes %.4f, p(z)-weighted TV %.4f (bound 0.05)", worst, mean)};
}

// ---- directional experiments ----------------------------------------------------

struct Shared {
  EmbeddingDataset data = fixture_data();
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  PairOptions probe;
  std::vector<ArmResult> sweep;
  double gap0 = 0.0;
  double ce_at_one = 0.0;
};

const std::vector<double> kLambdas = {0, 1e-2, 1e-1, 1, 10};

Outcome lambda_effect(Shared& sh) {
  TrainConfig base;
  base.bottleneck = Bottleneck::CAD;
  const auto t0 = std::chrono::steady_clock::now();
  sh.sweep = lambda_sweep(sh.data, base, kLambdas, sh.seeds, sh.probe);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::vector<double> t, s;
  for (const auto& r : sh.sweep) {
    t.push_back(r.target_ll_summary().mean);
    s.push_back(r.source_ll_summary().mean);
  }
  sh.gap0 = s[0] - t[0];
  sh.ce_at_one = t[3];
  const std::size_t best = std::max_element(t.begin() + 1, t.end()) - t.begin();
  const bool improves = t[best] - t[0] >= 0.5 * sh.gap0;
  const bool degrades = t.back() < t[best] || s.back() < s[0];
  std::string d = "target LL by lambda:";
  for (std::size_t k = 0; k < t.size(); ++k)
    d += fmt(" %g:%.4f+-%.4f", kLambdas[k], t[k], sh.sweep[k].target_ll_summary().se);
  d += fmt("; gap at 0 %.4f, best lambda %g gains %.4f; %.0fs of 600s", sh.gap0, kLambdas[best], t[best] - t[0], secs);
  return {improves && degrades && secs < 600.0, d};
}

Outcome regime_effect(const Shared& sh) {
  if (sh.sweep.empty()) return {false, "lambda sweep did not run"};
  const auto arm = [&](RegimeSpec r) {
    TrainConfig c;
    c.objective = Objective::InfoNCE;
    c.bottleneck = Bottleneck::CAD;
    c.lambda = 1.0;
    c.regime = std::move(r);
    return run_arm(sh.data, Arm{c.regime.name(), c, {}, {}}, sh.seeds, sh.probe).target_ll_summary().mean;
  };
  RegimeSpec standard;
  standard.kind = RegimeSpec::Kind::Standard;
  const double sup = arm(RegimeSpec::supervised());
  const double single = arm(RegimeSpec::single_dom(0));
  const double intra = arm(RegimeSpec::intra_dom());
  const double std_ = arm(standard);
  const double ce = sh.ce_at_one;
  const double floor = ce - 0.2 * std::abs(ce);
  const double margin = std::abs(sh.gap0);
  const bool da_ok = sup >= floor && single >= floor;
  const bool non_da_worse = intra <= sup - margin && std_ <= sup - margin;
  return {da_ok && non_da_worse,
          fmt("lambda 1, CE+CAD %.4f (floor %.4f); supervised %.4f, single_dom %.4f; intra_dom %.4f, standard %.4f "
              "(must be <= %.4f)",
              ce, floor, sup, single, intra, std_, sup - margin)};
}

Outcome target_access_effect(const Shared& sh) {
  TrainConfig c;
  c.bottleneck = Bottleneck::CAD;
  c.lambda = 1.0;
  const TargetAccessResult r = target_access(sh.data, c, sh.seeds, sh.probe);
  bool ok = true;
  std::string d = "held-out target LL (excluded vs all):";
  for (std::size_t k = 0; k < r.all_domains.size(); ++k) {
    ok = ok && r.target_excluded[k] < r.all_domains[k];
    d += fmt(" %.3f<%.3f", r.target_excluded[k], r.all_domains[k]);
  }
  return {ok, d};
}

// ---- CLI determinism ------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

int run_pipeline(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string lab = std::string("\"") + IDG_LAB_PATH + "\"";
  const std::string cd = "cd \"" + dir.string() + "\" && ";
  const std::vector<std::string> steps = {
      "gen --domains 4 --labels 7 --seed 1 --per-cluster 10 -o data.csv",
      "train --data data.csv --bottleneck cad --lambda-grid 0,1 --epochs 10 --seed 3 -o runs",
      "probe --data data.csv --checkpoint runs/lambda=0 --mode worst --pairs all --max-iters 500 -o probe/lambda=0",
      "probe --data data.csv --checkpoint runs/lambda=1 --mode worst --pairs all --max-iters 500 -o probe/lambda=1",
      "report probe -o report"};
  for (const auto& s : steps) {
    const int rc = std::system((cd + lab + " " + s + " 2>/dev/null").c_str());
    if (rc != 0) return rc;
  }
  return 0;
}

Outcome cli_determinism() {
  const fs::path root = fs::temp_directory_path() / ("idg_acceptance_" + std::to_string(::getpid()));
  const fs::path a = root / "a", b = root / "b";
  if (run_pipeline(a) != 0 || run_pipeline(b) != 0) return {false, "pipeline command failed"};
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), a));
  std::sort(files.begin(), files.end());
  std::size_t differ = 0;
  std::string first;
  for (const auto& f : files)
    if (!fs::exists(b / f) || slurp(a / f) != slurp(b / f)) {
      if (differ++ == 0) first = f.string();
    }
  std::size_t nb = 0;
  for (const auto& e : fs::recursive_directory_iterator(b)) nb += e.is_regular_file();
  const std::string grid = slurp(a / "probe/lambda=0/probe.csv");
  const bool rows16 = std::count(grid.begin(), grid.end(), '\n') == 17;
  fs::remove_all(root);
  return {differ == 0 && nb == files.size() && rows16,
          fmt("%zu files compared, %zu differ, 16-row pair grid %s", files.size(), differ, rows16 ? "yes" : "no") + (first.empty() ? "" : " (first: " + first + ")")};
}

}  // namespace

int main() {
  report(1, "theorem1 exhaustive characterization", theorem1);
  report(2, "data processing and conditional MI lemmas", dpi_cmi);
  report(3, "existence construction", existence);
  report(4, "no free lunch and worst representation", no_free_lunch);
  report(5, "supervised augmentations give optimal maximizers", ssl_prop);
  report(6, "objective gradients", gradients);
  report(7, "InfoNCE bound", infonce_bound);
  report(8, "CAD posterior fidelity", cad_fidelity_check);
  Shared sh;
  report(9, "lambda sweep direction", [&] { return lambda_effect(sh); });
  report(10, "augmentation regime effect", [&] { return regime_effect(sh); });
  report(11, "target access necessity", [&] { return target_access_effect(sh); });
  report(12, "CLI determinism", cli_determinism);
  std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
