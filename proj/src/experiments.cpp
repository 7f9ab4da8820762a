#include "idg/experiments.hpp"

#include <cstdio>

#include "idg/errors.hpp"

namespace idg {

SyntheticSpec fixture_spec() {
  SyntheticSpec s;
  s.n_domains = 4;
  s.n_labels = 7;
  s.overlap = Overlap::Disjoint;
  return s;
}

EmbeddingDataset fixture_data() { return gen_synthetic(kFixtureSeed, fixture_spec()); }

EmbeddingDataset embed_dataset(const EmbeddingDataset& data, const TrainResult& model) {
  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return data.with_features(embed(model.spec, model.params, data.features(all)));
}

ArmResult run_arm(const EmbeddingDataset& data, const Arm& arm, const std::vector<std::uint64_t>& seeds,
                  const PairOptions& probe) {
  ArmResult r;
  r.name = arm.name;
  r.config = arm.config;
  r.seeds = seeds;
  for (std::uint64_t seed : seeds) {
    TrainConfig c = arm.config;
    c.seed = seed;
    const auto emb = embed_dataset(data, train(data, c));
    PairOptions p = probe;
    p.seeds = {seed};
    p.sources = arm.sources;
    p.targets = arm.targets;
    const ProbeResult pr = evaluate_all_pairs(emb, p);
    r.target_ll.push_back(pr.target_ll_avg.mean);
    r.source_ll.push_back(pr.source_ll_avg.mean);
    r.target_acc.push_back(pr.target_acc_avg.mean);
    r.source_acc.push_back(pr.source_acc_avg.mean);
  }
  return r;
}

std::vector<ArmResult> lambda_sweep(const EmbeddingDataset& data, const TrainConfig& base,
                                    const std::vector<double>& lambdas,
                                    const std::vector<std::uint64_t>& seeds, const PairOptions& probe) {
  std::vector<ArmResult> out;
  char name[64];
  for (double l : lambdas) {
    Arm a{"", base, {}, {}};
    a.config.lambda = l;
    std::snprintf(name, sizeof name, "lambda=%g", l);
    a.name = name;
    out.push_back(run_arm(data, a, seeds, probe));
  }
  return out;
}

TargetAccessResult target_access(const EmbeddingDataset& data, const TrainConfig& base,
                                 const std::vector<std::uint64_t>& seeds, const PairOptions& probe) {
  const std::size_t n = data.n_domains();
  if (n < 3) throw DimensionError("target access needs at least three domains");
  TargetAccessResult res;
  res.all_domains.assign(seeds.size(), 0.0);
  res.target_excluded.assign(seeds.size(), 0.0);
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    TrainConfig c = base;
    c.seed = seeds[k];
    c.train_domains.clear();
    const auto full = embed_dataset(data, train(data, c));
    for (std::size_t t = 0; t < n; ++t) {
      std::vector<std::size_t> sources;
      for (std::size_t s = 0; s < n; ++s)
        if (s != t) sources.push_back(s);
      PairOptions p = probe;
      p.seeds = {seeds[k]};
      p.sources = sources;
      p.targets = {t};
      res.all_domains[k] += evaluate_all_pairs(full, p).target_ll_avg.mean / static_cast<double>(n);
      TrainConfig ex = c;
      ex.train_domains = sources;
      if (ex.regime.kind == RegimeSpec::Kind::SingleDom && ex.regime.domain == t) ex.regime.domain = sources[0];
      const auto partial = embed_dataset(data, train(data, ex));
      res.target_excluded[k] += evaluate_all_pairs(partial, p).target_ll_avg.mean / static_cast<double>(n);
    }
  }
  return res;
}

std::string arms_csv(const std::vector<ArmResult>& rows) {
  std::string out = "name,objective,bottleneck,lambda,regime,seeds,target_ll,target_ll_se,source_ll,source_ll_se\n";
  char buf[256];
  for (const auto& r : rows) {
    const MeanSe t = r.target_ll_summary(), s = r.source_ll_summary();
    std::snprintf(buf, sizeof buf, "%s,%s,%s,%.17g,%s,%zu,%.17g,%.17g,%.17g,%.17g\n", r.name.c_str(),
                  to_string(r.config.objective).c_str(), to_string(r.config.bottleneck).c_str(), r.config.lambda,
                  r.config.regime.name().c_str(), r.seeds.size(), t.mean, t.se, s.mean, s.se);
    out += buf;
  }
  return out;
}

void to_json(nlohmann::json& j, const ArmResult& r) {
  const MeanSe t = r.target_ll_summary(), s = r.source_ll_summary();
  j = {{"name", r.name},
       {"config", r.config},
       {"seeds", r.seeds},
       {"target_ll", {{"mean", t.mean}, {"se", t.se}, {"per_seed", r.target_ll}}},
       {"source_ll", {{"mean", s.mean}, {"se", s.se}, {"per_seed", r.source_ll}}},
       {"target_acc", r.target_acc},
       {"source_acc", r.source_acc}};
}

}  // namespace idg

namespace idg {

namespace {

// One joint draw of (D, X).
std::pair<std::size_t, std::size_t> draw_dx(const World& w, Rng& rng) {
  const std::size_t d = rng.categorical(w.p_d().probs());
  return {d, rng.categorical(w.p_x_given_d().row(d))};
}

}  // namespace

double infonce_bound_sample(const World& w, const Augmenter& a, const Encoder& e, std::size_t n, Rng& rng) {
  if (n == 0) throw DimensionError("InfoNCE needs at least one negative");
  if (a.n_inputs() != w.n_inputs() || e.n_inputs() != w.n_inputs())
    throw DimensionError("augmenter and encoder must act on the world's inputs");
  const std::size_t nx = w.n_inputs(), na = a.n_augmentations(), nz = e.n_codes();
  // log p(z | a) from p(x | a) proportional to p(x) p(a | x).
  const FiniteDist px = w.p_x();
  std::vector<double> log_z_given_a(na * nz, -INFINITY);
  for (std::size_t j = 0; j < na; ++j) {
    double pa = 0.0;
    std::vector<double> pz(nz, 0.0);
    for (std::size_t x = 0; x < nx; ++x) {
      const double m = px[x] * a.kernel()(x, j);
      pa += m;
      for (std::size_t z = 0; z < nz; ++z) pz[z] += m * e.kernel()(x, z);
    }
    if (pa > 0.0)
      for (std::size_t z = 0; z < nz; ++z)
        if (pz[z] > 0.0) log_z_given_a[j * nz + z] = std::log(pz[z] / pa);
  }
  const std::size_t b = n + 1;
  std::vector<std::size_t> zs(b), as(b);
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t x = draw_dx(w, rng).second;
    as[i] = rng.categorical(a.kernel().row(x));
    zs[i] = rng.categorical(e.kernel().row(x));
  }
  ad::Tensor s(b, b);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) s(i, j) = log_z_given_a[as[j] * nz + zs[i]];
  ad::Tape tape;
  return infonce_from_scores(tape.constant(std::move(s))).bound;
}

CadFidelity cad_fidelity(const World& w, const Encoder& e, std::size_t n, Rng& rng) {
  if (n == 0) throw DimensionError("CAD fidelity needs samples");
  const std::size_t nx = w.n_inputs(), nd = w.n_domains(), nz = e.n_codes();
  std::vector<std::vector<double>> counts(nx, std::vector<double>(nd, 0.0));
  for (std::size_t k = 0; k < n; ++k) {
    const auto [d, x] = draw_dx(w, rng);
    counts[x][d] += 1.0;
  }
  std::vector<std::size_t> pool;
  std::vector<std::vector<double>> p_hat;
  for (std::size_t x = 0; x < nx; ++x) {
    double t = 0.0;
    for (double c : counts[x]) t += c;
    if (t == 0.0) continue;
    pool.push_back(x);
    p_hat.emplace_back(nd);
    for (std::size_t d = 0; d < nd; ++d) p_hat.back()[d] = counts[x][d] / t;
  }
  const FiniteDist px = w.p_x();
  CadFidelity out;
  for (std::size_t z = 0; z < nz; ++z) {
    // Exact p(z) and p(d | z).
    double pz = 0.0;
    std::vector<double> pdz(nd, 0.0);
    for (std::size_t d = 0; d < nd; ++d)
      for (std::size_t x = 0; x < nx; ++x) {
        const double m = w.p_d()[d] * w.p_x_given_d()(d, x) * e.kernel()(x, z);
        pdz[d] += m;
        pz += m;
      }
    if (pz <= 0.0) continue;
    ad::Tensor scores(1, pool.size());
    bool seen = false;
    for (std::size_t k = 0; k < pool.size(); ++k) {
      const double j = px[pool[k]] * e.kernel()(pool[k], z);
      scores(0, k) = j > 0.0 ? std::log(j) : -INFINITY;
      seen = seen || j > 0.0;
    }
    // A code none of whose inputs were drawn has no estimate: count it as
    // the largest possible error.
    double tv = 1.0;
    if (seen) {
      const auto q = cad_domain_posterior(scores, p_hat)[0];
      tv = 0.0;
      for (std::size_t d = 0; d < nd; ++d) tv += std::abs(q[d] - pdz[d] / pz);
      tv *= 0.5;
    }
    out.mean_tv += pz * tv;
    out.max_tv = std::max(out.max_tv, tv);
  }
  return out;
}

}  // namespace idg
