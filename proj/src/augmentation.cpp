#include "idg/augmentation.hpp"

#include <algorithm>

#include "idg/errors.hpp"
#include "idg/oracle.hpp"

namespace idg {
namespace {

bool rows_equal(std::span<const double> a, std::span<const double> b) {
  return linf_distance(a, b) <= kActionTol;
}

// Index into `reps` of a row equal to `row`, or nullopt.
std::optional<std::size_t> find_row(const CondKernel& k, const std::vector<std::size_t>& reps,
                                    std::size_t row) {
  for (std::size_t i = 0; i < reps.size(); ++i)
    if (rows_equal(k.row(reps[i]), k.row(row))) return i;
  return std::nullopt;
}

std::vector<std::size_t> distinct_rows(const CondKernel& k, const std::vector<std::size_t>& xs) {
  std::vector<std::size_t> reps;
  for (std::size_t x : xs)
    if (!find_row(k, reps, x)) reps.push_back(x);
  return reps;
}

void check_dims(const World& w, const Augmenter& a) {
  if (a.n_inputs() != w.n_inputs()) throw DimensionError("augmenter rows must match |X|");
}

// p(x') over same-action inputs in `support_of`, normalized; empty if none.
std::vector<double> same_action_row(const World& w, const BayesPredictor& f,
                                    const FiniteDist& px, std::size_t x) {
  std::vector<double> row(w.n_inputs(), 0.0);
  double total = 0.0;
  for (std::size_t v = 0; v < w.n_inputs(); ++v) {
    if (px[v] <= kSupportTol || !f.actions[v].same_as(f.actions[x])) continue;
    row[v] = px[v];
    total += px[v];
  }
  if (total > 0)
    for (double& r : row) r /= total;
  return row;
}

std::vector<double> intra_dom_row(const World& w, const BayesPredictor& f, std::size_t x) {
  const FiniteDist px = w.p_x();
  if (px[x] <= kSupportTol)
    throw HypothesisError("input " + std::to_string(x) + " lies in no domain");
  std::vector<double> row(w.n_inputs(), 0.0);
  for (std::size_t d = 0; d < w.n_domains(); ++d) {
    const double pdx = w.p_d()[d] * w.p_x_given_d()(d, x) / px[x];
    if (pdx <= 0.0) continue;
    const auto part = same_action_row(w, f, w.p_x_given(d), x);
    for (std::size_t v = 0; v < row.size(); ++v) row[v] += pdx * part[v];
  }
  return row;
}

CondKernel to_kernel(const std::vector<std::vector<double>>& rows) { return CondKernel(rows); }

const char* kind_name(RegimeSpec::Kind k) {
  switch (k) {
    case RegimeSpec::Kind::Supervised: return "supervised";
    case RegimeSpec::Kind::SingleDom: return "single_dom";
    case RegimeSpec::Kind::IntraDom: return "intra_dom";
    case RegimeSpec::Kind::ApproxDA: return "approx_da";
    case RegimeSpec::Kind::Standard: return "standard";
  }
  return "?";
}

}  // namespace

AgnosticCheck check_domain_agnostic(const World& w, const Augmenter& a) {
  check_dims(w, a);
  const CondKernel& k = a.kernel();
  const auto all = distinct_rows(k, support(w.p_x()));
  for (std::size_t d = 0; d < w.n_domains(); ++d) {
    const auto mine = distinct_rows(k, support(w.p_x_given(d)));
    for (std::size_t x : all) {
      if (!find_row(k, mine, x)) return {false, d, x};
    }
  }
  return {};
}

BayesPreservingCheck check_bayes_preserving(const World& w, const Augmenter& a) {
  check_dims(w, a);
  const BayesPredictor f = bayes_predictor(w);
  const auto xs = support(w.p_x());
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = i + 1; j < xs.size(); ++j) {
      if (rows_equal(a.kernel().row(xs[i]), a.kernel().row(xs[j])) &&
          !f.actions[xs[i]].same_as(f.actions[xs[j]]))
        return {false, std::pair{xs[i], xs[j]}};
    }
  return {};
}

InvariantPartition maximal_invariant(const Augmenter& a) {
  InvariantPartition p;
  std::vector<std::size_t> reps;
  p.class_id.resize(a.n_inputs());
  for (std::size_t x = 0; x < a.n_inputs(); ++x) {
    if (auto i = find_row(a.kernel(), reps, x)) {
      p.class_id[x] = *i;
    } else {
      p.class_id[x] = reps.size();
      reps.push_back(x);
    }
  }
  p.n_classes = reps.size();
  return p;
}

double exact_mi_az(const World& w, const Augmenter& a, const Encoder& e) {
  check_dims(w, a);
  if (e.n_inputs() != w.n_inputs()) throw DimensionError("encoder rows must match |X|");
  const FiniteDist px = w.p_x();
  const std::size_t na = a.n_augmentations(), nz = e.n_codes();
  std::vector<double> mass(na * nz, 0.0);
  for (std::size_t x = 0; x < w.n_inputs(); ++x) {
    if (px[x] <= 0.0) continue;
    for (std::size_t i = 0; i < na; ++i) {
      const double pa = px[x] * a.kernel()(x, i);
      if (pa == 0.0) continue;
      for (std::size_t z = 0; z < nz; ++z) mass[i * nz + z] += pa * e.kernel()(x, z);
    }
  }
  return mutual_information(JointTable({na, nz}, std::move(mass)));
}

double exact_mi_ax(const World& w, const Augmenter& a) {
  return exact_mi_az(w, a, Encoder::identity(w.n_inputs()));
}

SslPropReport verify_ssl_prop(const World& w, const Augmenter& a, std::size_t n_codes,
                              std::uint64_t budget) {
  SslPropReport r;
  const auto fail = [&](std::string why) {
    r.applicable = false;
    r.reason = std::move(why);
    return r;
  };
  if (!validate_world(w).all_pass()) return fail("world violates assumptions");
  if (const auto c = check_domain_agnostic(w, a); !c.ok)
    return fail("augmenter is not domain-agnostic: domain " + std::to_string(*c.domain) +
                " lacks the conditional of input " + std::to_string(*c.input));
  if (const auto c = check_bayes_preserving(w, a); !c.ok)
    return fail("augmenter is not Bayes-preserving: inputs " + std::to_string(c.pair->first) +
                " and " + std::to_string(c.pair->second));
  const InvariantPartition m = maximal_invariant(a);
  if (n_codes < m.n_classes)
    return fail("n_codes " + std::to_string(n_codes) + " below class count " +
                std::to_string(m.n_classes));

  const DetEncoderSpace space(w.n_inputs(), n_codes, budget);
  r.n_encoders = space.size();
  r.bayes_risk_x = bayes_risk_from_x(w);
  r.bucketing_id = space.id_of(m.class_id);

  std::vector<std::uint64_t> ids;
  std::vector<double> mis;
  for (std::uint64_t id = 0; id < space.size(); ++id) {
    const Encoder e = space.at(id);
    if (!support_match(w, e)) continue;
    ids.push_back(id);
    mis.push_back(exact_mi_az(w, a, e));
  }
  r.n_support_matched = ids.size();
  r.max_mi = mis.empty() ? 0.0 : *std::max_element(mis.begin(), mis.end());
  r.all_optimal = true;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (r.max_mi - mis[i] > kRiskTol) continue;
    r.maximizers.push_back(ids[i]);
    const double idg = idg_risk(w, space.at(ids[i])).idg_risk;
    r.maximizer_idg.push_back(idg);
    r.all_optimal = r.all_optimal && risks_equal(idg, r.bayes_risk_x);
    if (ids[i] == r.bucketing_id) r.bucketing_is_maximizer = true;
  }
  if (r.maximizers.empty()) r.all_optimal = false;
  return r;
}

std::string RegimeSpec::name() const { return kind_name(kind); }

CondKernel within_domain_noise_kernel(const World& w, double keep) {
  if (!(keep >= 0.0 && keep <= 1.0)) throw InvalidDistribution("keep must lie in [0, 1]");
  const std::size_t n = w.n_inputs();
  std::vector<std::vector<double>> rows(n, std::vector<double>(n, 0.0));
  for (std::size_t x = 0; x < n; ++x) {
    std::vector<std::size_t> peers;
    for (std::size_t v = 0; v < n; ++v) {
      if (v == x) continue;
      for (std::size_t d = 0; d < w.n_domains(); ++d)
        if (w.p_x_given_d()(d, x) > kSupportTol && w.p_x_given_d()(d, v) > kSupportTol) {
          peers.push_back(v);
          break;
        }
    }
    rows[x][x] = peers.empty() ? 1.0 : keep;
    for (std::size_t v : peers) rows[x][v] = (1.0 - keep) / static_cast<double>(peers.size());
  }
  return to_kernel(rows);
}

Augmenter build_regime_augmenter(const World& w, const RegimeSpec& r) {
  const std::size_t n = w.n_inputs();
  if (r.kind == RegimeSpec::Kind::Standard) {
    if (!r.noise) throw HypothesisError("standard regime needs a noise kernel");
    if (r.noise->n_in() != n || r.noise->n_out() != n)
      throw DimensionError("noise kernel must be |X| x |X|");
    for (std::size_t x = 0; x < n; ++x)
      for (std::size_t v : support(r.noise->row(x))) {
        bool shared = v == x;
        for (std::size_t d = 0; d < w.n_domains() && !shared; ++d)
          shared = w.p_x_given_d()(d, x) > kSupportTol && w.p_x_given_d()(d, v) > kSupportTol;
        if (!shared)
          throw HypothesisError("noise kernel moves input " + std::to_string(x) +
                                " outside its domains");
      }
    return Augmenter(*r.noise);
  }
  if (r.kind == RegimeSpec::Kind::ApproxDA && !(r.mix >= 0.0 && r.mix <= 1.0))
    throw InvalidDistribution("approx_da mix must lie in [0, 1]");
  if (r.kind == RegimeSpec::Kind::SingleDom && r.domain >= w.n_domains())
    throw DimensionError("single_dom domain out of range");

  const BayesPredictor f = bayes_predictor(w);
  const FiniteDist px = w.p_x();
  std::vector<std::vector<double>> rows(n);
  for (std::size_t x = 0; x < n; ++x) {
    switch (r.kind) {
      case RegimeSpec::Kind::Supervised:
        rows[x] = same_action_row(w, f, px, x);
        break;
      case RegimeSpec::Kind::SingleDom:
        rows[x] = same_action_row(w, f, w.p_x_given(r.domain), x);
        break;
      case RegimeSpec::Kind::IntraDom:
        rows[x] = intra_dom_row(w, f, x);
        break;
      case RegimeSpec::Kind::ApproxDA: {
        const auto sup = same_action_row(w, f, px, x);
        const auto intra = intra_dom_row(w, f, x);
        rows[x].resize(n);
        for (std::size_t v = 0; v < n; ++v)
          rows[x][v] = r.mix * sup[v] + (1.0 - r.mix) * intra[v];
        break;
      }
      case RegimeSpec::Kind::Standard:
        break;
    }
    double total = 0.0;
    for (double v : rows[x]) total += v;
    if (total <= 0.0)
      throw HypothesisError(r.name() + " regime has no augmentation for input " +
                            std::to_string(x));
  }
  return Augmenter(to_kernel(rows));
}

void to_json(nlohmann::json& j, const RegimeSpec& r) {
  j = {{"regime", r.name()}};
  if (r.kind == RegimeSpec::Kind::SingleDom) j["domain"] = r.domain;
  if (r.kind == RegimeSpec::Kind::ApproxDA) j["mix"] = r.mix;
  if (r.kind == RegimeSpec::Kind::Standard && r.noise) j["noise"] = *r.noise;
}

void from_json(const nlohmann::json& j, RegimeSpec& r) {
  const std::string name = j.at("regime").get<std::string>();
  r = RegimeSpec{};
  if (name == "supervised") {
    r.kind = RegimeSpec::Kind::Supervised;
  } else if (name == "single_dom") {
    r.kind = RegimeSpec::Kind::SingleDom;
    r.domain = j.value("domain", std::size_t{0});
  } else if (name == "intra_dom") {
    r.kind = RegimeSpec::Kind::IntraDom;
  } else if (name == "approx_da") {
    r.kind = RegimeSpec::Kind::ApproxDA;
    r.mix = j.value("mix", 0.1);
  } else if (name == "standard") {
    r.kind = RegimeSpec::Kind::Standard;
    if (j.contains("noise")) r.noise = j.at("noise").get<CondKernel>();
  } else {
    throw ParseError("unknown regime '" + name + "'");
  }
}

void to_json(nlohmann::json& j, const SslPropReport& r) {
  j = {{"applicable", r.applicable},
       {"reason", r.reason},
       {"n_encoders", r.n_encoders},
       {"n_support_matched", r.n_support_matched},
       {"max_mi", r.max_mi},
       {"bayes_risk_x", r.bayes_risk_x},
       {"maximizers", r.maximizers},
       {"bucketing_id", r.bucketing_id},
       {"bucketing_is_maximizer", r.bucketing_is_maximizer},
       {"all_optimal", r.all_optimal}};
  nlohmann::json idg = nlohmann::json::array();
  for (double v : r.maximizer_idg) idg.push_back(extended_to_json(v));
  j["maximizer_idg"] = idg;
}

}  // namespace idg
