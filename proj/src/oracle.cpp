#include "idg/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "idg/errors.hpp"
#include "idg/parallel.hpp"
#include "idg/rng.hpp"

namespace idg {

bool risks_equal(double a, double b, double tol) {
  if (std::isinf(a) || std::isinf(b)) return a == b;
  return std::abs(a - b) <= tol;
}

DetEncoderSpace::DetEncoderSpace(std::size_t n_inputs, std::size_t n_codes, std::uint64_t budget)
    : n_inputs_(n_inputs), n_codes_(n_codes), size_(1) {
  if (n_inputs == 0 || n_codes == 0) throw DimensionError("encoder space needs inputs and codes");
  for (std::size_t i = 0; i < n_inputs; ++i) {
    if (size_ > budget / n_codes) {
      throw BudgetExceeded("deterministic encoder count " + std::to_string(n_codes) + "^" +
                           std::to_string(n_inputs) + " exceeds budget " +
                           std::to_string(budget));
    }
    size_ *= n_codes;
  }
  if (size_ > budget) throw BudgetExceeded("deterministic encoder count exceeds budget");
}

std::vector<std::size_t> DetEncoderSpace::map_at(std::uint64_t id) const {
  if (id >= size_) throw DimensionError("encoder id out of range");
  std::vector<std::size_t> map(n_inputs_);
  for (std::size_t i = n_inputs_; i-- > 0;) {
    map[i] = static_cast<std::size_t>(id % n_codes_);
    id /= n_codes_;
  }
  return map;
}

std::uint64_t DetEncoderSpace::id_of(const std::vector<std::size_t>& map) const {
  if (map.size() != n_inputs_) throw DimensionError("code map length mismatch");
  std::uint64_t id = 0;
  for (std::size_t z : map) {
    if (z >= n_codes_) throw DimensionError("code out of range");
    id = id * n_codes_ + z;
  }
  return id;
}

DetEncoderSpace enumerate_det_encoders(std::size_t n_inputs, std::size_t n_codes,
                                       std::uint64_t budget) {
  return DetEncoderSpace(n_inputs, n_codes, budget);
}

namespace {

struct EncoderEval {
  double idg = 0.0;
  double rfz = 0.0;
  bool matched = false;
};

std::size_t unique_source_label(const DomainSlice& s) {
  const std::size_t n_labels = s.p_y_given_x.n_out();
  std::vector<double> py(n_labels, 0.0);
  for (std::size_t x = 0; x < s.p_x.size(); ++x)
    for (std::size_t y = 0; y < n_labels; ++y) py[y] += s.p_x[x] * s.p_y_given_x(x, y);
  const auto best = std::max_element(py.begin(), py.end());
  std::size_t count = 0;
  for (double v : py)
    if (*best - v <= kTieTol) ++count;
  if (count != 1) throw HypothesisError("source label marginal has no unique argmax");
  return static_cast<std::size_t>(best - py.begin());
}

bool in_support(const FiniteDist& d, std::size_t x) { return d[x] > kSupportTol; }

// Target with (1 - delta) at x_star labelled y_star and delta times the source.
AdversarialTarget mix_target(const DomainSlice& source, std::size_t x_star, std::size_t y_star,
                             double delta) {
  const std::size_t nx = source.p_x.size();
  const std::size_t ny = source.p_y_given_x.n_out();
  std::vector<double> px(nx);
  for (std::size_t x = 0; x < nx; ++x) px[x] = delta * source.p_x[x];
  px[x_star] += 1.0 - delta;
  std::vector<double> rows(source.p_y_given_x.data());
  for (std::size_t y = 0; y < ny; ++y) rows[x_star * ny + y] = y == y_star ? 1.0 : 0.0;
  return {DomainSlice{FiniteDist(std::move(px)), CondKernel(nx, ny, std::move(rows))}, x_star,
          y_star, delta};
}

std::vector<double> code_support_mass(const DomainSlice& s, const Encoder& e) {
  return pushforward(e.kernel(), s.p_x).vec();
}

}  // namespace

TheoremReport verify_theorem1(const World& w, std::size_t n_codes, const OracleOptions& opt) {
  TheoremReport r;
  const AssumptionReport ar = validate_world(w);
  if (!ar.all_pass()) {
    r.applicable = false;
    r.reason = "world violates assumptions";
    for (const auto& m : ar.messages) r.reason += "; " + m;
    return r;
  }
  const std::size_t image = bayes_image(w).size();
  if (n_codes < image) {
    r.applicable = false;
    r.reason = "n_codes " + std::to_string(n_codes) + " below Bayes image size " +
               std::to_string(image);
    return r;
  }
  const DetEncoderSpace space(w.n_inputs(), n_codes, opt.budget);
  r.n_encoders = space.size();
  r.bayes_risk_x = bayes_risk_from_x(w);

  std::vector<EncoderEval> evals(space.size());
  parallel_for(space.size(), opt.jobs, [&](std::uint64_t id) {
    const Encoder e = space.at(id);
    const IdgReport rep = idg_risk(w, e);
    evals[id] = {rep.idg_risk, rep.risk_from_z, rep.support_match};
  });

  r.min_idg = kInf;
  for (const auto& ev : evals) r.min_idg = std::min(r.min_idg, ev.idg);
  for (std::uint64_t id = 0; id < evals.size(); ++id) {
    if (risks_equal(evals[id].idg, r.min_idg)) r.set_idg_optimal.push_back(id);
    if (evals[id].matched && risks_equal(evals[id].rfz, r.bayes_risk_x))
      r.set_char_optimal.push_back(id);
  }
  r.equal = r.set_idg_optimal == r.set_char_optimal && risks_equal(r.min_idg, r.bayes_risk_x);
  return r;
}

Encoder construct_optimal_encoder(const World& w, std::size_t n_codes) {
  const BayesPredictor f = bayes_predictor(w);
  const std::vector<Action> image = bayes_image(w, f);
  if (n_codes < image.size()) {
    throw HypothesisError("need at least " + std::to_string(image.size()) + " codes, got " +
                          std::to_string(n_codes));
  }
  std::vector<std::size_t> map(w.n_inputs(), 0);
  for (std::size_t x = 0; x < w.n_inputs(); ++x) {
    // Inputs outside every domain have no constraint; keep them on code 0.
    if (auto k = find_action(image, f.actions[x])) map[x] = *k;
  }
  return Encoder::from_map(map, n_codes);
}

NoFreeLunchRecord no_free_lunch_construct(const DomainSlice& source, const Encoder& encoder,
                                          const DomainSlice& good_target, double delta) {
  const LossSpec loss = LossSpec::zero_one();
  const std::size_t nx = source.p_x.size();
  if (encoder.n_inputs() != nx || good_target.p_x.size() != nx)
    throw DimensionError("source, target and encoder disagree on |X|");

  NoFreeLunchRecord rec;
  rec.constant_label = unique_source_label(source);

  std::size_t outside = 0;
  for (std::size_t x = 0; x < nx; ++x)
    if (!in_support(source.p_x, x)) ++outside;
  if (outside < 2) throw HypothesisError("fewer than two inputs outside the source support");

  // The good target must live off the source support and realise every label.
  std::vector<bool> seen(source.p_y_given_x.n_out(), false);
  bool any = false;
  for (std::size_t x = 0; x < nx; ++x) {
    if (!in_support(good_target.p_x, x)) continue;
    any = true;
    if (in_support(source.p_x, x))
      throw HypothesisError("good target overlaps the source support at input " +
                            std::to_string(x));
    const auto acts = optimal_actions(loss, good_target.p_y_given_x.row(x));
    if (acts.size() != 1)
      throw HypothesisError("good target has a Bayes tie at input " + std::to_string(x));
    seen[acts[0].argmax()] = true;
  }
  if (!any) throw HypothesisError("good target has empty support");
  if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }))
    throw HypothesisError("good target does not realise the full label set");

  const PredictorSetSpec fam = source_optimal_family(loss, source, encoder);
  std::vector<bool> non_constant(encoder.n_codes(), false);
  for (std::size_t z = 0; z < fam.size(); ++z) {
    if (fam[z].kind == CodeFamily::Kind::Free) {
      non_constant[z] = true;
      continue;
    }
    for (const auto& a : fam[z].actions)
      if (a.argmax() != rec.constant_label) non_constant[z] = true;
  }
  std::optional<std::size_t> x_star;
  for (std::size_t x = 0; x < nx; ++x) {
    if (in_support(source.p_x, x)) continue;
    double q = 0.0;
    for (std::size_t z = 0; z < encoder.n_codes(); ++z)
      if (non_constant[z]) q += encoder.kernel()(x, z);
    if (q > kSupportTol && (!x_star || q > rec.q)) {
      x_star = x;
      rec.q = q;
    }
  }
  if (!x_star)
    throw HypothesisError("no input outside the source support can be mapped away from the "
                          "constant prediction");

  const Encoder constant = Encoder::constant(nx);
  const auto const_fam = source_optimal_family(loss, source, constant);
  const double enc_good = sup_target_risk(loss, fam, good_target, encoder);
  const double const_good = sup_target_risk(loss, const_fam, good_target, constant);
  if (!(enc_good < const_good))
    throw HypothesisError("encoder is not useful on the good target");

  rec.delta_upper = rec.q / (1.0 + rec.q);
  if (!(delta > 0.0 && delta < rec.delta_upper))
    throw HypothesisError("delta outside (0, " + std::to_string(rec.delta_upper) + ")");

  rec.adversarial = mix_target(source, *x_star, rec.constant_label, delta);
  rec.encoder_sup_risk = sup_target_risk(loss, fam, rec.adversarial.target, encoder);
  rec.constant_sup_risk = sup_target_risk(loss, const_fam, rec.adversarial.target, constant);
  rec.strictly_worse = rec.encoder_sup_risk > rec.constant_sup_risk;
  return rec;
}

WorstRepresentationRecord worst_representation_construct(const DomainSlice& source,
                                                         const Encoder& encoder, double epsilon,
                                                         double delta) {
  const LossSpec loss = LossSpec::zero_one();
  const std::size_t nx = source.p_x.size();
  if (encoder.n_inputs() != nx) throw DimensionError("encoder and source disagree on |X|");
  if (!(delta > 0.0 && delta < epsilon))
    throw HypothesisError("need 0 < delta < epsilon");

  const std::vector<double> pz = code_support_mass(source, encoder);
  std::optional<std::size_t> x_b;
  for (std::size_t x = 0; x < nx && !x_b; ++x) {
    if (in_support(source.p_x, x)) continue;
    bool disjoint = true;
    for (std::size_t z : support(encoder.kernel().row(x)))
      if (pz[z] > kSupportTol) disjoint = false;
    if (disjoint) x_b = x;
  }
  if (!x_b)
    throw HypothesisError("no input outside the source support has codes disjoint from the "
                          "source code support");

  // Any label in the source Bayes image will do; take the first.
  std::optional<std::size_t> y_b;
  for (std::size_t x = 0; x < nx && !y_b; ++x)
    if (in_support(source.p_x, x))
      y_b = optimal_actions(loss, source.p_y_given_x.row(x)).front().argmax();
  if (!y_b) throw HypothesisError("source has empty support");

  WorstRepresentationRecord rec;
  rec.epsilon = epsilon;
  rec.adversarial = mix_target(source, *x_b, *y_b, delta);
  const PredictorSetSpec fam = source_optimal_family(loss, source, encoder);
  rec.sup_risk = sup_target_risk(loss, fam, rec.adversarial.target, encoder);
  rec.lower_bound = 1.0 - delta;
  return rec;
}

std::vector<Encoder> sample_stochastic_encoders(std::uint64_t seed, std::size_t n,
                                                std::size_t n_inputs, std::size_t n_codes,
                                                const StochasticSamplerOptions& opt) {
  if (n_inputs == 0 || n_codes == 0) throw DimensionError("encoder needs inputs and codes");
  std::size_t n_classes = 0;
  if (opt.class_respecting_prob > 0.0) {
    if (opt.input_classes.size() != n_inputs)
      throw DimensionError("input_classes must cover every input");
    n_classes = *std::max_element(opt.input_classes.begin(), opt.input_classes.end()) + 1;
    if (n_codes < n_classes) throw HypothesisError("fewer codes than classes");
  }
  Rng rng(seed);
  std::vector<Encoder> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<double> rows(n_inputs * n_codes, 0.0);
    const double u = rng.uniform();
    const bool class_mode = u < opt.class_respecting_prob;
    for (std::size_t x = 0; x < n_inputs; ++x) {
      double* row = rows.data() + x * n_codes;
      if (class_mode) {
        // Codes z with z % n_classes == class(x), dense Dirichlet on them.
        const std::size_t c = opt.input_classes[x];
        std::vector<std::size_t> codes;
        for (std::size_t z = c; z < n_codes; z += n_classes) codes.push_back(z);
        const auto w = rng.dirichlet_flat(codes.size());
        for (std::size_t i = 0; i < codes.size(); ++i) row[codes[i]] = w[i];
        continue;
      }
      const double v = rng.uniform();
      if (v < opt.sparse_prob) {
        const std::size_t a = rng.uniform_int(n_codes);
        const std::size_t b = rng.uniform_int(n_codes);
        const double t = rng.bernoulli(0.5) ? 1.0 : rng.uniform(0.05, 0.95);
        row[a] += t;
        row[b] += 1.0 - t;
      } else if (v < opt.sparse_prob + opt.near_deterministic_prob) {
        const std::size_t a = rng.uniform_int(n_codes);
        const auto w = rng.dirichlet_flat(n_codes);
        const double slack = n_codes > 1 ? rng.uniform(0.0, 1e-3) : 0.0;
        for (std::size_t z = 0; z < n_codes; ++z) row[z] = slack * w[z];
        row[a] += 1.0 - slack;
      } else {
        const auto w = rng.dirichlet_flat(n_codes);
        std::copy(w.begin(), w.end(), row);
      }
    }
    out.emplace_back(CondKernel(n_inputs, n_codes, std::move(rows)));
  }
  return out;
}

StochasticCheck check_stochastic_encoder(const World& w, const Encoder& e) {
  StochasticCheck c;
  const IdgReport rep = idg_risk(w, e);
  c.idg = rep.idg_risk;
  c.bayes_risk_x = bayes_risk_from_x(w);
  c.support_match = rep.support_match;
  c.risk_minimal = risks_equal(rep.risk_from_z, c.bayes_risk_x);

  const std::size_t nd = w.n_domains();
  std::vector<std::vector<double>> pz(nd);
  for (std::size_t d = 0; d < nd; ++d) pz[d] = code_support_mass(domain_slice(w, d), e);
  for (std::size_t s = 0; s < nd; ++s)
    for (std::size_t t = 0; t < nd; ++t) {
      const double pair = w.pair_dist().at({s, t});
      if (pair <= 0.0) continue;
      for (std::size_t z = 0; z < e.n_codes(); ++z)
        if (pz[s][z] <= kSupportTol) c.cross_pair_mass += pair * pz[t][z];
    }

  if (c.risk_minimal && c.support_match) c.sufficiency_ok = risks_equal(c.idg, c.bayes_risk_x);
  if (!c.support_match && c.cross_pair_mass > kSupportTol)
    c.necessity_ok = c.idg > c.bayes_risk_x + kRiskTol;
  return c;
}

void to_json(nlohmann::json& j, const TheoremReport& r) {
  j = {{"applicable", r.applicable},
       {"reason", r.reason},
       {"n_encoders", r.n_encoders},
       {"min_idg", extended_to_json(r.min_idg)},
       {"bayes_risk_x", r.bayes_risk_x},
       {"set_idg_optimal", r.set_idg_optimal},
       {"set_char_optimal", r.set_char_optimal},
       {"equal", r.equal}};
}

void to_json(nlohmann::json& j, const AdversarialTarget& t) {
  j = {{"p_X", t.target.p_x},
       {"p_Y_given_X", t.target.p_y_given_x},
       {"x_star", t.x_star},
       {"label_at_x_star", t.label_at_x_star},
       {"delta", t.delta}};
}

void to_json(nlohmann::json& j, const NoFreeLunchRecord& r) {
  j = {{"target", r.adversarial},
       {"constant_label", r.constant_label},
       {"q", r.q},
       {"delta_upper", r.delta_upper},
       {"encoder_sup_risk", r.encoder_sup_risk},
       {"constant_sup_risk", r.constant_sup_risk},
       {"strictly_worse", r.strictly_worse}};
}

void to_json(nlohmann::json& j, const WorstRepresentationRecord& r) {
  j = {{"target", r.adversarial},
       {"sup_risk", r.sup_risk},
       {"lower_bound", r.lower_bound},
       {"epsilon", r.epsilon}};
}

}  // namespace idg
