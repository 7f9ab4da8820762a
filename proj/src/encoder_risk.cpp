#include "idg/encoder_risk.hpp"

#include <algorithm>
#include <cmath>

#include "idg/errors.hpp"

namespace idg {

bool Encoder::deterministic() const {
  for (std::size_t x = 0; x < n_inputs(); ++x) {
    auto r = kernel_.row(x);
    if (std::none_of(r.begin(), r.end(), [](double v) { return v == 1.0; })) return false;
  }
  return true;
}

std::vector<std::size_t> Encoder::code_map() const {
  std::vector<std::size_t> map(n_inputs());
  for (std::size_t x = 0; x < n_inputs(); ++x) {
    auto r = kernel_.row(x);
    map[x] = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return map;
}

Encoder Encoder::permuted(const std::vector<std::size_t>& perm) const {
  if (perm.size() != n_codes()) throw DimensionError("Encoder::permuted: bad permutation size");
  std::vector<double> flat(n_inputs() * n_codes(), 0.0);
  for (std::size_t x = 0; x < n_inputs(); ++x) {
    for (std::size_t z = 0; z < n_codes(); ++z) flat[x * n_codes() + perm.at(z)] = kernel_(x, z);
  }
  return Encoder(CondKernel(n_inputs(), n_codes(), std::move(flat)));
}

DomainSlice domain_slice(const World& w, std::size_t domain) {
  if (domain >= w.n_domains()) throw DimensionError("domain_slice: bad domain");
  if (w.p_y_given_xd()) return {w.p_x_given(domain), (*w.p_y_given_xd())[domain]};
  return {w.p_x_given(domain), w.p_y_given_x()};
}

double CodeLabelJoint::p_z(std::size_t z) const {
  double s = 0.0;
  for (std::size_t y = 0; y < n_labels; ++y) s += mass[z * n_labels + y];
  return s;
}

std::vector<double> CodeLabelJoint::p_y_given_z(std::size_t z) const {
  const double pz = p_z(z);
  std::vector<double> out(mass.begin() + z * n_labels, mass.begin() + (z + 1) * n_labels);
  for (auto& v : out) v /= pz;
  return out;
}

CodeLabelJoint code_label_joint(const DomainSlice& slice, const Encoder& e) {
  if (slice.p_x.size() != e.n_inputs() || slice.p_y_given_x.n_in() != e.n_inputs()) {
    throw DimensionError("code_label_joint: encoder does not match the input space");
  }
  CodeLabelJoint j{e.n_codes(), slice.p_y_given_x.n_out(), {}};
  j.mass.assign(j.n_codes * j.n_labels, 0.0);
  for (std::size_t x = 0; x < e.n_inputs(); ++x) {
    const double px = slice.p_x[x];
    if (px <= 0.0) continue;
    auto py = slice.p_y_given_x.row(x);
    for (std::size_t z = 0; z < j.n_codes; ++z) {
      const double pxz = px * e.kernel()(x, z);
      if (pxz <= 0.0) continue;
      for (std::size_t y = 0; y < j.n_labels; ++y) j.mass[z * j.n_labels + y] += pxz * py[y];
    }
  }
  return j;
}

FiniteDist InducedJoint::p_z() const { return dyz_.marginal(2); }

FiniteDist InducedJoint::p_z_given_d(std::size_t d) const {
  return condition(dyz_.marginal({0, 2}), 0, d);
}

FiniteDist InducedJoint::p_y_given_z(std::size_t z) const {
  return condition(dyz_.marginal({2, 1}), 0, z);
}

FiniteDist InducedJoint::p_y_given_zd(std::size_t z, std::size_t d) const {
  // Reorder to (D, Z, Y) and condition twice.
  const std::size_t nd = n_domains(), ny = n_labels(), nz = n_codes();
  if (d >= nd || z >= nz) throw DimensionError("p_y_given_zd: index out of range");
  std::vector<double> slice(ny);
  double total = 0.0;
  for (std::size_t y = 0; y < ny; ++y) {
    slice[y] = dyz_.at({d, y, z});
    total += slice[y];
  }
  if (total <= kSupportTol) {
    throw ZeroProbabilityEvent("p_y_given_zd: code " + std::to_string(z) +
                               " has no mass in domain " + std::to_string(d));
  }
  for (auto& v : slice) v /= total;
  return FiniteDist(std::move(slice));
}

InducedJoint induced_joint(const World& w, const Encoder& e) {
  if (e.n_inputs() != w.n_inputs()) throw DimensionError("induced_joint: encoder input mismatch");
  const std::size_t nd = w.n_domains(), ny = w.n_labels(), nz = e.n_codes();
  std::vector<double> mass(nd * ny * nz, 0.0);
  for (std::size_t d = 0; d < nd; ++d) {
    const auto j = code_label_joint(domain_slice(w, d), e);
    for (std::size_t y = 0; y < ny; ++y) {
      for (std::size_t z = 0; z < nz; ++z) {
        mass[(d * ny + y) * nz + z] = w.p_d()[d] * j.mass[z * ny + y];
      }
    }
  }
  return InducedJoint(JointTable({nd, ny, nz}, std::move(mass)));
}

bool support_match(const World& w, const Encoder& e) {
  const auto all = support(pushforward(e.kernel(), w.p_x()));
  for (std::size_t d = 0; d < w.n_domains(); ++d) {
    if (support(pushforward(e.kernel(), w.p_x_given(d))) != all) return false;
  }
  return true;
}

namespace {

double slice_risk_from_z(const LossSpec& loss, const DomainSlice& s, const Encoder& e) {
  const auto j = code_label_joint(s, e);
  double r = 0.0;
  for (std::size_t z = 0; z < j.n_codes; ++z) {
    const double pz = j.p_z(z);
    if (pz <= kSupportTol) continue;
    r += pz * best_expected_loss(loss, j.p_y_given_z(z));
  }
  return r;
}

}  // namespace

double risk_from_z(const World& w, const Encoder& e, std::optional<std::size_t> domain) {
  if (domain) return slice_risk_from_z(w.loss(), domain_slice(w, *domain), e);
  // Marginal slice: p(X) with the shared p(Y|X) (the D-mixture of label kernels).
  return slice_risk_from_z(w.loss(), DomainSlice{w.p_x(), w.p_y_given_x()}, e);
}

double domain_averaged_risk_from_z(const World& w, const Encoder& e) {
  double r = 0.0;
  for (std::size_t d = 0; d < w.n_domains(); ++d) {
    if (w.p_d()[d] > 0.0) r += w.p_d()[d] * risk_from_z(w, e, d);
  }
  return r;
}

PredictorSetSpec source_optimal_family(const LossSpec& loss, const DomainSlice& source,
                                       const Encoder& e) {
  const auto j = code_label_joint(source, e);
  PredictorSetSpec spec(j.n_codes);
  for (std::size_t z = 0; z < j.n_codes; ++z) {
    if (j.p_z(z) <= kSupportTol) continue;  // Free
    auto acts = optimal_actions(loss, j.p_y_given_z(z));
    spec[z].kind = acts.size() == 1 ? CodeFamily::Kind::Fixed : CodeFamily::Kind::TieSet;
    spec[z].actions = std::move(acts);
  }
  return spec;
}

PredictorSetSpec source_optimal_family(const World& w, const Encoder& e, std::size_t ds) {
  return source_optimal_family(w.loss(), domain_slice(w, ds), e);
}

namespace {

template <bool Worst>
double target_risk(const LossSpec& loss, const PredictorSetSpec& family,
                   const DomainSlice& target, const Encoder& e) {
  const auto j = code_label_joint(target, e);
  if (family.size() != j.n_codes) throw DimensionError("target_risk: family/code mismatch");
  double r = 0.0;
  for (std::size_t z = 0; z < j.n_codes; ++z) {
    const double pz = j.p_z(z);
    if (pz <= kSupportTol) continue;
    const auto py = j.p_y_given_z(z);
    double v;
    if (family[z].kind == CodeFamily::Kind::Free) {
      v = Worst ? worst_expected_loss(loss, py) : best_expected_loss(loss, py);
    } else {
      v = Worst ? -kInf : kInf;
      for (const auto& a : family[z].actions) {
        const double l = expected_loss(loss, py, a);
        v = Worst ? std::max(v, l) : std::min(v, l);
      }
    }
    if (std::isinf(v)) return kInf;
    r += pz * v;
  }
  return r;
}

}  // namespace

double sup_target_risk(const LossSpec& loss, const PredictorSetSpec& family,
                       const DomainSlice& target, const Encoder& e) {
  return target_risk<true>(loss, family, target, e);
}

double inf_target_risk(const LossSpec& loss, const PredictorSetSpec& family,
                       const DomainSlice& target, const Encoder& e) {
  return target_risk<false>(loss, family, target, e);
}

namespace {

template <bool Worst>
IdgReport pairwise(const World& w, const Encoder& e) {
  if (e.n_inputs() != w.n_inputs()) throw DimensionError("idg_risk: encoder input mismatch");
  const std::size_t nd = w.n_domains();
  IdgReport rep;
  rep.per_pair.assign(nd, std::vector<double>(nd, 0.0));
  std::vector<DomainSlice> slices;
  for (std::size_t d = 0; d < nd; ++d) slices.push_back(domain_slice(w, d));
  for (std::size_t ds = 0; ds < nd; ++ds) {
    const auto family = source_optimal_family(w.loss(), slices[ds], e);
    for (std::size_t dt = 0; dt < nd; ++dt) {
      rep.per_pair[ds][dt] = Worst ? sup_target_risk(w.loss(), family, slices[dt], e)
                                   : inf_target_risk(w.loss(), family, slices[dt], e);
    }
  }
  // Fixed (ds, dt) order keeps the sum reproducible.
  double total = 0.0;
  for (std::size_t ds = 0; ds < nd; ++ds) {
    for (std::size_t dt = 0; dt < nd; ++dt) {
      const double weight = w.pair_dist().at({ds, dt});
      if (weight <= 0.0) continue;
      const double v = rep.per_pair[ds][dt];
      total = std::isinf(v) ? kInf : total + weight * v;
    }
  }
  rep.idg_risk = total;
  return rep;
}

}  // namespace

IdgReport idg_risk(const World& w, const Encoder& e) {
  auto rep = pairwise<true>(w, e);
  rep.support_match = support_match(w, e);
  rep.risk_from_z = risk_from_z(w, e);
  return rep;
}

double best_case_risk(const World& w, const Encoder& e) { return pairwise<false>(w, e).idg_risk; }

void to_json(nlohmann::json& j, const IdgReport& r) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& row : r.per_pair) {
    nlohmann::json jr = nlohmann::json::array();
    for (double v : row) jr.push_back(extended_to_json(v));
    pairs.push_back(jr);
  }
  j = {{"idg_risk", extended_to_json(r.idg_risk)},
       {"per_pair", pairs},
       {"support_match", r.support_match},
       {"risk_from_z", extended_to_json(r.risk_from_z)}};
}

void to_json(nlohmann::json& j, const Encoder& e) { j = e.kernel(); }

void from_json(const nlohmann::json& j, Encoder& e) { e = Encoder(j.get<CondKernel>()); }

}  // namespace idg
