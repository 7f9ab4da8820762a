#pragma once

#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "idg/finite_prob.hpp"
#include "idg/world.hpp"

namespace idg {

// Stochastic map from inputs to codes, p(Z|X).
class Encoder {
 public:
  Encoder() = default;
  explicit Encoder(CondKernel kernel) : kernel_(std::move(kernel)) {}

  static Encoder from_map(const std::vector<std::size_t>& map, std::size_t n_codes) {
    return Encoder(CondKernel::deterministic(map, n_codes));
  }
  static Encoder identity(std::size_t n) { return Encoder(CondKernel::identity(n)); }
  static Encoder constant(std::size_t n_inputs, std::size_t n_codes = 1, std::size_t code = 0) {
    return from_map(std::vector<std::size_t>(n_inputs, code), n_codes);
  }

  const CondKernel& kernel() const { return kernel_; }
  std::size_t n_inputs() const { return kernel_.n_in(); }
  std::size_t n_codes() const { return kernel_.n_out(); }
  // True when every row is a point mass.
  bool deterministic() const;
  // Code of each input for deterministic encoders (the row argmax otherwise).
  std::vector<std::size_t> code_map() const;
  // Relabel codes: new code perm[z] receives the mass of old code z.
  Encoder permuted(const std::vector<std::size_t>& perm) const;

 private:
  CondKernel kernel_;
};

// One domain's law of (X, Y): p(X|d) and p(Y|X,d).
struct DomainSlice {
  FiniteDist p_x;
  CondKernel p_y_given_x;
};

DomainSlice domain_slice(const World& w, std::size_t domain);

// Joint p(Z, Y) induced by pushing a domain slice through an encoder, stored
// as |Z| x |Y| row-major.
struct CodeLabelJoint {
  std::size_t n_codes = 0;
  std::size_t n_labels = 0;
  std::vector<double> mass;

  double p_z(std::size_t z) const;
  // p(Y | z); only meaningful when p_z(z) > 0.
  std::vector<double> p_y_given_z(std::size_t z) const;
};

CodeLabelJoint code_label_joint(const DomainSlice& slice, const Encoder& e);

// Exact joint over (D, Y, Z) with the conditionals derived from it.
class InducedJoint {
 public:
  explicit InducedJoint(JointTable dyz) : dyz_(std::move(dyz)) {}

  const JointTable& table() const { return dyz_; }
  std::size_t n_domains() const { return dyz_.shape()[0]; }
  std::size_t n_labels() const { return dyz_.shape()[1]; }
  std::size_t n_codes() const { return dyz_.shape()[2]; }

  FiniteDist p_z() const;
  // Throw ZeroProbabilityEvent when the conditioning event has no mass.
  FiniteDist p_z_given_d(std::size_t d) const;
  FiniteDist p_y_given_z(std::size_t z) const;
  FiniteDist p_y_given_zd(std::size_t z, std::size_t d) const;

 private:
  JointTable dyz_;
};

InducedJoint induced_joint(const World& w, const Encoder& e);

// supp p(Z|d) == supp p(Z) for every domain d.
bool support_match(const World& w, const Encoder& e);

// R[Y|Z] under p(.|domain), or under the marginal when no domain is given.
double risk_from_z(const World& w, const Encoder& e,
                   std::optional<std::size_t> domain = std::nullopt);
// sum_d p(d) R^d[Y|Z]; sits between best_case_risk and R[Y|X].
double domain_averaged_risk_from_z(const World& w, const Encoder& e);

// Source-risk minimizers from Z, described code by code.
struct CodeFamily {
  enum class Kind { Fixed, TieSet, Free };
  Kind kind = Kind::Free;
  std::vector<Action> actions;  // empty for Free
};
using PredictorSetSpec = std::vector<CodeFamily>;

PredictorSetSpec source_optimal_family(const LossSpec& loss, const DomainSlice& source,
                                       const Encoder& e);
PredictorSetSpec source_optimal_family(const World& w, const Encoder& e, std::size_t ds);

// sup / inf over the family of the target risk E_{p(Z,Y|target)} loss(Y, g(Z)).
double sup_target_risk(const LossSpec& loss, const PredictorSetSpec& family,
                       const DomainSlice& target, const Encoder& e);
double inf_target_risk(const LossSpec& loss, const PredictorSetSpec& family,
                       const DomainSlice& target, const Encoder& e);

struct IdgReport {
  double idg_risk = 0.0;
  std::vector<std::vector<double>> per_pair;  // [ds][dt] worst target risk
  bool support_match = false;
  double risk_from_z = 0.0;
};

IdgReport idg_risk(const World& w, const Encoder& e);
double best_case_risk(const World& w, const Encoder& e);

void to_json(nlohmann::json& j, const IdgReport& r);
void to_json(nlohmann::json& j, const Encoder& e);
void from_json(const nlohmann::json& j, Encoder& e);

}  // namespace idg
