#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "idg/encoder_risk.hpp"
#include "idg/finite_prob.hpp"
#include "idg/world.hpp"

namespace idg {

// p(A|X) over augmentation ids. Regime augmenters use A = X.
class Augmenter {
 public:
  Augmenter() = default;
  explicit Augmenter(CondKernel kernel) : kernel_(std::move(kernel)) {}

  const CondKernel& kernel() const { return kernel_; }
  std::size_t n_inputs() const { return kernel_.n_in(); }
  std::size_t n_augmentations() const { return kernel_.n_out(); }

 private:
  CondKernel kernel_;
};

struct AgnosticCheck {
  bool ok = true;
  std::optional<std::size_t> domain;  // domain missing a conditional
  std::optional<std::size_t> input;   // input whose row is missing there
};

struct BayesPreservingCheck {
  bool ok = true;
  std::optional<std::pair<std::size_t, std::size_t>> pair;  // equal rows, different actions
};

// Rows are compared at L-infinity tolerance kActionTol; inputs outside
// supp p(X) are ignored.
AgnosticCheck check_domain_agnostic(const World& w, const Augmenter& a);
BayesPreservingCheck check_bayes_preserving(const World& w, const Augmenter& a);

struct InvariantPartition {
  std::vector<std::size_t> class_id;  // M(x), canonical by first occurrence
  std::size_t n_classes = 0;
};

InvariantPartition maximal_invariant(const Augmenter& a);

// Exact I(A;Z) under the world's input marginal.
double exact_mi_az(const World& w, const Augmenter& a, const Encoder& e);
// I(A;X), the ceiling for any encoder.
double exact_mi_ax(const World& w, const Augmenter& a);

struct SslPropReport {
  bool applicable = true;
  std::string reason;
  std::uint64_t n_encoders = 0;
  std::uint64_t n_support_matched = 0;
  double max_mi = 0.0;
  double bayes_risk_x = 0.0;
  std::vector<std::uint64_t> maximizers;
  std::vector<double> maximizer_idg;
  std::uint64_t bucketing_id = 0;
  bool bucketing_is_maximizer = false;
  bool all_optimal = false;
};

// Among support-matched deterministic encoders, every maximizer of I(A;Z)
// should be IDG-optimal. Failed hypotheses give applicable = false.
SslPropReport verify_ssl_prop(const World& w, const Augmenter& a, std::size_t n_codes,
                              std::uint64_t budget = 1'000'000);

struct RegimeSpec {
  enum class Kind { Supervised, SingleDom, IntraDom, ApproxDA, Standard };
  Kind kind = Kind::Supervised;
  std::size_t domain = 0;  // SingleDom
  double mix = 0.1;        // ApproxDA: weight of the Supervised component
  std::optional<CondKernel> noise;  // Standard

  static RegimeSpec supervised() { return {}; }
  static RegimeSpec single_dom(std::size_t d) { return {Kind::SingleDom, d, 0.1, {}}; }
  static RegimeSpec intra_dom() { return {Kind::IntraDom, 0, 0.1, {}}; }
  static RegimeSpec approx_da(double mix = 0.1) { return {Kind::ApproxDA, 0, mix, {}}; }
  static RegimeSpec standard(CondKernel noise) { return {Kind::Standard, 0, 0.1, std::move(noise)}; }
  std::string name() const;
};

// Throws HypothesisError naming the input when some row would be empty, and
// when a Standard noise kernel moves mass across domains.
Augmenter build_regime_augmenter(const World& w, const RegimeSpec& r);

// Keeps x with probability `keep`, otherwise moves uniformly to another input
// sharing a domain with x.
CondKernel within_domain_noise_kernel(const World& w, double keep);

void to_json(nlohmann::json& j, const RegimeSpec& r);
void from_json(const nlohmann::json& j, RegimeSpec& r);
void to_json(nlohmann::json& j, const SslPropReport& r);

}  // namespace idg
