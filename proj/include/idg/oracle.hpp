#pragma once

#include <cstdint>
#include <iterator>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "idg/encoder_risk.hpp"
#include "idg/world.hpp"

namespace idg {

// Absolute tolerance for comparing extended-real risks; +inf equals only +inf.
inline constexpr double kRiskTol = 1e-9;
bool risks_equal(double a, double b, double tol = kRiskTol);

inline constexpr std::uint64_t kDefaultEnumerationBudget = 1'000'000;

// All deterministic encoders X -> Z in lexicographic order of their code maps
// (input 0 is the most significant digit).
class DetEncoderSpace {
 public:
  DetEncoderSpace(std::size_t n_inputs, std::size_t n_codes,
                  std::uint64_t budget = kDefaultEnumerationBudget);

  std::uint64_t size() const { return size_; }
  std::size_t n_inputs() const { return n_inputs_; }
  std::size_t n_codes() const { return n_codes_; }
  std::vector<std::size_t> map_at(std::uint64_t id) const;
  Encoder at(std::uint64_t id) const { return Encoder::from_map(map_at(id), n_codes_); }
  std::uint64_t id_of(const std::vector<std::size_t>& map) const;

  class iterator {
   public:
    using iterator_category = std::input_iterator_tag;
    using value_type = Encoder;
    using difference_type = std::ptrdiff_t;

    iterator(const DetEncoderSpace* s, std::uint64_t id) : space_(s), id_(id) {}
    Encoder operator*() const { return space_->at(id_); }
    iterator& operator++() {
      ++id_;
      return *this;
    }
    bool operator==(const iterator& o) const { return id_ == o.id_; }

   private:
    const DetEncoderSpace* space_;
    std::uint64_t id_;
  };
  iterator begin() const { return {this, 0}; }
  iterator end() const { return {this, size_}; }

 private:
  std::size_t n_inputs_;
  std::size_t n_codes_;
  std::uint64_t size_;
};

// Throws BudgetExceeded when n_codes^n_inputs exceeds the budget.
DetEncoderSpace enumerate_det_encoders(std::size_t n_inputs, std::size_t n_codes,
                                       std::uint64_t budget = kDefaultEnumerationBudget);

struct OracleOptions {
  std::uint64_t budget = kDefaultEnumerationBudget;
  unsigned jobs = 1;
};

struct TheoremReport {
  bool applicable = true;
  std::string reason;
  std::uint64_t n_encoders = 0;
  double min_idg = 0.0;
  double bayes_risk_x = 0.0;
  std::vector<std::uint64_t> set_idg_optimal;
  std::vector<std::uint64_t> set_char_optimal;  // risk-minimal and support-matched
  bool equal = false;
};

// Exhaustive check of the optimality characterization over deterministic
// encoders with n_codes codes. Worlds failing the assumptions (or with too few
// codes for the Bayes image) come back with applicable = false.
TheoremReport verify_theorem1(const World& w, std::size_t n_codes, const OracleOptions& opt = {});

// One code per Bayes-image element. Throws HypothesisError when n_codes < |A*|.
Encoder construct_optimal_encoder(const World& w, std::size_t n_codes);

struct AdversarialTarget {
  DomainSlice target;
  std::size_t x_star = 0;
  std::size_t label_at_x_star = 0;
  double delta = 0.0;
};

struct NoFreeLunchRecord {
  AdversarialTarget adversarial;
  std::size_t constant_label = 0;
  double q = 0.0;            // P(Z in the non-constant region | x_star)
  double delta_upper = 0.0;  // q / (1 + q)
  double encoder_sup_risk = 0.0;
  double constant_sup_risk = 0.0;
  bool strictly_worse = false;
};

// 0-1 loss. Builds the bad target domain that makes `encoder` lose to a
// constant representation. Throws HypothesisError when a hypothesis fails
// (no unique constant prediction, bad good_target, no qualifying input, or
// delta outside (0, q/(1+q))).
NoFreeLunchRecord no_free_lunch_construct(const DomainSlice& source, const Encoder& encoder,
                                          const DomainSlice& good_target, double delta);

struct WorstRepresentationRecord {
  AdversarialTarget adversarial;
  double sup_risk = 0.0;     // exact sup over source minimizers on the target
  double lower_bound = 0.0;  // 1 - delta
  double epsilon = 0.0;
};

// 0-1 loss. Requires an input outside the source support whose codes avoid
// the source code support, and 0 < delta < epsilon.
WorstRepresentationRecord worst_representation_construct(const DomainSlice& source,
                                                         const Encoder& encoder, double epsilon,
                                                         double delta);

struct StochasticSamplerOptions {
  double sparse_prob = 0.3;          // rows on one or two random codes
  double near_deterministic_prob = 0.2;  // row max >= 0.999
  double class_respecting_prob = 0.0;    // rows dense on the codes of the input's class
  std::vector<std::size_t> input_classes;  // required when class_respecting_prob > 0
};

std::vector<Encoder> sample_stochastic_encoders(std::uint64_t seed, std::size_t n,
                                                std::size_t n_inputs, std::size_t n_codes,
                                                const StochasticSamplerOptions& opt = {});

struct StochasticCheck {
  bool risk_minimal = false;
  bool support_match = false;
  double cross_pair_mass = 0.0;  // target mass landing on source-unseen codes
  double idg = 0.0;
  double bayes_risk_x = 0.0;
  bool sufficiency_ok = true;  // risk-minimal and matched => idg == R[Y|X]
  bool necessity_ok = true;    // mismatch with cross mass => idg > R[Y|X]
};

StochasticCheck check_stochastic_encoder(const World& w, const Encoder& e);

void to_json(nlohmann::json& j, const TheoremReport& r);
void to_json(nlohmann::json& j, const AdversarialTarget& t);
void to_json(nlohmann::json& j, const NoFreeLunchRecord& r);
void to_json(nlohmann::json& j, const WorstRepresentationRecord& r);

}  // namespace idg
