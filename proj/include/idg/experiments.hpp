#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "idg/augmentation.hpp"
#include "idg/data.hpp"
#include "idg/encoder_risk.hpp"
#include "idg/objectives.hpp"

namespace idg {

// The shifted-support fixture behind the directional experiments: 4 disjoint
// domains, 7 labels, generated once with kFixtureSeed and used as the
// population (every row trains the encoder and the probes).
SyntheticSpec fixture_spec();
inline constexpr std::uint64_t kFixtureSeed = 1;
EmbeddingDataset fixture_data();

EmbeddingDataset embed_dataset(const EmbeddingDataset& data, const TrainResult& model);

// One configuration evaluated over several training seeds. Each seed trains
// an encoder, embeds every row and runs the pair grid with the same seed.
struct Arm {
  std::string name;
  TrainConfig config;
  // Restrict the pair grid (empty: all pairs).
  std::vector<std::size_t> sources, targets;
};

struct ArmResult {
  std::string name;
  TrainConfig config;
  std::vector<std::uint64_t> seeds;
  std::vector<double> target_ll, source_ll, target_acc, source_acc;  // per seed, off-diagonal means
  MeanSe target_ll_summary() const { return mean_se(target_ll); }
  MeanSe source_ll_summary() const { return mean_se(source_ll); }
};

ArmResult run_arm(const EmbeddingDataset& data, const Arm& arm, const std::vector<std::uint64_t>& seeds,
                  const PairOptions& probe);

std::vector<ArmResult> lambda_sweep(const EmbeddingDataset& data, const TrainConfig& base,
                                    const std::vector<double>& lambdas,
                                    const std::vector<std::uint64_t>& seeds, const PairOptions& probe);

// Per target domain t: an encoder trained without t against one trained on
// every domain, both scored on the pairs (s, t), s != t. Per-seed values
// average over t.
struct TargetAccessResult {
  std::vector<double> all_domains, target_excluded;
};
TargetAccessResult target_access(const EmbeddingDataset& data, const TrainConfig& base,
                                 const std::vector<std::uint64_t>& seeds, const PairOptions& probe);

// InfoNCE bound log(n+1) - L_aug for one batch of n+1 joint draws of
// (Z, A) on a discrete world, scored by the exact critic log p(z_i | a_j).
double infonce_bound_sample(const World& w, const Augmenter& a, const Encoder& e, std::size_t n, Rng& rng);

// q(D|Z) implied by CAD with the critic set to the exact log p(x, z), over
// the distinct inputs of n draws of (D, X) with count estimates p_hat(D|X),
// compared with the exact p(D|Z) in total variation.
struct CadFidelity {
  double mean_tv = 0.0;  // weighted by p(z)
  double max_tv = 0.0;   // over codes with p(z) > 0
};
CadFidelity cad_fidelity(const World& w, const Encoder& e, std::size_t n, Rng& rng);

// name,objective,bottleneck,lambda,regime,seeds,target_ll,target_ll_se,source_ll,source_ll_se
std::string arms_csv(const std::vector<ArmResult>& rows);
void to_json(nlohmann::json& j, const ArmResult& r);

}  // namespace idg
