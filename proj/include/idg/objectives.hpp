#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "idg/augmentation.hpp"
#include "idg/autodiff.hpp"
#include "idg/data.hpp"

namespace idg {

inline constexpr double kDefaultTemperature = 0.05;

// One tanh hidden layer. The deterministic head is l2-normalized; the
// stochastic head emits a Gaussian mean and log-variance instead.
struct MlpSpec {
  std::size_t in = 0;
  std::size_t hidden = 32;
  std::size_t out = 32;
  bool stochastic = false;
};

struct EncoderOutput {
  ad::Var z;                     // embedding used by critics and probes
  std::optional<ad::Var> mean;   // stochastic head only
  std::optional<ad::Var> logvar;
};

// Parameters "W1","b1","W2","b2" (+ "Wv","bv" when stochastic).
ad::ParamSet init_mlp(const MlpSpec& spec, Rng& rng);
// `p` holds one leaf per parameter in ParamSet order; `eps` supplies the
// reparameterization noise for stochastic heads (b x out).
EncoderOutput mlp_forward(const MlpSpec& spec, const std::vector<ad::Var>& p, const ad::Var& x,
                          const ad::Tensor* eps = nullptr);
// Deterministic embedding (the normalized mean for stochastic heads).
ad::Tensor embed(const MlpSpec& spec, const ad::ParamSet& params, const ad::Tensor& x);

struct Batch {
  ad::Tensor x;
  ad::Tensor a;  // positive augmentation of each row of x
  std::vector<std::size_t> domain;
  std::optional<std::vector<std::size_t>> label;

  std::size_t size() const { return x.rows; }
};

struct LossParts {
  ad::Var total;
  ad::Var aug;                  // InfoNCE (or the supervised term in train())
  std::optional<ad::Var> supp;  // bottleneck term before lambda
  double bound = 0.0;           // log(n+1) - L_aug for InfoNCE
  std::size_t empty_pools = 0;  // rows whose cross-domain pool was empty
};

// InfoNCE from a score matrix S (row i = anchor, column j = candidate, the
// positive on the diagonal).
LossParts infonce_from_scores(const ad::Var& scores);
// Tied critic: S_ij = <z_i, za_j> / tau on normalized embeddings.
LossParts infonce_loss(const ad::Var& z, const ad::Var& za, double tau = kDefaultTemperature);

// CAD support term on normalized embeddings z of the batch inputs.
// Pools: denominator j != i; numerator weighted by 1 - p_hat(D_i | X_j) from
// within-batch counts over identical inputs. With `labels`, both pools are
// restricted to same-label samples (conditional CAD). Rows with an empty
// numerator pool contribute 0 and are counted in `empty_pools`.
struct SupportTerm {
  ad::Var value;
  std::size_t empty_pools = 0;
};
SupportTerm cad_support(const ad::Var& z, const ad::Tensor& x,
                        const std::vector<std::size_t>& domain, double tau,
                        const std::vector<std::size_t>* labels = nullptr);

LossParts cad_loss(const ad::Var& z, const ad::Var& za, const Batch& b, double lambda,
                   double tau = kDefaultTemperature);
// Throws HypothesisError when the batch has no labels.
LossParts ccad_loss(const ad::Var& z, const ad::Var& za, const Batch& b, double lambda,
                    double tau = kDefaultTemperature);
// mean_i -sum_k log q(z_ik + u_ik) with a factorized logistic model of bin
// width 1; `noise` holds u ~ U(-0.5, 0.5) (or zeros at evaluation).
ad::Var ent_bits(const ad::Var& z, const ad::Tensor& noise, const ad::Var& mu,
                 const ad::Var& log_scale);
LossParts ent_loss(const ad::Var& z, const ad::Var& za, const ad::Tensor& noise,
                   const ad::Var& mu, const ad::Var& log_scale, double lambda,
                   double tau = kDefaultTemperature);
// mean_i sum_k KL(N(mean, e^logvar) || N(prior_mean, e^prior_logvar)).
ad::Var gaussian_rate(const ad::Var& mean, const ad::Var& logvar, const ad::Var& prior_mean,
                      const ad::Var& prior_logvar);
LossParts mi_loss(const ad::Var& z, const ad::Var& za, const ad::Var& mean, const ad::Var& logvar,
                  const ad::Var& prior_mean, const ad::Var& prior_logvar, double lambda,
                  double tau = kDefaultTemperature);

// q(d | z_i) = sum_j softmax_j(scores_ij) p_hat(d | x_j): the domain posterior
// implied by a critic over a pool of inputs with count estimates p_hat.
std::vector<std::vector<double>> cad_domain_posterior(
    const ad::Tensor& scores, const std::vector<std::vector<double>>& pool_domain_posterior);

enum class Objective { CrossEntropy, InfoNCE };
enum class Bottleneck { None, CAD, CondCAD, Ent, MI };

std::string to_string(Objective o);
std::string to_string(Bottleneck b);
Objective objective_from_string(const std::string& s);
Bottleneck bottleneck_from_string(const std::string& s);

struct TrainConfig {
  Objective objective = Objective::CrossEntropy;
  Bottleneck bottleneck = Bottleneck::None;
  double lambda = 0.0;
  double tau = kDefaultTemperature;
  RegimeSpec regime = RegimeSpec::supervised();
  double standard_noise = 0.1;  // sd of the Gaussian jitter for the Standard regime
  std::size_t hidden = 32;
  std::size_t out = 32;
  bool stochastic = false;
  double lr = 3e-3;
  std::size_t epochs = 100;
  std::size_t batch_per_domain = 16;
  bool cosine = true;
  std::uint64_t seed = 0;
  std::vector<std::size_t> train_domains;  // empty: every domain
  // false hides labels from the objective: only InfoNCE with the Standard
  // regime and a label-free bottleneck remain valid.
  bool use_labels = true;
};

struct HistoryRow {
  std::size_t epoch = 0;
  double l_aug = 0.0;
  double l_supp = 0.0;
  double total = 0.0;
};

struct TrainResult {
  MlpSpec spec;
  ad::ParamSet params;  // encoder, then head / entropy model / prior
  std::vector<HistoryRow> history;
  std::size_t empty_pools = 0;
};

// Throws HypothesisError for incompatible settings (Ent with a stochastic
// encoder, MI without one, conditional CAD or cross-entropy without labels).
// Rows with an empty CAD pool are counted in TrainResult::empty_pools and
// reported once per run on stderr.
void validate_config(const TrainConfig& c, const EmbeddingDataset& data);
TrainResult train(const EmbeddingDataset& data, const TrainConfig& c);
std::string history_csv(const std::vector<HistoryRow>& h);

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const MlpSpec& s);
void from_json(const nlohmann::json& j, MlpSpec& s);

}  // namespace idg
