#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "idg/finite_prob.hpp"

namespace idg {

// L-infinity tolerance under which two distribution-valued actions are equal.
inline constexpr double kActionTol = 1e-9;
// Absolute tolerance on expected losses when deciding ties under 0-1 loss.
inline constexpr double kTieTol = 1e-12;

enum class LossKind { ZeroOne, Log, ClampedLog };

// Loss together with its implied action space:
//   ZeroOne    -> labels (stored as one-hot vectors)
//   Log        -> the label simplex
//   ClampedLog -> label distributions with every entry >= epsilon
class LossSpec {
 public:
  LossSpec() = default;  // zero_one
  static LossSpec zero_one() { return LossSpec(LossKind::ZeroOne, 0.0); }
  static LossSpec log() { return LossSpec(LossKind::Log, 0.0); }
  static LossSpec clamped_log(double epsilon = 1e-3);

  LossKind kind() const { return kind_; }
  double epsilon() const { return epsilon_; }
  std::string name() const;

  bool operator==(const LossSpec&) const = default;

 private:
  LossSpec(LossKind kind, double epsilon) : kind_(kind), epsilon_(epsilon) {}
  LossKind kind_ = LossKind::ZeroOne;
  double epsilon_ = 0.0;
};

// A prediction: one-hot for ZeroOne, a label distribution otherwise.
struct Action {
  std::vector<double> q;

  static Action label(std::size_t n_labels, std::size_t y);
  // Index of the largest entry; for ZeroOne actions this is the label.
  std::size_t argmax() const;
  bool same_as(const Action& other, double tol = kActionTol) const;
};

// E_{y~p}[loss(y, a)], +inf when log-loss meets a zero-probability action.
double expected_loss(const LossSpec& loss, std::span<const double> p, const Action& a);

// The minimizers of expected loss under p. A single action except for ZeroOne
// ties (within kTieTol), where every tied label is returned.
std::vector<Action> optimal_actions(const LossSpec& loss, std::span<const double> p);

// min / sup over the whole action space of the expected loss under p.
double best_expected_loss(const LossSpec& loss, std::span<const double> p);
double worst_expected_loss(const LossSpec& loss, std::span<const double> p);

// argmin_q -sum p log q over {q : q_y >= eps, sum q = 1}.
std::vector<double> clamp_project(std::span<const double> p, double eps);

// Joint law of (D, X, Y) with a source/target pair distribution.
class World {
 public:
  World() = default;
  // Covariate-shift form: p(Y|X) shared by every domain.
  World(FiniteDist p_d, CondKernel p_x_given_d, CondKernel p_y_given_x, JointTable pair_dist,
        LossSpec loss);
  // Generalized form: one label kernel per domain. The shared p(Y|X) is the
  // mixture sum_d p(d|x) p(Y|x,d).
  World(FiniteDist p_d, CondKernel p_x_given_d, std::vector<CondKernel> p_y_given_xd,
        JointTable pair_dist, LossSpec loss);

  std::size_t n_domains() const { return p_d_.size(); }
  std::size_t n_inputs() const { return p_x_given_d_.n_out(); }
  std::size_t n_labels() const { return p_y_given_x_.n_out(); }

  const FiniteDist& p_d() const { return p_d_; }
  const CondKernel& p_x_given_d() const { return p_x_given_d_; }
  const CondKernel& p_y_given_x() const { return p_y_given_x_; }
  const std::optional<std::vector<CondKernel>>& p_y_given_xd() const { return p_y_given_xd_; }
  const JointTable& pair_dist() const { return pair_dist_; }
  const LossSpec& loss() const { return loss_; }

  FiniteDist p_x() const;
  FiniteDist p_x_given(std::optional<std::size_t> domain) const;
  // p(Y | x, d), falling back to the shared kernel in covariate-shift form.
  std::span<const double> label_conditional(std::size_t x, std::optional<std::size_t> d) const;
  // p(D = d, X = x, Y = y).
  double joint(std::size_t d, std::size_t x, std::size_t y) const;

  World with_loss(LossSpec loss) const;

 private:
  void check_shapes() const;

  FiniteDist p_d_;
  CondKernel p_x_given_d_;
  CondKernel p_y_given_x_;
  std::optional<std::vector<CondKernel>> p_y_given_xd_;
  JointTable pair_dist_;
  LossSpec loss_ = LossSpec::zero_one();
};

struct AssumptionReport {
  bool unique_optima = true;          // (a)
  bool generalized_covariate_shift = true;  // (b)
  bool constant_bayes_image = true;   // (c)
  bool nontrivial_image = true;       // (d) |A*| >= 2
  bool pair_full_support = true;      // (e)
  bool domain_full_support = true;
  std::vector<std::string> messages;

  bool all_pass() const {
    return unique_optima && generalized_covariate_shift && constant_bayes_image &&
           nontrivial_image && pair_full_support && domain_full_support;
  }
};

AssumptionReport validate_world(const World& w);

struct BayesPredictor {
  std::vector<Action> actions;  // one per input
};

// Throws AssumptionViolation on a 0-1 argmax tie.
BayesPredictor bayes_predictor(const World& w);

// Expected loss of the Bayes predictor under p(X,Y|domain), or under the
// marginal over p_D when no domain is given.
double bayes_risk_from_x(const World& w, std::optional<std::size_t> domain = std::nullopt);

// Distinct Bayes actions over support(p(X|domain)), in first-occurrence order.
std::vector<Action> bayes_image(const World& w, std::optional<std::size_t> domain = std::nullopt);
// Same set given a precomputed predictor.
std::vector<Action> bayes_image(const World& w, const BayesPredictor& f,
                                std::optional<std::size_t> domain = std::nullopt);
// Index of `a` within `image`, or nullopt.
std::optional<std::size_t> find_action(const std::vector<Action>& image, const Action& a);

struct WorldSizes {
  std::size_t n_domains = 2;
  std::size_t n_inputs = 4;
  std::size_t n_labels = 2;
};

struct WorldConstraints {
  LossSpec loss = LossSpec::zero_one();
  // Upper bound on |A*|; defaults to min(|Y|, |X|) for ZeroOne and |X| otherwise.
  std::optional<std::size_t> max_image;
  // Place one Bayes action in a single domain so clause (c) fails.
  bool adversarial = false;
  // Emit per-domain label kernels that differ but share their argmax.
  bool per_domain_labels = false;
  // Probability that an input enters a given domain's support.
  double support_density = 0.5;
};

// Deterministic given seed. Throws AssumptionViolation when no valid world is
// found within 10^4 rejections.
World random_world(std::uint64_t seed, const WorldSizes& sizes, const WorldConstraints& c = {});

void to_json(nlohmann::json& j, const LossSpec& l);
void from_json(const nlohmann::json& j, LossSpec& l);
void to_json(nlohmann::json& j, const World& w);
World world_from_json(const nlohmann::json& j);
void to_json(nlohmann::json& j, const AssumptionReport& r);

}  // namespace idg
