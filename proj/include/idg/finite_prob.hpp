#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace idg {

// Probabilities at or below this are treated as zero when computing supports.
inline constexpr double kSupportTol = 1e-12;
// Constructors reject mass whose total deviates from one by more than this.
inline constexpr double kMassTol = 1e-9;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Probability vector over outcomes 0..n-1.
class FiniteDist {
 public:
  FiniteDist() = default;
  // Throws InvalidDistribution on negative entries or total mass off by more
  // than kMassTol; otherwise renormalizes so the sum is exact to rounding.
  explicit FiniteDist(std::vector<double> probs);

  static FiniteDist uniform(std::size_t n);
  static FiniteDist point_mass(std::size_t n, std::size_t at);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const { return probs_; }
  const std::vector<double>& vec() const { return probs_; }

  bool operator==(const FiniteDist&) const = default;

 private:
  std::vector<double> probs_;
};

// Row-stochastic matrix [n_in x n_out]; row i is p(. | i).
class CondKernel {
 public:
  CondKernel() = default;
  CondKernel(std::size_t n_in, std::size_t n_out, std::vector<double> row_major);
  explicit CondKernel(const std::vector<std::vector<double>>& rows);
  explicit CondKernel(const std::vector<FiniteDist>& rows);

  static CondKernel identity(std::size_t n);
  // Every row a point mass at `map[i]`.
  static CondKernel deterministic(const std::vector<std::size_t>& map, std::size_t n_out);

  std::size_t n_in() const { return n_in_; }
  std::size_t n_out() const { return n_out_; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * n_out_ + j]; }
  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * n_out_, n_out_};
  }
  FiniteDist row_dist(std::size_t i) const;
  const std::vector<double>& data() const { return data_; }

  bool operator==(const CondKernel&) const = default;

 private:
  std::size_t n_in_ = 0;
  std::size_t n_out_ = 0;
  std::vector<double> data_;
};

// Dense nonnegative mass over the product of at most four finite index sets.
class JointTable {
 public:
  static constexpr std::size_t kMaxAxes = 4;

  JointTable() = default;
  JointTable(std::vector<std::size_t> shape, std::vector<double> mass);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return mass_.size(); }
  const std::vector<double>& mass() const { return mass_; }
  double at(std::span<const std::size_t> index) const;
  double at(std::initializer_list<std::size_t> index) const {
    return at(std::span<const std::size_t>(index.begin(), index.size()));
  }

  // Marginal over a single axis.
  FiniteDist marginal(std::size_t axis) const;
  // Marginal over the listed axes, kept in the listed order.
  JointTable marginal(const std::vector<std::size_t>& axes) const;
  FiniteDist flatten() const { return FiniteDist(mass_); }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> mass_;
};

std::vector<std::size_t> support(const FiniteDist& d, double tol = kSupportTol);
std::vector<std::size_t> support(std::span<const double> probs, double tol = kSupportTol);

// Shannon entropy in nats with 0 log 0 = 0.
double entropy(const FiniteDist& d);
double entropy(std::span<const double> probs);
double entropy(const JointTable& j);

// KL(p || q) in nats; +inf when p puts mass where q has none.
double kl_divergence(const FiniteDist& p, const FiniteDist& q);

// I(axis0; axis1) = H(axis0) + H(axis1) - H(joint) for a two-axis table.
double mutual_information(const JointTable& j);

FiniteDist pushforward(const CondKernel& k, const FiniteDist& d);

// p(a, b) = d[a] k[a, b].
JointTable joint_from(const FiniteDist& d, const CondKernel& k);
// Independent product of two marginals.
JointTable product(const FiniteDist& a, const FiniteDist& b);

// Distribution of the remaining axes (flattened row-major) given axis == value.
// Throws ZeroProbabilityEvent when the conditioning event has no mass.
FiniteDist condition(const JointTable& j, std::size_t axis, std::size_t value);

// L-infinity distance between equally sized vectors.
double linf_distance(std::span<const double> a, std::span<const double> b);

void to_json(nlohmann::json& j, const FiniteDist& d);
void from_json(const nlohmann::json& j, FiniteDist& d);
void to_json(nlohmann::json& j, const CondKernel& k);
void from_json(const nlohmann::json& j, CondKernel& k);
void to_json(nlohmann::json& j, const JointTable& t);
void from_json(const nlohmann::json& j, JointTable& t);

// Extended reals serialize as numbers, with +inf as the string "inf".
nlohmann::json extended_to_json(double v);
double extended_from_json(const nlohmann::json& j);

}  // namespace idg
