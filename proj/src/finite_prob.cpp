#include "idg/finite_prob.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "idg/errors.hpp"

namespace idg {
namespace {

std::vector<double> validated(std::vector<double> probs, const char* what) {
  if (probs.empty()) throw InvalidDistribution(std::string(what) + ": empty distribution");
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw InvalidDistribution(std::string(what) + ": negative or non-finite mass " +
                                std::to_string(p));
    }
    total += p;
  }
  if (std::abs(total - 1.0) > kMassTol) {
    throw InvalidDistribution(std::string(what) + ": mass sums to " + std::to_string(total));
  }
  // Leave rounding-level drift alone so that serialization round-trips exactly.
  if (std::abs(total - 1.0) > 1e-14)
    for (double& p : probs) p /= total;
  return probs;
}

double xlogx(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

}  // namespace

FiniteDist::FiniteDist(std::vector<double> probs)
    : probs_(validated(std::move(probs), "FiniteDist")) {}

FiniteDist FiniteDist::uniform(std::size_t n) {
  if (n == 0) throw InvalidDistribution("uniform over zero outcomes");
  return FiniteDist(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

FiniteDist FiniteDist::point_mass(std::size_t n, std::size_t at) {
  if (at >= n) throw DimensionError("point mass outside the outcome range");
  std::vector<double> p(n, 0.0);
  p[at] = 1.0;
  return FiniteDist(std::move(p));
}

CondKernel::CondKernel(std::size_t n_in, std::size_t n_out, std::vector<double> row_major)
    : n_in_(n_in), n_out_(n_out), data_(std::move(row_major)) {
  if (data_.size() != n_in * n_out) throw DimensionError("CondKernel: data size mismatch");
  if (n_in == 0 || n_out == 0) throw DimensionError("CondKernel: empty dimension");
  for (std::size_t i = 0; i < n_in_; ++i) {
    std::vector<double> r(data_.begin() + i * n_out_, data_.begin() + (i + 1) * n_out_);
    r = validated(std::move(r), ("CondKernel row " + std::to_string(i)).c_str());
    std::copy(r.begin(), r.end(), data_.begin() + i * n_out_);
  }
}

CondKernel::CondKernel(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw DimensionError("CondKernel: no rows");
  const std::size_t n_out = rows.front().size();
  std::vector<double> flat;
  flat.reserve(rows.size() * n_out);
  for (const auto& r : rows) {
    if (r.size() != n_out) throw DimensionError("CondKernel: ragged rows");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  *this = CondKernel(rows.size(), n_out, std::move(flat));
}

CondKernel::CondKernel(const std::vector<FiniteDist>& rows) {
  std::vector<std::vector<double>> raw;
  raw.reserve(rows.size());
  for (const auto& r : rows) raw.push_back(r.vec());
  *this = CondKernel(raw);
}

CondKernel CondKernel::identity(std::size_t n) {
  std::vector<std::size_t> map(n);
  std::iota(map.begin(), map.end(), std::size_t{0});
  return deterministic(map, n);
}

CondKernel CondKernel::deterministic(const std::vector<std::size_t>& map, std::size_t n_out) {
  std::vector<double> flat(map.size() * n_out, 0.0);
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (map[i] >= n_out) throw DimensionError("deterministic kernel: code out of range");
    flat[i * n_out + map[i]] = 1.0;
  }
  return CondKernel(map.size(), n_out, std::move(flat));
}

FiniteDist CondKernel::row_dist(std::size_t i) const {
  auto r = row(i);
  return FiniteDist(std::vector<double>(r.begin(), r.end()));
}

JointTable::JointTable(std::vector<std::size_t> shape, std::vector<double> mass)
    : shape_(std::move(shape)), mass_(std::move(mass)) {
  if (shape_.empty() || shape_.size() > kMaxAxes) {
    throw DimensionError("JointTable: rank must be between 1 and 4");
  }
  const std::size_t n = std::accumulate(shape_.begin(), shape_.end(), std::size_t{1},
                                        std::multiplies<>());
  if (n != mass_.size()) throw DimensionError("JointTable: mass size does not match shape");
  mass_ = validated(std::move(mass_), "JointTable");
}

double JointTable::at(std::span<const std::size_t> index) const {
  if (index.size() != shape_.size()) throw DimensionError("JointTable::at: wrong rank");
  std::size_t flat = 0;
  for (std::size_t a = 0; a < shape_.size(); ++a) {
    if (index[a] >= shape_[a]) throw DimensionError("JointTable::at: index out of range");
    flat = flat * shape_[a] + index[a];
  }
  return mass_[flat];
}

FiniteDist JointTable::marginal(std::size_t axis) const {
  return marginal(std::vector<std::size_t>{axis}).flatten();
}

JointTable JointTable::marginal(const std::vector<std::size_t>& axes) const {
  for (auto a : axes) {
    if (a >= shape_.size()) throw DimensionError("JointTable::marginal: bad axis");
  }
  std::vector<std::size_t> out_shape;
  for (auto a : axes) out_shape.push_back(shape_[a]);
  const std::size_t n_out = std::accumulate(out_shape.begin(), out_shape.end(), std::size_t{1},
                                            std::multiplies<>());
  std::vector<double> out(n_out, 0.0);
  std::vector<std::size_t> idx(shape_.size(), 0);
  for (std::size_t flat = 0; flat < mass_.size(); ++flat) {
    std::size_t o = 0;
    for (std::size_t k = 0; k < axes.size(); ++k) o = o * out_shape[k] + idx[axes[k]];
    out[o] += mass_[flat];
    for (std::size_t a = shape_.size(); a-- > 0;) {
      if (++idx[a] < shape_[a]) break;
      idx[a] = 0;
    }
  }
  return JointTable(std::move(out_shape), std::move(out));
}

std::vector<std::size_t> support(std::span<const double> probs, double tol) {
  if (tol < 0.0) throw std::invalid_argument("support: negative tolerance");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > tol) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> support(const FiniteDist& d, double tol) {
  return support(d.probs(), tol);
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) h -= xlogx(p);
  return std::max(h, 0.0);
}

double entropy(const FiniteDist& d) { return entropy(d.probs()); }
double entropy(const JointTable& j) { return entropy(std::span<const double>(j.mass())); }

double kl_divergence(const FiniteDist& p, const FiniteDist& q) {
  if (p.size() != q.size()) throw DimensionError("kl_divergence: size mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return kInf;
    kl += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return std::max(kl, 0.0);
}

double mutual_information(const JointTable& j) {
  if (j.rank() != 2) throw DimensionError("mutual_information: expects a two-axis table");
  const double mi = entropy(j.marginal(0)) + entropy(j.marginal(1)) - entropy(j);
  return std::max(mi, 0.0);
}

FiniteDist pushforward(const CondKernel& k, const FiniteDist& d) {
  if (k.n_in() != d.size()) throw DimensionError("pushforward: kernel/distribution mismatch");
  std::vector<double> out(k.n_out(), 0.0);
  for (std::size_t x = 0; x < k.n_in(); ++x) {
    if (d[x] == 0.0) continue;
    auto r = k.row(x);
    for (std::size_t z = 0; z < k.n_out(); ++z) out[z] += d[x] * r[z];
  }
  return FiniteDist(std::move(out));
}

JointTable joint_from(const FiniteDist& d, const CondKernel& k) {
  if (k.n_in() != d.size()) throw DimensionError("joint_from: kernel/distribution mismatch");
  std::vector<double> mass(k.n_in() * k.n_out());
  for (std::size_t a = 0; a < k.n_in(); ++a) {
    for (std::size_t b = 0; b < k.n_out(); ++b) mass[a * k.n_out() + b] = d[a] * k(a, b);
  }
  return JointTable({k.n_in(), k.n_out()}, std::move(mass));
}

JointTable product(const FiniteDist& a, const FiniteDist& b) {
  std::vector<double> mass(a.size() * b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) mass[i * b.size() + j] = a[i] * b[j];
  }
  return JointTable({a.size(), b.size()}, std::move(mass));
}

FiniteDist condition(const JointTable& j, std::size_t axis, std::size_t value) {
  const auto& shape = j.shape();
  if (axis >= shape.size()) throw DimensionError("condition: bad axis");
  if (value >= shape[axis]) throw DimensionError("condition: value out of range");
  if (shape.size() == 1) throw DimensionError("condition: no remaining axes");
  std::vector<double> out;
  std::vector<std::size_t> idx(shape.size(), 0);
  const auto& mass = j.mass();
  for (std::size_t flat = 0; flat < mass.size(); ++flat) {
    if (idx[axis] == value) out.push_back(mass[flat]);
    for (std::size_t a = shape.size(); a-- > 0;) {
      if (++idx[a] < shape[a]) break;
      idx[a] = 0;
    }
  }
  const double total = std::accumulate(out.begin(), out.end(), 0.0);
  if (total <= kSupportTol) {
    throw ZeroProbabilityEvent("condition: event axis " + std::to_string(axis) + " = " +
                               std::to_string(value) + " has zero probability");
  }
  for (double& v : out) v /= total;
  return FiniteDist(std::move(out));
}

double linf_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("linf_distance: size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void to_json(nlohmann::json& j, const FiniteDist& d) { j = {{"probs", d.vec()}}; }

void from_json(const nlohmann::json& j, FiniteDist& d) {
  d = FiniteDist(j.at("probs").get<std::vector<double>>());
}

void to_json(nlohmann::json& j, const CondKernel& k) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < k.n_in(); ++i) {
    auto r = k.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  j = {{"rows", rows}};
}

void from_json(const nlohmann::json& j, CondKernel& k) {
  k = CondKernel(j.at("rows").get<std::vector<std::vector<double>>>());
}

void to_json(nlohmann::json& j, const JointTable& t) {
  j = {{"shape", t.shape()}, {"mass", t.mass()}};
}

void from_json(const nlohmann::json& j, JointTable& t) {
  if (j.contains("rows")) {
    const auto rows = j.at("rows").get<std::vector<std::vector<double>>>();
    if (rows.empty()) throw DimensionError("JointTable: no rows");
    std::vector<double> flat;
    for (const auto& r : rows) {
      if (r.size() != rows.front().size()) throw DimensionError("JointTable: ragged rows");
      flat.insert(flat.end(), r.begin(), r.end());
    }
    t = JointTable({rows.size(), rows.front().size()}, std::move(flat));
    return;
  }
  t = JointTable(j.at("shape").get<std::vector<std::size_t>>(),
                 j.at("mass").get<std::vector<double>>());
}

nlohmann::json extended_to_json(double v) {
  if (std::isinf(v) && v > 0) return "inf";
  return v;
}

double extended_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") return kInf;
    throw ParseError("expected a number or \"inf\"");
  }
  return j.get<double>();
}

}  // namespace idg
