#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "idg/autodiff.hpp"
#include "idg/rng.hpp"

namespace idg {

enum class Split { Train, Val };

// Rows of (domain, label, split, features).
class EmbeddingDataset {
 public:
  EmbeddingDataset() = default;
  explicit EmbeddingDataset(std::size_t width) : width_(width) {}

  void add(std::size_t domain, std::size_t label, Split split, const std::vector<double>& f);

  std::size_t size() const { return domain_.size(); }
  std::size_t width() const { return width_; }
  std::size_t n_domains() const { return n_domains_; }
  std::size_t n_labels() const { return n_labels_; }
  std::size_t domain(std::size_t i) const { return domain_[i]; }
  std::size_t label(std::size_t i) const { return label_[i]; }
  Split split(std::size_t i) const { return split_[i]; }
  const double* row(std::size_t i) const { return features_.data() + i * width_; }

  // Indices of rows with the given domain (and split, when given).
  std::vector<std::size_t> rows_of(std::size_t domain) const;
  std::vector<std::size_t> rows_of(std::size_t domain, Split split) const;
  ad::Tensor features(const std::vector<std::size_t>& rows) const;
  std::vector<std::size_t> labels(const std::vector<std::size_t>& rows) const;
  // Same rows with features replaced (e.g. by an encoder's embedding).
  EmbeddingDataset with_features(const ad::Tensor& f) const;
  // Rows with every domain id relabelled by perm[d].
  EmbeddingDataset relabel_domains(const std::vector<std::size_t>& perm) const;

 private:
  std::size_t width_ = 0;
  std::size_t n_domains_ = 0;
  std::size_t n_labels_ = 0;
  std::vector<std::size_t> domain_, label_;
  std::vector<Split> split_;
  std::vector<double> features_;
};

std::string to_string(Split s);

enum class Overlap { Disjoint, Shared };

struct SyntheticSpec {
  std::size_t n_domains = 4;
  std::size_t n_labels = 7;
  std::size_t label_dims = 6;
  std::size_t domain_dims = 6;
  std::size_t per_cluster = 20;  // rows per (domain, label)
  double label_separation = 3.0;
  double domain_separation = 3.0;
  double noise = 0.5;
  double val_fraction = 0.0;
  Overlap overlap = Overlap::Disjoint;

  std::size_t dims() const { return label_dims + domain_dims; }
};

// Generator parameters, kept to evaluate the exact label posterior.
struct SyntheticModel {
  SyntheticSpec spec;
  std::vector<std::vector<double>> label_means;   // [label][label_dims]
  std::vector<std::vector<double>> domain_means;  // [domain][domain_dims]
  std::vector<double> rotation;                   // dims x dims orthogonal, row-major
};

// x = R [label_mean + noise ; domain_mean + noise]. Labels never depend on
// the domain block, so p(Y|x) is shared by every domain.
EmbeddingDataset gen_synthetic(std::uint64_t seed, const SyntheticSpec& spec,
                               SyntheticModel* model = nullptr);
// p(Y | x) under the generator.
std::vector<double> synthetic_label_posterior(const SyntheticModel& m, const double* x);

// domain,label,split,f0..fk with %.17g features.
std::string to_csv(const EmbeddingDataset& d);
void write_csv(const std::string& path, const EmbeddingDataset& d);

struct IngestReport {
  EmbeddingDataset data;
  // (domain, label, split) -> rows
  std::map<std::tuple<std::size_t, std::size_t, std::string>, std::size_t> counts;
};
// Throws ParseError naming the line for ragged rows, bad numbers, unknown
// split tags, negative ids, or an empty file.
IngestReport ingest_csv_text(const std::string& text, const std::string& name = "<input>");
IngestReport ingest_csv(const std::string& path);

// Multinomial logistic regression.
struct LinearProbe {
  ad::Tensor W;  // width x classes
  ad::Tensor b;  // 1 x classes
  double l2 = 0.0;
  std::size_t iterations = 0;

  std::vector<double> log_proba(const double* x) const;
};

struct ProbeOptions {
  double l2 = 0.0;
  std::size_t max_iters = 3000;
  double grad_tol = 1e-6;
  std::uint64_t seed = 0;
};

// Loss sum_i w_i l_i / sum_i w_i + l2/2 ||W||^2 minimized by full-batch
// gradient descent with step halving on increase (monotone). Weights start
// N(0,1). Converged when the gradient norm, scaled by mean weight over the
// smallest positive weight, drops below grad_tol; with unequal weights this
// resolves the lightly weighted rows instead of stopping once the heavy rows
// fit. Throws HypothesisError when fewer than two labels are present.
LinearProbe fit_probe(const ad::Tensor& x, const std::vector<std::size_t>& y,
                      const std::vector<double>& w, std::size_t n_classes,
                      const ProbeOptions& opt);

inline const std::vector<double> kL2Grid = {1e-4, 1e-3, 1e-2, 1e-1, 1, 1e1, 1e2, 1e3};

// Fit on source train rows; l2 swept over kL2Grid by source validation
// accuracy (ties go to the smaller l2; without validation rows the training
// rows are scored). Pass `l2` to skip the sweep.
LinearProbe linear_probe(const EmbeddingDataset& d, std::size_t source, const ProbeOptions& opt,
                         std::optional<double> l2 = std::nullopt);

inline constexpr double kDefaultSampleWeight = 1e-5;

// Source rows (weight 1) plus target rows with a uniformly redrawn wrong
// label (weight sample_weight). sample_weight 0 reproduces linear_probe with
// the same l2 and seed.
LinearProbe worst_case_probe(const EmbeddingDataset& d, std::size_t source, std::size_t target,
                             double sample_weight, const ProbeOptions& opt);

// Validation rows of a domain, or its training rows when it has none. With
// val_fraction 0 every row is a training row and the dataset doubles as the
// population.
std::vector<std::size_t> eval_rows(const EmbeddingDataset& d, std::size_t domain);

struct ProbeMetrics {
  double accuracy = 0.0;
  double log_likelihood = 0.0;  // mean log p(y | x)
};
ProbeMetrics evaluate_probe(const LinearProbe& p, const EmbeddingDataset& d,
                            const std::vector<std::size_t>& rows);

enum class ProbeMode { Average, Worst };

struct PairCell {
  std::size_t source = 0, target = 0;
  ProbeMetrics on_source, on_target;
};

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

struct ProbeResult {
  ProbeMode mode = ProbeMode::Worst;
  std::size_t n_domains = 0;
  std::vector<std::vector<PairCell>> per_seed;  // [seed][pair], row-major over (source, target)
  MeanSe target_ll_avg, target_acc_avg, source_ll_avg, source_acc_avg;  // off-diagonal mean
  MeanSe target_ll_worst;  // min over off-diagonal pairs
};

struct PairOptions {
  ProbeMode mode = ProbeMode::Worst;
  double sample_weight = kDefaultSampleWeight;
  ProbeOptions probe;
  std::vector<std::uint64_t> seeds = {0};
  // Restrict evaluated pairs (empty: all). Diagonal pairs are always kept.
  std::vector<std::size_t> sources, targets;
  unsigned jobs = 1;
};

ProbeResult evaluate_all_pairs(const EmbeddingDataset& d, const PairOptions& opt);
std::string probe_csv(const ProbeResult& r);
void to_json(nlohmann::json& j, const ProbeResult& r);

MeanSe mean_se(const std::vector<double>& v);

}  // namespace idg
