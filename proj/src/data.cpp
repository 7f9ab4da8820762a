#include "idg/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "idg/errors.hpp"
#include "idg/parallel.hpp"

namespace idg {

void EmbeddingDataset::add(std::size_t domain, std::size_t label, Split split,
                           const std::vector<double>& f) {
  if (f.size() != width_) throw DimensionError("feature width mismatch");
  domain_.push_back(domain);
  label_.push_back(label);
  split_.push_back(split);
  features_.insert(features_.end(), f.begin(), f.end());
  n_domains_ = std::max(n_domains_, domain + 1);
  n_labels_ = std::max(n_labels_, label + 1);
}

std::vector<std::size_t> EmbeddingDataset::rows_of(std::size_t domain) const {
  std::vector<std::size_t> r;
  for (std::size_t i = 0; i < size(); ++i)
    if (domain_[i] == domain) r.push_back(i);
  return r;
}

std::vector<std::size_t> EmbeddingDataset::rows_of(std::size_t domain, Split split) const {
  std::vector<std::size_t> r;
  for (std::size_t i = 0; i < size(); ++i)
    if (domain_[i] == domain && split_[i] == split) r.push_back(i);
  return r;
}

ad::Tensor EmbeddingDataset::features(const std::vector<std::size_t>& rows) const {
  ad::Tensor t(rows.size(), width_);
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy_n(row(rows[r]), width_, t.data.begin() + static_cast<std::ptrdiff_t>(r * width_));
  return t;
}

std::vector<std::size_t> EmbeddingDataset::labels(const std::vector<std::size_t>& rows) const {
  std::vector<std::size_t> y;
  y.reserve(rows.size());
  for (std::size_t r : rows) y.push_back(label_[r]);
  return y;
}

EmbeddingDataset EmbeddingDataset::with_features(const ad::Tensor& f) const {
  if (f.rows != size()) throw DimensionError("one feature row per dataset row required");
  EmbeddingDataset out(f.cols);
  for (std::size_t i = 0; i < size(); ++i)
    out.add(domain_[i], label_[i], split_[i],
            std::vector<double>(f.data.begin() + static_cast<std::ptrdiff_t>(i * f.cols),
                                f.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * f.cols)));
  out.n_domains_ = std::max(out.n_domains_, n_domains_);
  out.n_labels_ = std::max(out.n_labels_, n_labels_);
  return out;
}

EmbeddingDataset EmbeddingDataset::relabel_domains(const std::vector<std::size_t>& perm) const {
  if (perm.size() != n_domains_) throw DimensionError("permutation must cover every domain");
  EmbeddingDataset out(width_);
  for (std::size_t i = 0; i < size(); ++i)
    out.add(perm[domain_[i]], label_[i], split_[i], std::vector<double>(row(i), row(i) + width_));
  out.n_labels_ = std::max(out.n_labels_, n_labels_);
  return out;
}

std::string to_string(Split s) { return s == Split::Train ? "train" : "val"; }

namespace {

std::vector<double> random_orthogonal(Rng& rng, std::size_t n) {
  std::vector<double> q(n * n);
  for (double& v : q) v = rng.normal();
  // Modified Gram-Schmidt on the rows.
  for (std::size_t i = 0; i < n; ++i) {
    double* ri = q.data() + i * n;
    for (std::size_t k = 0; k < i; ++k) {
      const double* rk = q.data() + k * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += ri[j] * rk[j];
      for (std::size_t j = 0; j < n; ++j) ri[j] -= dot * rk[j];
    }
    double norm = 0.0;
    for (std::size_t j = 0; j < n; ++j) norm += ri[j] * ri[j];
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < n; ++j) ri[j] /= norm;
  }
  return q;
}

}  // namespace

EmbeddingDataset gen_synthetic(std::uint64_t seed, const SyntheticSpec& spec,
                               SyntheticModel* model) {
  if (spec.n_domains < 2 || spec.n_labels < 2)
    throw DimensionError("synthetic data needs at least 2 domains and 2 labels");
  if (spec.label_dims == 0 || spec.per_cluster == 0)
    throw DimensionError("synthetic data needs label dimensions and rows per cluster");
  if (!(spec.val_fraction >= 0.0 && spec.val_fraction < 1.0))
    throw DimensionError("val_fraction must lie in [0, 1)");
  Rng rng(seed);
  SyntheticModel m;
  m.spec = spec;
  m.label_means.assign(spec.n_labels, std::vector<double>(spec.label_dims));
  for (auto& mu : m.label_means)
    for (double& v : mu) v = spec.label_separation * rng.normal();
  m.domain_means.assign(spec.n_domains, std::vector<double>(spec.domain_dims, 0.0));
  if (spec.overlap == Overlap::Disjoint)
    for (auto& mu : m.domain_means)
      for (double& v : mu) v = spec.domain_separation * rng.normal();
  const std::size_t n = spec.dims();
  m.rotation = random_orthogonal(rng, n);

  const auto n_val =
      static_cast<std::size_t>(std::llround(spec.val_fraction * static_cast<double>(spec.per_cluster)));
  EmbeddingDataset out(n);
  std::vector<double> f(n), x(n);
  for (std::size_t d = 0; d < spec.n_domains; ++d)
    for (std::size_t y = 0; y < spec.n_labels; ++y)
      for (std::size_t k = 0; k < spec.per_cluster; ++k) {
        for (std::size_t j = 0; j < spec.label_dims; ++j)
          f[j] = m.label_means[y][j] + spec.noise * rng.normal();
        for (std::size_t j = 0; j < spec.domain_dims; ++j)
          f[spec.label_dims + j] = m.domain_means[d][j] + spec.noise * rng.normal();
        for (std::size_t i = 0; i < n; ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += m.rotation[i * n + j] * f[j];
          x[i] = s;
        }
        out.add(d, y, k < n_val ? Split::Val : Split::Train, x);
      }
  if (model) *model = std::move(m);
  return out;
}

std::vector<double> synthetic_label_posterior(const SyntheticModel& m, const double* x) {
  const std::size_t n = m.spec.dims();
  std::vector<double> u(m.spec.label_dims, 0.0);
  // f = R^T x; only the label block matters.
  for (std::size_t j = 0; j < m.spec.label_dims; ++j)
    for (std::size_t i = 0; i < n; ++i) u[j] += m.rotation[i * n + j] * x[i];
  std::vector<double> logit(m.spec.n_labels);
  const double s2 = 2.0 * m.spec.noise * m.spec.noise;
  for (std::size_t y = 0; y < m.spec.n_labels; ++y) {
    double d2 = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) d2 += (u[j] - m.label_means[y][j]) * (u[j] - m.label_means[y][j]);
    logit[y] = -d2 / s2;
  }
  const double mx = *std::max_element(logit.begin(), logit.end());
  double z = 0.0;
  for (double& v : logit) z += (v = std::exp(v - mx));
  for (double& v : logit) v /= z;
  return logit;
}

std::string to_csv(const EmbeddingDataset& d) {
  std::string out = "domain,label,split";
  for (std::size_t j = 0; j < d.width(); ++j) out += ",f" + std::to_string(j);
  out += "\n";
  char buf[40];
  for (std::size_t i = 0; i < d.size(); ++i) {
    out += std::to_string(d.domain(i)) + "," + std::to_string(d.label(i)) + "," +
           to_string(d.split(i));
    for (std::size_t j = 0; j < d.width(); ++j) {
      std::snprintf(buf, sizeof buf, ",%.17g", d.row(i)[j]);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

void write_csv(const std::string& path, const EmbeddingDataset& d) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path);
  f << to_csv(d);
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                     : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

IngestReport ingest_csv_text(const std::string& text, const std::string& name) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  const auto fail = [&](const std::string& msg) {
    throw ParseError(name + ":" + std::to_string(lineno) + ": " + msg);
  };
  std::optional<std::size_t> width;
  IngestReport rep;
  std::set<std::size_t> domains, labels;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (!width) {
      if (fields.size() < 4 || trim(fields[0]) != "domain" || trim(fields[1]) != "label" ||
          trim(fields[2]) != "split")
        fail("header must be domain,label,split,f0..fk");
      width = fields.size() - 3;
      rep.data = EmbeddingDataset(*width);
      continue;
    }
    if (fields.size() != *width + 3)
      fail("ragged row: expected " + std::to_string(*width + 3) + " fields, got " +
           std::to_string(fields.size()));
    const auto parse_id = [&](std::string_view s, const char* what) {
      s = trim(s);
      long long v = 0;
      const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size())
        fail(std::string("unparseable ") + what + " id '" + std::string(s) + "'");
      if (v < 0) fail(std::string("negative ") + what + " id");
      return static_cast<std::size_t>(v);
    };
    const std::size_t d = parse_id(fields[0], "domain");
    const std::size_t y = parse_id(fields[1], "label");
    const std::string_view tag = trim(fields[2]);
    Split sp;
    if (tag == "train") sp = Split::Train;
    else if (tag == "val") sp = Split::Val;
    else fail("unknown split tag '" + std::string(tag) + "'");
    std::vector<double> f(*width);
    for (std::size_t j = 0; j < *width; ++j) {
      const std::string s(trim(fields[3 + j]));
      char* end = nullptr;
      f[j] = std::strtod(s.c_str(), &end);
      if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(f[j]))
        fail("bad feature value '" + s + "' in column f" + std::to_string(j));
    }
    rep.data.add(d, y, sp, f);
    domains.insert(d);
    labels.insert(y);
    ++rep.counts[{d, y, std::string(tag)}];
  }
  if (!width || rep.data.size() == 0) {
    lineno = 0;
    fail("empty file");
  }
  if (*domains.rbegin() + 1 != domains.size()) throw ParseError(name + ": domain ids are not dense from 0");
  if (*labels.rbegin() + 1 != labels.size()) throw ParseError(name + ": label ids are not dense from 0");
  return rep;
}

IngestReport ingest_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ingest_csv_text(ss.str(), path);
}

std::vector<double> LinearProbe::log_proba(const double* x) const {
  std::vector<double> z(W.cols);
  for (std::size_t c = 0; c < W.cols; ++c) {
    double s = b.data[c];
    for (std::size_t k = 0; k < W.rows; ++k) s += x[k] * W(k, c);
    z[c] = s;
  }
  const double m = *std::max_element(z.begin(), z.end());
  double t = 0.0;
  for (double v : z) t += std::exp(v - m);
  const double lse = m + std::log(t);
  for (double& v : z) v -= lse;
  return z;
}

namespace {

struct ProbeObjective {
  const ad::Tensor& x;
  const std::vector<std::size_t>& y;
  const std::vector<double>& w;
  double wsum;
  double l2;

  // Loss and (optionally) gradient for parameters theta = [W row-major, b].
  double operator()(const std::vector<double>& th, std::size_t C, std::vector<double>* g) const {
    const std::size_t k = x.cols;
    if (g) g->assign(th.size(), 0.0);
    double loss = 0.0;
    std::vector<double> z(C);
    for (std::size_t i = 0; i < x.rows; ++i) {
      if (w[i] == 0.0) continue;
      const double* xi = x.data.data() + i * k;
      for (std::size_t c = 0; c < C; ++c) {
        double s = th[k * C + c];
        for (std::size_t j = 0; j < k; ++j) s += xi[j] * th[j * C + c];
        z[c] = s;
      }
      const double m = *std::max_element(z.begin(), z.end());
      double t = 0.0;
      for (double v : z) t += std::exp(v - m);
      const double lse = m + std::log(t);
      const double wi = w[i] / wsum;
      loss += wi * (lse - z[y[i]]);
      if (g) {
        for (std::size_t c = 0; c < C; ++c) {
          const double d = wi * (std::exp(z[c] - lse) - (c == y[i] ? 1.0 : 0.0));
          for (std::size_t j = 0; j < k; ++j) (*g)[j * C + c] += d * xi[j];
          (*g)[k * C + c] += d;
        }
      }
    }
    double reg = 0.0;
    for (std::size_t p = 0; p < k * C; ++p) {
      reg += th[p] * th[p];
      if (g) (*g)[p] += l2 * th[p];
    }
    return loss + 0.5 * l2 * reg;
  }
};

}  // namespace

LinearProbe fit_probe(const ad::Tensor& x, const std::vector<std::size_t>& y,
                      const std::vector<double>& w, std::size_t n_classes,
                      const ProbeOptions& opt) {
  if (y.size() != x.rows || w.size() != x.rows) throw DimensionError("probe inputs disagree on rows");
  std::set<std::size_t> present;
  double wsum = 0.0, wmin = INFINITY;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] >= n_classes) throw DimensionError("label out of range");
    if (w[i] < 0.0) throw DimensionError("negative sample weight");
    if (w[i] > 0.0) {
      present.insert(y[i]);
      wmin = std::min(wmin, w[i]);
      ++n_pos;
    }
    wsum += w[i];
  }
  if (present.size() < 2) throw HypothesisError("probe needs at least two labels");

  const std::size_t k = x.cols, C = n_classes;
  Rng rng(opt.seed);
  std::vector<double> th(k * C + C, 0.0);
  for (std::size_t p = 0; p < k * C; ++p) th[p] = rng.normal();

  const ProbeObjective f{x, y, w, wsum, opt.l2};
  const double tol = opt.grad_tol * wmin / (wsum / static_cast<double>(n_pos));
  std::vector<double> g, cand(th.size());
  double loss = f(th, C, &g);
  double step = 1.0;
  std::size_t it = 0;
  for (; it < opt.max_iters; ++it) {
    double gn = 0.0;
    for (double v : g) gn += v * v;
    if (std::sqrt(gn) < tol) break;
    bool accepted = false;
    while (step > 1e-30) {
      for (std::size_t p = 0; p < th.size(); ++p) cand[p] = th[p] - step * g[p];
      const double l = f(cand, C, nullptr);
      if (l <= loss) {
        th.swap(cand);
        loss = f(th, C, &g);
        accepted = true;
        step *= 2.0;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }

  LinearProbe p;
  p.W = ad::Tensor(k, C, std::vector<double>(th.begin(), th.begin() + static_cast<std::ptrdiff_t>(k * C)));
  p.b = ad::Tensor(1, C, std::vector<double>(th.begin() + static_cast<std::ptrdiff_t>(k * C), th.end()));
  p.l2 = opt.l2;
  p.iterations = it;
  return p;
}

std::vector<std::size_t> eval_rows(const EmbeddingDataset& d, std::size_t domain) {
  auto v = d.rows_of(domain, Split::Val);
  return v.empty() ? d.rows_of(domain, Split::Train) : v;
}

ProbeMetrics evaluate_probe(const LinearProbe& p, const EmbeddingDataset& d,
                            const std::vector<std::size_t>& rows) {
  ProbeMetrics m;
  if (rows.empty()) return m;
  for (std::size_t r : rows) {
    const auto lp = p.log_proba(d.row(r));
    const auto best = static_cast<std::size_t>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    m.accuracy += best == d.label(r) ? 1.0 : 0.0;
    m.log_likelihood += lp[d.label(r)];
  }
  m.accuracy /= static_cast<double>(rows.size());
  m.log_likelihood /= static_cast<double>(rows.size());
  return m;
}

LinearProbe linear_probe(const EmbeddingDataset& d, std::size_t source, const ProbeOptions& opt,
                         std::optional<double> l2) {
  const auto train_rows = d.rows_of(source, Split::Train);
  const ad::Tensor x = d.features(train_rows);
  const auto y = d.labels(train_rows);
  const std::vector<double> w(train_rows.size(), 1.0);
  if (l2) {
    ProbeOptions o = opt;
    o.l2 = *l2;
    return fit_probe(x, y, w, d.n_labels(), o);
  }
  const auto score_rows = eval_rows(d, source);
  std::optional<LinearProbe> best;
  double best_acc = -1.0;
  for (double v : kL2Grid) {
    ProbeOptions o = opt;
    o.l2 = v;
    LinearProbe p = fit_probe(x, y, w, d.n_labels(), o);
    const double acc = evaluate_probe(p, d, score_rows).accuracy;
    if (acc > best_acc) {
      best_acc = acc;
      best = std::move(p);
    }
  }
  return *best;
}

LinearProbe worst_case_probe(const EmbeddingDataset& d, std::size_t source, std::size_t target,
                             double sample_weight, const ProbeOptions& opt) {
  if (source == target) throw HypothesisError("worst-case probe needs a target distinct from the source");
  if (!(sample_weight >= 0.0)) throw DimensionError("sample weight must be nonnegative");
  auto rows = d.rows_of(source, Split::Train);
  const auto trows = d.rows_of(target, Split::Train);
  std::vector<double> w(rows.size(), 1.0);
  auto y = d.labels(rows);
  Rng rng(Rng::derive(opt.seed, 0x77726f6e67ULL));
  const std::size_t C = d.n_labels();
  for (std::size_t r : trows) {
    const std::size_t truth = d.label(r);
    const std::size_t draw = rng.uniform_int(C - 1);
    y.push_back(draw < truth ? draw : draw + 1);
    w.push_back(sample_weight);
  }
  rows.insert(rows.end(), trows.begin(), trows.end());
  return fit_probe(d.features(rows), y, w, C, opt);
}

MeanSe mean_se(const std::vector<double>& v) {
  MeanSe r;
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return r;
}

ProbeResult evaluate_all_pairs(const EmbeddingDataset& d, const PairOptions& opt) {
  const std::size_t n = d.n_domains();
  if (n < 2) throw DimensionError("pair evaluation needs at least two domains");
  const auto keep = [](const std::vector<std::size_t>& list, std::size_t v) {
    return list.empty() || std::find(list.begin(), list.end(), v) != list.end();
  };
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t t = 0; t < n; ++t)
      if (s == t ? keep(opt.sources, s) : keep(opt.sources, s) && keep(opt.targets, t))
        pairs.emplace_back(s, t);

  ProbeResult res;
  res.mode = opt.mode;
  res.n_domains = n;
  std::vector<double> tll, tacc, sll, sacc, worst;
  for (std::uint64_t seed : opt.seeds) {
    std::vector<PairCell> cells(pairs.size());
    const auto work = [&](std::size_t k) {
      const auto [s, t] = pairs[k];
      ProbeOptions po = opt.probe;
      // Same derived seed for every pair so results do not depend on domain ids.
      po.seed = Rng::derive(seed, 0);
      LinearProbe p;
      if (opt.mode == ProbeMode::Average)
        p = linear_probe(d, s, po);
      else if (s == t)
        p = linear_probe(d, s, po, po.l2);
      else
        p = worst_case_probe(d, s, t, opt.sample_weight, po);
      cells[k] = {s, t, evaluate_probe(p, d, eval_rows(d, s)), evaluate_probe(p, d, eval_rows(d, t))};
    };
    parallel_for(pairs.size(), opt.jobs, work);
    double a = 0, b = 0, c = 0, e = 0, mn = std::numeric_limits<double>::infinity();
    std::size_t m = 0;
    for (const auto& cell : cells) {
      if (cell.source == cell.target) continue;
      a += cell.on_target.log_likelihood;
      b += cell.on_target.accuracy;
      c += cell.on_source.log_likelihood;
      e += cell.on_source.accuracy;
      mn = std::min(mn, cell.on_target.log_likelihood);
      ++m;
    }
    if (m > 0) {
      const double dm = static_cast<double>(m);
      tll.push_back(a / dm);
      tacc.push_back(b / dm);
      sll.push_back(c / dm);
      sacc.push_back(e / dm);
      worst.push_back(mn);
    }
    res.per_seed.push_back(std::move(cells));
  }
  res.target_ll_avg = mean_se(tll);
  res.target_acc_avg = mean_se(tacc);
  res.source_ll_avg = mean_se(sll);
  res.source_acc_avg = mean_se(sacc);
  res.target_ll_worst = mean_se(worst);
  return res;
}

std::string probe_csv(const ProbeResult& r) {
  std::string out = "seed_index,source,target,source_acc,source_ll,target_acc,target_ll\n";
  char buf[256];
  for (std::size_t s = 0; s < r.per_seed.size(); ++s)
    for (const auto& c : r.per_seed[s]) {
      std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.17g,%.17g,%.17g,%.17g\n", s, c.source, c.target,
                    c.on_source.accuracy, c.on_source.log_likelihood, c.on_target.accuracy,
                    c.on_target.log_likelihood);
      out += buf;
    }
  return out;
}

void to_json(nlohmann::json& j, const ProbeResult& r) {
  const auto ms = [](const MeanSe& m) { return nlohmann::json{{"mean", m.mean}, {"se", m.se}}; };
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& cells : r.per_seed) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : cells)
      arr.push_back({{"source", c.source},
                     {"target", c.target},
                     {"source_acc", c.on_source.accuracy},
                     {"source_ll", c.on_source.log_likelihood},
                     {"target_acc", c.on_target.accuracy},
                     {"target_ll", c.on_target.log_likelihood}});
    seeds.push_back(arr);
  }
  j = {{"mode", r.mode == ProbeMode::Average ? "avg" : "worst"},
       {"n_domains", r.n_domains},
       {"target_ll", ms(r.target_ll_avg)},
       {"target_acc", ms(r.target_acc_avg)},
       {"source_ll", ms(r.source_ll_avg)},
       {"source_acc", ms(r.source_acc_avg)},
       {"target_ll_worst_pair", ms(r.target_ll_worst)},
       {"per_seed", seeds}};
}

}  // namespace idg
