#include "idg/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>

#include "idg/errors.hpp"

namespace idg {

using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

Tensor glorot(Rng& rng, std::size_t r, std::size_t c) {
  Tensor t(r, c);
  const double s = std::sqrt(2.0 / static_cast<double>(r + c));
  for (double& v : t.data) v = s * rng.normal();
  return t;
}

Var constant_like(const Var& v, Tensor t) { return v.tape()->constant(std::move(t)); }

}  // namespace

ad::ParamSet init_mlp(const MlpSpec& spec, Rng& rng) {
  if (spec.in == 0 || spec.hidden == 0 || spec.out == 0) throw DimensionError("network widths must be positive");
  ad::ParamSet p;
  p.add("W1", glorot(rng, spec.in, spec.hidden));
  p.add("b1", Tensor(1, spec.hidden));
  p.add("W2", glorot(rng, spec.hidden, spec.out));
  p.add("b2", Tensor(1, spec.out));
  if (spec.stochastic) {
    p.add("Wv", glorot(rng, spec.hidden, spec.out));
    p.add("bv", Tensor(1, spec.out));
  }
  return p;
}

EncoderOutput mlp_forward(const MlpSpec& spec, const std::vector<Var>& p, const Var& x,
                          const Tensor* eps) {
  if (x.cols() != spec.in) throw DimensionError("input width does not match the network");
  const Var h = ad::tanh(ad::add(ad::matmul(x, p[0]), p[1]));
  const Var m = ad::add(ad::matmul(h, p[2]), p[3]);
  if (!spec.stochastic) return {ad::l2_normalize_rows(m), std::nullopt, std::nullopt};
  const Var lv = ad::add(ad::matmul(h, p[4]), p[5]);
  if (!eps) return {ad::l2_normalize_rows(m), m, lv};
  if (eps->rows != m.rows() || eps->cols != m.cols()) throw DimensionError("noise shape mismatch");
  const Var sample = ad::add(m, ad::mul(ad::exp(ad::scale(lv, 0.5)), constant_like(x, *eps)));
  return {ad::l2_normalize_rows(sample), m, lv};
}

Tensor embed(const MlpSpec& spec, const ad::ParamSet& params, const Tensor& x) {
  Tape tape;
  std::vector<Var> p;
  for (const auto& t : params.values) p.push_back(tape.leaf(t));
  return mlp_forward(spec, p, tape.constant(x)).z.value();
}

LossParts infonce_from_scores(const Var& scores) {
  const std::size_t b = scores.rows();
  if (b < 2 || scores.cols() != b) throw DimensionError("InfoNCE needs a square score matrix with b >= 2");
  std::vector<std::size_t> diag(b);
  for (std::size_t i = 0; i < b; ++i) diag[i] = i;
  LossParts out;
  out.aug = ad::softmax_cross_entropy(scores, diag);
  out.total = out.aug;
  out.bound = std::log(static_cast<double>(b)) - out.aug.value().item();
  return out;
}

LossParts infonce_loss(const Var& z, const Var& za, double tau) {
  if (!(tau > 0.0)) throw DimensionError("temperature must be positive");
  return infonce_from_scores(ad::scale(ad::matmul(z, ad::transpose(za)), 1.0 / tau));
}

SupportTerm cad_support(const Var& z, const Tensor& x, const std::vector<std::size_t>& domain,
                        double tau, const std::vector<std::size_t>* labels) {
  const std::size_t b = z.rows();
  if (b < 2) throw DimensionError("CAD needs b >= 2");
  if (x.rows != b || domain.size() != b || (labels && labels->size() != b))
    throw DimensionError("batch fields disagree on size");
  if (!(tau > 0.0)) throw DimensionError("temperature must be positive");

  // p_hat(d | x_j) from counts over identical batch inputs.
  std::vector<std::size_t> group(b);
  {
    std::map<std::vector<double>, std::size_t> ids;
    for (std::size_t j = 0; j < b; ++j) {
      std::vector<double> key(x.data.begin() + static_cast<std::ptrdiff_t>(j * x.cols),
                              x.data.begin() + static_cast<std::ptrdiff_t>((j + 1) * x.cols));
      group[j] = ids.emplace(std::move(key), ids.size()).first->second;
    }
  }
  std::map<std::pair<std::size_t, std::size_t>, double> count;
  std::map<std::size_t, double> total;
  for (std::size_t j = 0; j < b; ++j) {
    count[{group[j], domain[j]}] += 1.0;
    total[group[j]] += 1.0;
  }

  std::vector<std::size_t> valid;
  std::vector<double> den, num;
  std::size_t empty = 0;
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<double> dr(b, 0.0), nr(b, 0.0);
    bool any = false;
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i || (labels && (*labels)[j] != (*labels)[i])) continue;
      dr[j] = 1.0;
      const auto it = count.find({group[j], domain[i]});
      const double same = it == count.end() ? 0.0 : it->second / total[group[j]];
      nr[j] = 1.0 - same;
      if (nr[j] > 0.0) any = true;
    }
    if (!any) {
      ++empty;
      continue;
    }
    valid.push_back(i);
    den.insert(den.end(), dr.begin(), dr.end());
    num.insert(num.end(), nr.begin(), nr.end());
  }
  if (valid.empty()) return {constant_like(z, Tensor::scalar(0.0)), empty};
  const Var s = ad::scale(ad::matmul(z, ad::transpose(z)), 1.0 / tau);
  const Var sv = ad::gather_rows(s, valid);
  const Tensor wd(valid.size(), b, std::move(den));
  const Tensor wn(valid.size(), b, std::move(num));
  const Var per = ad::sub(ad::masked_logsumexp(sv, wd), ad::masked_logsumexp(sv, wn));
  return {ad::scale(ad::sum(per), 1.0 / static_cast<double>(b)), empty};
}

namespace {

LossParts with_bottleneck(LossParts base, const Var& supp, double lambda) {
  if (!(lambda >= 0.0)) throw DimensionError("lambda must be nonnegative");
  base.supp = supp;
  if (lambda != 0.0) base.total = ad::add(base.aug, ad::scale(supp, lambda));
  return base;
}

}  // namespace

LossParts cad_loss(const Var& z, const Var& za, const Batch& b, double lambda, double tau) {
  LossParts out = infonce_loss(z, za, tau);
  const SupportTerm s = cad_support(z, b.x, b.domain, tau);
  out = with_bottleneck(std::move(out), s.value, lambda);
  out.empty_pools = s.empty_pools;
  return out;
}

LossParts ccad_loss(const Var& z, const Var& za, const Batch& b, double lambda, double tau) {
  if (!b.label) throw HypothesisError("conditional CAD needs labels");
  LossParts out = infonce_loss(z, za, tau);
  const SupportTerm s = cad_support(z, b.x, b.domain, tau, &*b.label);
  out = with_bottleneck(std::move(out), s.value, lambda);
  out.empty_pools = s.empty_pools;
  return out;
}

Var ent_bits(const Var& z, const Tensor& noise, const Var& mu, const Var& log_scale) {
  if (noise.rows != z.rows() || noise.cols != z.cols()) throw DimensionError("noise shape mismatch");
  const Var lp = ad::logistic_bin_logprob(ad::add(z, constant_like(z, noise)), mu, log_scale);
  return ad::scale(ad::sum(lp), -1.0 / static_cast<double>(z.rows()));
}

LossParts ent_loss(const Var& z, const Var& za, const Tensor& noise, const Var& mu,
                   const Var& log_scale, double lambda, double tau) {
  return with_bottleneck(infonce_loss(z, za, tau), ent_bits(z, noise, mu, log_scale), lambda);
}

Var gaussian_rate(const Var& mean, const Var& logvar, const Var& prior_mean, const Var& prior_logvar) {
  return ad::scale(ad::sum(ad::gaussian_kl(mean, logvar, prior_mean, prior_logvar)),
                   1.0 / static_cast<double>(mean.rows()));
}

LossParts mi_loss(const Var& z, const Var& za, const Var& mean, const Var& logvar,
                  const Var& prior_mean, const Var& prior_logvar, double lambda, double tau) {
  return with_bottleneck(infonce_loss(z, za, tau), gaussian_rate(mean, logvar, prior_mean, prior_logvar),
                         lambda);
}

std::vector<std::vector<double>> cad_domain_posterior(
    const Tensor& scores, const std::vector<std::vector<double>>& pool_domain_posterior) {
  if (scores.cols != pool_domain_posterior.size()) throw DimensionError("one posterior per pool input required");
  const std::size_t nd = pool_domain_posterior.empty() ? 0 : pool_domain_posterior[0].size();
  std::vector<std::vector<double>> q(scores.rows, std::vector<double>(nd, 0.0));
  for (std::size_t i = 0; i < scores.rows; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < scores.cols; ++j) m = std::max(m, scores(i, j));
    double t = 0.0;
    for (std::size_t j = 0; j < scores.cols; ++j) t += std::exp(scores(i, j) - m);
    for (std::size_t j = 0; j < scores.cols; ++j) {
      const double w = std::exp(scores(i, j) - m) / t;
      for (std::size_t d = 0; d < nd; ++d) q[i][d] += w * pool_domain_posterior[j][d];
    }
  }
  return q;
}

std::string to_string(Objective o) { return o == Objective::CrossEntropy ? "ce" : "infonce"; }

std::string to_string(Bottleneck b) {
  switch (b) {
    case Bottleneck::None: return "none";
    case Bottleneck::CAD: return "cad";
    case Bottleneck::CondCAD: return "ccad";
    case Bottleneck::Ent: return "ent";
    case Bottleneck::MI: return "mi";
  }
  return "none";
}

Objective objective_from_string(const std::string& s) {
  if (s == "ce") return Objective::CrossEntropy;
  if (s == "infonce") return Objective::InfoNCE;
  throw ParseError("unknown objective '" + s + "'");
}

Bottleneck bottleneck_from_string(const std::string& s) {
  for (Bottleneck b : {Bottleneck::None, Bottleneck::CAD, Bottleneck::CondCAD, Bottleneck::Ent, Bottleneck::MI})
    if (to_string(b) == s) return b;
  throw ParseError("unknown bottleneck '" + s + "'");
}

namespace {

std::vector<std::size_t> resolved_domains(const TrainConfig& c, const EmbeddingDataset& data) {
  if (!c.train_domains.empty()) return c.train_domains;
  std::vector<std::size_t> all(data.n_domains());
  for (std::size_t d = 0; d < all.size(); ++d) all[d] = d;
  return all;
}

}  // namespace

void validate_config(const TrainConfig& c, const EmbeddingDataset& data) {
  if (data.size() == 0) throw HypothesisError("training needs a nonempty dataset");
  if (!(c.lambda >= 0.0)) throw HypothesisError("lambda must be nonnegative");
  if (!(c.tau > 0.0)) throw HypothesisError("temperature must be positive");
  if (!(c.lr > 0.0)) throw HypothesisError("learning rate must be positive");
  if (c.epochs == 0 || c.batch_per_domain == 0 || c.hidden == 0 || c.out == 0)
    throw HypothesisError("epochs, batch size and widths must be positive");
  if (c.bottleneck == Bottleneck::Ent && c.stochastic)
    throw HypothesisError("the entropy bottleneck needs a deterministic encoder");
  if (c.bottleneck == Bottleneck::MI && !c.stochastic)
    throw HypothesisError("the MI bottleneck needs a stochastic encoder");
  if (!c.use_labels) {
    if (c.bottleneck == Bottleneck::CondCAD) throw HypothesisError("conditional CAD needs labels");
    if (c.objective == Objective::CrossEntropy) throw HypothesisError("cross-entropy needs labels");
    if (c.regime.kind != RegimeSpec::Kind::Standard)
      throw HypothesisError("regime '" + c.regime.name() + "' samples positives by label");
  }
  if (c.regime.kind == RegimeSpec::Kind::ApproxDA && !(c.regime.mix >= 0.0 && c.regime.mix <= 1.0))
    throw HypothesisError("approx_da mix must lie in [0, 1]");
  if (c.regime.kind == RegimeSpec::Kind::Standard && !(c.standard_noise >= 0.0))
    throw HypothesisError("standard noise must be nonnegative");
  const auto doms = resolved_domains(c, data);
  for (std::size_t d : doms) {
    if (d >= data.n_domains()) throw HypothesisError("training domain " + std::to_string(d) + " does not exist");
    if (data.rows_of(d, Split::Train).empty())
      throw HypothesisError("training domain " + std::to_string(d) + " has no train rows");
  }
  if (c.objective == Objective::InfoNCE && c.regime.kind == RegimeSpec::Kind::SingleDom &&
      std::find(doms.begin(), doms.end(), c.regime.domain) == doms.end())
    throw HypothesisError("single_dom domain " + std::to_string(c.regime.domain) + " is not a training domain");
}

namespace {

class PositiveSampler {
 public:
  PositiveSampler(const EmbeddingDataset& data, const std::vector<std::size_t>& domains,
                  const TrainConfig& c)
      : data_(data), c_(c) {
    for (std::size_t d : domains)
      for (std::size_t r : data.rows_of(d, Split::Train)) {
        by_label_[data.label(r)].push_back(r);
        by_domain_label_[{d, data.label(r)}].push_back(r);
      }
  }

  // Row used as the positive for row r, or nullopt for the jitter regime.
  std::optional<std::size_t> draw(std::size_t r, Rng& rng) const {
    using K = RegimeSpec::Kind;
    const std::size_t y = data_.label(r);
    K kind = c_.regime.kind;
    if (kind == K::ApproxDA) kind = rng.bernoulli(c_.regime.mix) ? K::Supervised : K::IntraDom;
    const std::vector<std::size_t>* pool = nullptr;
    switch (kind) {
      case K::Supervised: pool = &by_label_.at(y); break;
      case K::IntraDom: pool = &by_domain_label_.at({data_.domain(r), y}); break;
      case K::SingleDom: {
        const auto it = by_domain_label_.find({c_.regime.domain, y});
        if (it == by_domain_label_.end())
          throw HypothesisError("label " + std::to_string(y) + " is absent from single_dom domain " +
                                std::to_string(c_.regime.domain));
        pool = &it->second;
        break;
      }
      default: return std::nullopt;
    }
    return (*pool)[rng.uniform_int(pool->size())];
  }

 private:
  const EmbeddingDataset& data_;
  const TrainConfig& c_;
  std::map<std::size_t, std::vector<std::size_t>> by_label_;
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> by_domain_label_;
};

}  // namespace

TrainResult train(const EmbeddingDataset& data, const TrainConfig& c) {
  validate_config(c, data);
  const auto domains = resolved_domains(c, data);
  Rng rng(c.seed);

  TrainResult res;
  res.spec = MlpSpec{data.width(), c.hidden, c.out, c.stochastic};
  res.params = init_mlp(res.spec, rng);
  const std::size_t n_enc = res.params.values.size();
  const std::size_t C = data.n_labels();
  if (c.objective == Objective::CrossEntropy) {
    res.params.add("head_W", glorot(rng, c.out, C));
    res.params.add("head_b", Tensor(1, C));
  }
  if (c.bottleneck == Bottleneck::Ent) {
    res.params.add("ent_mu", Tensor(1, c.out));
    res.params.add("ent_log_scale", Tensor(1, c.out));
  }
  if (c.bottleneck == Bottleneck::MI) {
    res.params.add("prior_mean", Tensor(1, c.out));
    res.params.add("prior_logvar", Tensor(1, c.out));
  }

  std::vector<std::vector<std::size_t>> pools;
  std::size_t min_rows = SIZE_MAX;
  for (std::size_t d : domains) {
    pools.push_back(data.rows_of(d, Split::Train));
    min_rows = std::min(min_rows, pools.back().size());
  }
  const std::size_t steps_per_epoch = std::max<std::size_t>(1, min_rows / c.batch_per_domain);
  const std::uint64_t total_steps = steps_per_epoch * c.epochs;
  const bool needs_aug = c.objective == Objective::InfoNCE;
  const PositiveSampler sampler(data, domains, c);

  ad::Adam opt(c.lr);
  std::uint64_t step = 0;
  for (std::size_t epoch = 0; epoch < c.epochs; ++epoch) {
    for (auto& p : pools) rng.shuffle(p);
    HistoryRow row;
    row.epoch = epoch;
    for (std::size_t s = 0; s < steps_per_epoch; ++s, ++step) {
      std::vector<std::size_t> rows;
      for (const auto& p : pools)
        for (std::size_t k = 0; k < c.batch_per_domain; ++k)
          rows.push_back(p[(s * c.batch_per_domain + k) % p.size()]);
      const std::size_t b = rows.size();
      if (b < 2) throw HypothesisError("batches need at least two rows");

      Batch batch;
      batch.x = data.features(rows);
      batch.domain.reserve(b);
      for (std::size_t r : rows) batch.domain.push_back(data.domain(r));
      if (c.use_labels) batch.label = data.labels(rows);
      if (needs_aug) {
        batch.a = Tensor(b, data.width());
        for (std::size_t i = 0; i < b; ++i) {
          const auto pos = sampler.draw(rows[i], rng);
          const double* src = data.row(pos ? *pos : rows[i]);
          for (std::size_t j = 0; j < data.width(); ++j)
            batch.a(i, j) = src[j] + (pos ? 0.0 : c.standard_noise * rng.normal());
        }
      }
      Tensor eps, eps_a, noise;
      if (c.stochastic) {
        eps = Tensor(b, c.out);
        for (double& v : eps.data) v = rng.normal();
        eps_a = Tensor(b, c.out);
        for (double& v : eps_a.data) v = rng.normal();
      }
      if (c.bottleneck == Bottleneck::Ent) {
        noise = Tensor(b, c.out);
        for (double& v : noise.data) v = rng.uniform(-0.5, 0.5);
      }

      Tape tape;
      std::vector<Var> leaves;
      for (const auto& t : res.params.values) leaves.push_back(tape.leaf(t));
      const std::vector<Var> enc(leaves.begin(), leaves.begin() + static_cast<std::ptrdiff_t>(n_enc));
      const EncoderOutput out =
          mlp_forward(res.spec, enc, tape.constant(batch.x), c.stochastic ? &eps : nullptr);

      LossParts parts;
      if (c.objective == Objective::CrossEntropy) {
        const Var logits = ad::add(ad::matmul(out.z, leaves[n_enc]), leaves[n_enc + 1]);
        parts.aug = ad::softmax_cross_entropy(logits, *batch.label);
        parts.total = parts.aug;
      } else {
        const EncoderOutput oa =
            mlp_forward(res.spec, enc, tape.constant(batch.a), c.stochastic ? &eps_a : nullptr);
        parts = infonce_loss(out.z, oa.z, c.tau);
      }
      std::optional<Var> supp;
      switch (c.bottleneck) {
        case Bottleneck::None: break;
        case Bottleneck::CAD:
        case Bottleneck::CondCAD: {
          const SupportTerm st = cad_support(out.z, batch.x, batch.domain, c.tau,
                                             c.bottleneck == Bottleneck::CondCAD ? &*batch.label : nullptr);
          supp = st.value;
          res.empty_pools += st.empty_pools;
          break;
        }
        case Bottleneck::Ent:
          supp = ent_bits(out.z, noise, leaves[res.params.index("ent_mu")],
                          leaves[res.params.index("ent_log_scale")]);
          break;
        case Bottleneck::MI:
          supp = gaussian_rate(*out.mean, *out.logvar, leaves[res.params.index("prior_mean")],
                               leaves[res.params.index("prior_logvar")]);
          break;
      }
      if (supp) parts = with_bottleneck(std::move(parts), *supp, c.lambda);

      tape.backward(parts.total);
      std::vector<Tensor> grads;
      for (const auto& l : leaves) grads.push_back(l.grad());
      opt.step(res.params.values, grads, c.cosine ? ad::cosine_lr(1.0, step, total_steps) : 1.0);

      row.l_aug += parts.aug.value().item();
      row.l_supp += supp ? supp->value().item() : 0.0;
      row.total += parts.total.value().item();
    }
    const double n = static_cast<double>(steps_per_epoch);
    row.l_aug /= n;
    row.l_supp /= n;
    row.total /= n;
    res.history.push_back(row);
  }
  if (res.empty_pools > 0)
    std::cerr << "warning: " << res.empty_pools
              << " batch rows had an empty cross-domain pool and contributed 0 to the support term\n";
  return res;
}

std::string history_csv(const std::vector<HistoryRow>& h) {
  std::string out = "epoch,L_aug,L_supp,total\n";
  char buf[128];
  for (const auto& r : h) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", r.epoch, r.l_aug, r.l_supp, r.total);
    out += buf;
  }
  return out;
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"objective", to_string(c.objective)},
       {"bottleneck", to_string(c.bottleneck)},
       {"lambda", c.lambda},
       {"tau", c.tau},
       {"regime", c.regime},
       {"standard_noise", c.standard_noise},
       {"hidden", c.hidden},
       {"out", c.out},
       {"stochastic", c.stochastic},
       {"lr", c.lr},
       {"epochs", c.epochs},
       {"batch_per_domain", c.batch_per_domain},
       {"cosine", c.cosine},
       {"seed", c.seed},
       {"train_domains", c.train_domains},
       {"use_labels", c.use_labels}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  if (j.contains("objective")) c.objective = objective_from_string(j.at("objective").get<std::string>());
  if (j.contains("bottleneck")) c.bottleneck = bottleneck_from_string(j.at("bottleneck").get<std::string>());
  if (j.contains("regime")) c.regime = j.at("regime").get<RegimeSpec>();
  c.lambda = j.value("lambda", c.lambda);
  c.tau = j.value("tau", c.tau);
  c.standard_noise = j.value("standard_noise", c.standard_noise);
  c.hidden = j.value("hidden", c.hidden);
  c.out = j.value("out", c.out);
  c.stochastic = j.value("stochastic", c.stochastic);
  c.lr = j.value("lr", c.lr);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_per_domain = j.value("batch_per_domain", c.batch_per_domain);
  c.cosine = j.value("cosine", c.cosine);
  c.seed = j.value("seed", c.seed);
  c.train_domains = j.value("train_domains", c.train_domains);
  c.use_labels = j.value("use_labels", c.use_labels);
}

void to_json(nlohmann::json& j, const MlpSpec& s) {
  j = {{"in", s.in}, {"hidden", s.hidden}, {"out", s.out}, {"stochastic", s.stochastic}};
}

void from_json(const nlohmann::json& j, MlpSpec& s) {
  s.in = j.at("in").get<std::size_t>();
  s.hidden = j.at("hidden").get<std::size_t>();
  s.out = j.at("out").get<std::size_t>();
  s.stochastic = j.value("stochastic", false);
}

}  // namespace idg
