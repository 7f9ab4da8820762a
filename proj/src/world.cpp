#include "idg/world.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "idg/errors.hpp"
#include "idg/rng.hpp"

namespace idg {

LossSpec LossSpec::clamped_log(double epsilon) {
  if (!(epsilon > 0.0) || epsilon >= 0.5) {
    throw std::invalid_argument("clamped_log: epsilon must lie in (0, 1/2)");
  }
  return LossSpec(LossKind::ClampedLog, epsilon);
}

std::string LossSpec::name() const {
  switch (kind_) {
    case LossKind::ZeroOne: return "zero_one";
    case LossKind::Log: return "log";
    case LossKind::ClampedLog: return "clamped_log";
  }
  return "unknown";
}

Action Action::label(std::size_t n_labels, std::size_t y) {
  Action a{std::vector<double>(n_labels, 0.0)};
  a.q.at(y) = 1.0;
  return a;
}

std::size_t Action::argmax() const {
  return static_cast<std::size_t>(std::max_element(q.begin(), q.end()) - q.begin());
}

bool Action::same_as(const Action& other, double tol) const {
  return q.size() == other.q.size() && linf_distance(q, other.q) <= tol;
}

namespace {

void check_epsilon_fits(const LossSpec& loss, std::size_t n_labels) {
  if (loss.kind() == LossKind::ClampedLog &&
      loss.epsilon() * static_cast<double>(n_labels) >= 1.0) {
    throw std::invalid_argument("clamped_log: epsilon must be below 1/|Y|");
  }
}

double cross_entropy(std::span<const double> p, std::span<const double> q) {
  double l = 0.0;
  for (std::size_t y = 0; y < p.size(); ++y) {
    if (p[y] <= 0.0) continue;
    if (q[y] <= 0.0) return kInf;
    l -= p[y] * std::log(q[y]);
  }
  return l;
}

}  // namespace

std::vector<double> clamp_project(std::span<const double> p, double eps) {
  const std::size_t n = p.size();
  if (eps * static_cast<double>(n) >= 1.0) {
    throw std::invalid_argument("clamp_project: epsilon must be below 1/n");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
  // The k largest coordinates stay free (q = p / mu); the rest sit at eps.
  std::vector<double> q(n, eps);
  double free_mass = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    free_mass += p[order[k - 1]];
    const double budget = 1.0 - static_cast<double>(n - k) * eps;
    const double mu = free_mass / budget;
    const bool last_free_ok = p[order[k - 1]] / mu >= eps;
    const bool next_clamped = k == n || p[order[k]] / mu <= eps;
    if (last_free_ok && next_clamped) {
      for (std::size_t i = 0; i < k; ++i) q[order[i]] = p[order[i]] / mu;
      return q;
    }
  }
  return q;  // unreachable for valid inputs
}

double expected_loss(const LossSpec& loss, std::span<const double> p, const Action& a) {
  if (a.q.size() != p.size()) throw DimensionError("expected_loss: action/label mismatch");
  switch (loss.kind()) {
    case LossKind::ZeroOne: return 1.0 - p[a.argmax()];
    case LossKind::Log:
    case LossKind::ClampedLog: return cross_entropy(p, a.q);
  }
  return kInf;
}

std::vector<Action> optimal_actions(const LossSpec& loss, std::span<const double> p) {
  check_epsilon_fits(loss, p.size());
  switch (loss.kind()) {
    case LossKind::ZeroOne: {
      const double top = *std::max_element(p.begin(), p.end());
      std::vector<Action> out;
      for (std::size_t y = 0; y < p.size(); ++y) {
        if ((1.0 - p[y]) - (1.0 - top) <= kTieTol) out.push_back(Action::label(p.size(), y));
      }
      return out;
    }
    case LossKind::Log: return {Action{std::vector<double>(p.begin(), p.end())}};
    case LossKind::ClampedLog: return {Action{clamp_project(p, loss.epsilon())}};
  }
  return {};
}

double best_expected_loss(const LossSpec& loss, std::span<const double> p) {
  switch (loss.kind()) {
    case LossKind::ZeroOne: return 1.0 - *std::max_element(p.begin(), p.end());
    case LossKind::Log: return entropy(p);
    case LossKind::ClampedLog: return cross_entropy(p, clamp_project(p, loss.epsilon()));
  }
  return kInf;
}

double worst_expected_loss(const LossSpec& loss, std::span<const double> p) {
  check_epsilon_fits(loss, p.size());
  switch (loss.kind()) {
    case LossKind::ZeroOne: return 1.0 - *std::min_element(p.begin(), p.end());
    case LossKind::Log: return kInf;
    case LossKind::ClampedLog: {
      // Linear objective over the floored simplex: attained at the vertex that
      // puts the leftover mass on the least likely label.
      const double eps = loss.epsilon();
      const auto low = static_cast<std::size_t>(std::min_element(p.begin(), p.end()) - p.begin());
      std::vector<double> a(p.size(), eps);
      a[low] = 1.0 - static_cast<double>(p.size() - 1) * eps;
      return cross_entropy(p, a);
    }
  }
  return kInf;
}

World::World(FiniteDist p_d, CondKernel p_x_given_d, CondKernel p_y_given_x,
             JointTable pair_dist, LossSpec loss)
    : p_d_(std::move(p_d)),
      p_x_given_d_(std::move(p_x_given_d)),
      p_y_given_x_(std::move(p_y_given_x)),
      pair_dist_(std::move(pair_dist)),
      loss_(loss) {
  check_shapes();
}

World::World(FiniteDist p_d, CondKernel p_x_given_d, std::vector<CondKernel> p_y_given_xd,
             JointTable pair_dist, LossSpec loss)
    : p_d_(std::move(p_d)),
      p_x_given_d_(std::move(p_x_given_d)),
      p_y_given_xd_(std::move(p_y_given_xd)),
      pair_dist_(std::move(pair_dist)),
      loss_(loss) {
  const auto& kernels = *p_y_given_xd_;
  if (kernels.size() != p_d_.size()) {
    throw DimensionError("World: need one label kernel per domain");
  }
  const std::size_t nx = p_x_given_d_.n_out();
  const std::size_t ny = kernels.front().n_out();
  std::vector<double> mix(nx * ny, 0.0);
  for (std::size_t x = 0; x < nx; ++x) {
    double px = 0.0;
    for (std::size_t d = 0; d < p_d_.size(); ++d) px += p_d_[d] * p_x_given_d_(d, x);
    for (std::size_t d = 0; d < p_d_.size(); ++d) {
      if (kernels[d].n_in() != nx || kernels[d].n_out() != ny) {
        throw DimensionError("World: label kernel shape mismatch");
      }
      // Inputs without mass get an unweighted average.
      const double w = px > 0.0 ? p_d_[d] * p_x_given_d_(d, x) / px
                                : 1.0 / static_cast<double>(p_d_.size());
      for (std::size_t y = 0; y < ny; ++y) mix[x * ny + y] += w * kernels[d](x, y);
    }
  }
  p_y_given_x_ = CondKernel(nx, ny, std::move(mix));
  check_shapes();
}

void World::check_shapes() const {
  if (p_x_given_d_.n_in() != p_d_.size()) {
    throw DimensionError("World: p(X|D) rows must match the number of domains");
  }
  if (p_y_given_x_.n_in() != p_x_given_d_.n_out()) {
    throw DimensionError("World: p(Y|X) rows must match the number of inputs");
  }
  if (p_y_given_x_.n_out() < 2) throw DimensionError("World: need at least two labels");
  const auto& s = pair_dist_.shape();
  if (s.size() != 2 || s[0] != p_d_.size() || s[1] != p_d_.size()) {
    throw DimensionError("World: pair distribution must be |D| x |D|");
  }
  check_epsilon_fits(loss_, p_y_given_x_.n_out());
}

FiniteDist World::p_x() const { return pushforward(p_x_given_d_, p_d_); }

FiniteDist World::p_x_given(std::optional<std::size_t> domain) const {
  if (!domain) return p_x();
  if (*domain >= n_domains()) throw DimensionError("World: domain out of range");
  return p_x_given_d_.row_dist(*domain);
}

std::span<const double> World::label_conditional(std::size_t x,
                                                 std::optional<std::size_t> d) const {
  if (d && p_y_given_xd_) return (*p_y_given_xd_)[*d].row(x);
  return p_y_given_x_.row(x);
}

double World::joint(std::size_t d, std::size_t x, std::size_t y) const {
  return p_d_[d] * p_x_given_d_(d, x) * label_conditional(x, d)[y];
}

World World::with_loss(LossSpec loss) const {
  World w = *this;
  w.loss_ = loss;
  w.check_shapes();
  return w;
}

namespace {

bool same_action_set(const std::vector<Action>& a, const std::vector<Action>& b) {
  auto covered = [](const std::vector<Action>& from, const std::vector<Action>& into) {
    return std::all_of(from.begin(), from.end(),
                       [&](const Action& x) { return find_action(into, x).has_value(); });
  };
  return covered(a, b) && covered(b, a);
}

}  // namespace

AssumptionReport validate_world(const World& w) {
  AssumptionReport r;
  const auto& loss = w.loss();
  const auto px = w.p_x();
  const auto supp_x = support(px);

  auto unique_mode = [](std::span<const double> p) {
    return optimal_actions(LossSpec::zero_one(), p).size() == 1;
  };

  for (auto x : supp_x) {
    if (loss.kind() == LossKind::ZeroOne && !unique_mode(w.p_y_given_x().row(x))) {
      r.unique_optima = false;
      r.messages.push_back("(a) input " + std::to_string(x) + " has a tied most likely label");
    }
  }
  if (w.p_y_given_xd()) {
    for (std::size_t d = 0; d < w.n_domains(); ++d) {
      for (auto x : support(w.p_x_given_d().row(d))) {
        const auto pd = w.label_conditional(x, d);
        if (loss.kind() == LossKind::ZeroOne) {
          if (!unique_mode(pd)) {
            r.unique_optima = false;
            r.messages.push_back("(a) input " + std::to_string(x) + " in domain " +
                                 std::to_string(d) + " has a tied most likely label");
            continue;
          }
        }
        if (!r.unique_optima) continue;
        const auto local = optimal_actions(loss, pd);
        const auto global = optimal_actions(loss, w.p_y_given_x().row(x));
        if (local.size() != 1 || global.size() != 1 || !local[0].same_as(global[0])) {
          r.generalized_covariate_shift = false;
          r.messages.push_back("(b) domain " + std::to_string(d) + " disagrees with the Bayes "
                               "predictor at input " + std::to_string(x));
        }
      }
    }
  }

  for (std::size_t d = 0; d < w.n_domains(); ++d) {
    if (w.p_d()[d] <= kSupportTol) {
      r.domain_full_support = false;
      r.messages.push_back("domain " + std::to_string(d) + " has zero marginal mass");
    }
  }
  for (double m : w.pair_dist().mass()) {
    if (m <= kSupportTol) {
      r.pair_full_support = false;
      r.messages.push_back("(e) the pair distribution lacks full support");
      break;
    }
  }

  if (r.unique_optima) {
    const auto f = bayes_predictor(w);
    const auto image = bayes_image(w, f);
    if (image.size() < 2) {
      r.nontrivial_image = false;
      r.messages.push_back("(d) the Bayes image has fewer than two actions");
    }
    for (std::size_t d = 0; d < w.n_domains(); ++d) {
      if (!same_action_set(bayes_image(w, f, d), image)) {
        r.constant_bayes_image = false;
        r.messages.push_back("(c) domain " + std::to_string(d) +
                             " does not reach the full Bayes image");
      }
    }
  } else {
    r.messages.push_back("(c),(d) skipped: the Bayes predictor is undefined");
  }
  return r;
}

BayesPredictor bayes_predictor(const World& w) {
  BayesPredictor f;
  const auto px = w.p_x();
  f.actions.reserve(w.n_inputs());
  for (std::size_t x = 0; x < w.n_inputs(); ++x) {
    auto acts = optimal_actions(w.loss(), w.p_y_given_x().row(x));
    if (acts.size() > 1 && px[x] > kSupportTol) {
      throw AssumptionViolation("bayes_predictor: tied 0-1 optimum at input " +
                                std::to_string(x));
    }
    f.actions.push_back(std::move(acts.front()));
  }
  return f;
}

double bayes_risk_from_x(const World& w, std::optional<std::size_t> domain) {
  const auto f = bayes_predictor(w);
  auto risk_in = [&](std::size_t d) {
    double r = 0.0;
    for (std::size_t x = 0; x < w.n_inputs(); ++x) {
      const double m = w.p_x_given_d()(d, x);
      if (m <= 0.0) continue;
      r += m * expected_loss(w.loss(), w.label_conditional(x, d), f.actions[x]);
    }
    return r;
  };
  if (domain) {
    if (*domain >= w.n_domains()) throw DimensionError("bayes_risk_from_x: bad domain");
    return risk_in(*domain);
  }
  double r = 0.0;
  for (std::size_t d = 0; d < w.n_domains(); ++d) {
    if (w.p_d()[d] > 0.0) r += w.p_d()[d] * risk_in(d);
  }
  return r;
}

std::optional<std::size_t> find_action(const std::vector<Action>& image, const Action& a) {
  for (std::size_t i = 0; i < image.size(); ++i) {
    if (image[i].same_as(a)) return i;
  }
  return std::nullopt;
}

std::vector<Action> bayes_image(const World& w, const BayesPredictor& f,
                                std::optional<std::size_t> domain) {
  std::vector<Action> image;
  for (auto x : support(w.p_x_given(domain))) {
    if (!find_action(image, f.actions[x])) image.push_back(f.actions[x]);
  }
  return image;
}

std::vector<Action> bayes_image(const World& w, std::optional<std::size_t> domain) {
  return bayes_image(w, bayes_predictor(w), domain);
}

namespace {

std::vector<double> mixed_dirichlet(Rng& rng, std::size_t n) {
  auto p = rng.dirichlet_flat(n);
  for (auto& v : p) v = 0.5 * v + 0.5 / static_cast<double>(n);
  return p;
}

// Dirichlet draw whose largest entry is moved to `top`, with a clear margin.
std::optional<std::vector<double>> conditional_with_mode(Rng& rng, std::size_t n,
                                                         std::size_t top) {
  auto p = rng.dirichlet_flat(n);
  auto sorted = p;
  std::sort(sorted.rbegin(), sorted.rend());
  if (sorted[0] - sorted[1] < 1e-3) return std::nullopt;
  const auto m = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  std::swap(p[m], p[top]);
  return p;
}

}  // namespace

World random_world(std::uint64_t seed, const WorldSizes& sizes, const WorldConstraints& c) {
  if (sizes.n_domains < 1 || sizes.n_labels < 2 || sizes.n_inputs < 2) {
    throw std::invalid_argument("random_world: need >= 1 domain, >= 2 labels, >= 2 inputs");
  }
  if (c.adversarial && sizes.n_domains < 2) {
    throw AssumptionViolation("random_world: an adversarial world needs two domains");
  }
  const std::size_t nd = sizes.n_domains, nx = sizes.n_inputs, ny = sizes.n_labels;
  std::size_t k_hi = c.loss.kind() == LossKind::ZeroOne ? std::min(ny, nx) : nx;
  if (c.max_image) k_hi = std::min(k_hi, *c.max_image);
  if (k_hi < 2) throw AssumptionViolation("random_world: the Bayes image cannot reach two actions");

  Rng rng(seed);
  constexpr int kMaxRejections = 10000;
  for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
    const FiniteDist p_d(mixed_dirichlet(rng, nd));
    const std::size_t k = 2 + rng.uniform_int(k_hi - 1);

    std::vector<std::size_t> cls(nx);
    for (std::size_t x = 0; x < nx; ++x) cls[x] = x < k ? x : rng.uniform_int(k);
    rng.shuffle(cls);

    // Label conditionals, one per input (0-1) or one prototype per class.
    std::vector<std::vector<double>> rows(nx);
    std::vector<std::vector<std::vector<double>>> per_domain;
    bool ok = true;
    if (c.loss.kind() == LossKind::ZeroOne) {
      std::vector<std::size_t> labels(ny);
      std::iota(labels.begin(), labels.end(), std::size_t{0});
      rng.shuffle(labels);
      for (std::size_t x = 0; x < nx && ok; ++x) {
        auto r = conditional_with_mode(rng, ny, labels[cls[x]]);
        if (!r) ok = false;
        else rows[x] = *r;
      }
      if (ok && c.per_domain_labels) {
        per_domain.assign(nd, std::vector<std::vector<double>>(nx));
        for (std::size_t d = 0; d < nd && ok; ++d) {
          for (std::size_t x = 0; x < nx && ok; ++x) {
            auto r = conditional_with_mode(rng, ny, labels[cls[x]]);
            if (!r) ok = false;
            else per_domain[d][x] = *r;
          }
        }
      }
    } else {
      std::vector<std::vector<double>> proto(k);
      for (auto& p : proto) p = mixed_dirichlet(rng, ny);
      for (std::size_t a = 0; a < k && ok; ++a) {
        for (std::size_t b = a + 1; b < k; ++b) {
          const auto qa = optimal_actions(c.loss, proto[a]).front();
          const auto qb = optimal_actions(c.loss, proto[b]).front();
          if (linf_distance(qa.q, qb.q) < 1e-6) ok = false;
        }
      }
      for (std::size_t x = 0; x < nx; ++x) rows[x] = proto[cls[x]];
    }
    if (!ok) continue;

    // Domain supports: random subsets that reach every class.
    std::vector<std::vector<bool>> in(nd, std::vector<bool>(nx, false));
    for (std::size_t d = 0; d < nd; ++d) {
      for (std::size_t x = 0; x < nx; ++x) in[d][x] = rng.bernoulli(c.support_density);
    }
    auto members_of = [&](std::size_t cl) {
      std::vector<std::size_t> m;
      for (std::size_t x = 0; x < nx; ++x) {
        if (cls[x] == cl) m.push_back(x);
      }
      return m;
    };
    for (std::size_t d = 0; d < nd; ++d) {
      for (std::size_t cl = 0; cl < k; ++cl) {
        const auto m = members_of(cl);
        if (std::none_of(m.begin(), m.end(), [&](std::size_t x) { return in[d][x]; })) {
          in[d][m[rng.uniform_int(m.size())]] = true;
        }
      }
    }
    if (c.adversarial) {
      const std::size_t victim = rng.uniform_int(k);
      const std::size_t keeper = rng.uniform_int(nd);
      for (std::size_t x = 0; x < nx; ++x) {
        if (cls[x] != victim) continue;
        for (std::size_t d = 0; d < nd; ++d) in[d][x] = (d == keeper);
      }
    }
    for (std::size_t x = 0; x < nx; ++x) {
      bool any = false;
      for (std::size_t d = 0; d < nd; ++d) any = any || in[d][x];
      if (!any) {
        const std::size_t d = rng.uniform_int(nd);
        in[d][x] = true;
      }
    }

    std::vector<double> pxd(nd * nx, 0.0);
    for (std::size_t d = 0; d < nd; ++d) {
      std::vector<std::size_t> supp;
      for (std::size_t x = 0; x < nx; ++x) {
        if (in[d][x]) supp.push_back(x);
      }
      const auto w = mixed_dirichlet(rng, supp.size());
      for (std::size_t i = 0; i < supp.size(); ++i) pxd[d * nx + supp[i]] = w[i];
    }

    CondKernel p_x_given_d(nd, nx, std::move(pxd));
    JointTable pair = product(p_d, p_d);
    World w = [&] {
      if (!per_domain.empty()) {
        std::vector<CondKernel> kernels;
        for (const auto& pdk : per_domain) kernels.emplace_back(pdk);
        return World(p_d, p_x_given_d, std::move(kernels), pair, c.loss);
      }
      return World(p_d, p_x_given_d, CondKernel(rows), pair, c.loss);
    }();

    const auto report = validate_world(w);
    if (!c.adversarial && report.all_pass()) return w;
    if (c.adversarial && report.unique_optima && !report.constant_bayes_image) return w;
  }
  throw AssumptionViolation("random_world: constraints unsatisfiable after 10^4 rejections");
}

void to_json(nlohmann::json& j, const LossSpec& l) {
  j = {{"kind", l.name()}};
  if (l.kind() == LossKind::ClampedLog) j["epsilon"] = l.epsilon();
}

void from_json(const nlohmann::json& j, LossSpec& l) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "zero_one") l = LossSpec::zero_one();
  else if (kind == "log") l = LossSpec::log();
  else if (kind == "clamped_log") l = LossSpec::clamped_log(j.value("epsilon", 1e-3));
  else throw ParseError("unknown loss kind '" + kind + "'");
}

void to_json(nlohmann::json& j, const World& w) {
  std::vector<std::vector<double>> pair_rows(w.n_domains());
  for (std::size_t a = 0; a < w.n_domains(); ++a) {
    for (std::size_t b = 0; b < w.n_domains(); ++b) pair_rows[a].push_back(w.pair_dist().at({a, b}));
  }
  j = {{"p_D", w.p_d()},
       {"p_X_given_D", w.p_x_given_d()},
       {"p_Y_given_X", w.p_y_given_x()},
       {"pair_dist", {{"rows", pair_rows}}},
       {"loss", w.loss()}};
  if (w.p_y_given_xd()) j["p_Y_given_XD"] = *w.p_y_given_xd();
}

World world_from_json(const nlohmann::json& j) {
  auto p_d = j.at("p_D").get<FiniteDist>();
  auto p_xd = j.at("p_X_given_D").get<CondKernel>();
  auto pair = j.at("pair_dist").get<JointTable>();
  auto loss = j.at("loss").get<LossSpec>();
  if (j.contains("p_Y_given_XD")) {
    return World(std::move(p_d), std::move(p_xd), j.at("p_Y_given_XD").get<std::vector<CondKernel>>(),
                 std::move(pair), loss);
  }
  return World(std::move(p_d), std::move(p_xd), j.at("p_Y_given_X").get<CondKernel>(),
               std::move(pair), loss);
}

void to_json(nlohmann::json& j, const AssumptionReport& r) {
  j = {{"unique_optima", r.unique_optima},
       {"generalized_covariate_shift", r.generalized_covariate_shift},
       {"constant_bayes_image", r.constant_bayes_image},
       {"nontrivial_image", r.nontrivial_image},
       {"pair_full_support", r.pair_full_support},
       {"domain_full_support", r.domain_full_support},
       {"all_pass", r.all_pass()},
       {"messages", r.messages}};
}

}  // namespace idg
