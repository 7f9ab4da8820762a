#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace idg::ad {

// Dense row-major matrix; vectors are 1 x n or n x 1, scalars 1 x 1.
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Tensor(std::size_t r, std::size_t c, std::vector<double> d);
  static Tensor scalar(double v) { return Tensor(1, 1, v); }

  std::size_t size() const { return data.size(); }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  double item() const;
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
  double norm() const;
};

class Tape;

// Handle to a node on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* t, std::size_t id) : tape_(t), id_(id) {}

  const Tensor& value() const;
  const Tensor& grad() const;
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  Var leaf(Tensor value);
  Var constant(Tensor value) { return leaf(std::move(value)); }

  // Records an op: `back` reads the output gradient and accumulates into inputs.
  Var record(Tensor value, std::function<void(Tape&, std::size_t self)> back);

  // Zeroes all gradients then propagates d out / d node. `out` must be 1 x 1.
  void backward(const Var& out);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  Tensor& grad_mut(std::size_t id) { return nodes_[id].grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&, std::size_t)> back;
  };
  std::vector<Node> nodes_;
};

Var matmul(const Var& a, const Var& b);
// Same shape, or b a 1 x cols row broadcast over a's rows.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var exp(const Var& a);
Var log(const Var& a);
Var tanh(const Var& a);
Var relu(const Var& a);
Var softplus(const Var& a);
Var sum(const Var& a);
// axis 0 -> 1 x cols, axis 1 -> rows x 1.
Var sum(const Var& a, int axis);
Var mean(const Var& a);
Var logsumexp(const Var& a, int axis);
// log sum_j w_ij exp(a_ij) along axis 1 over entries with w_ij > 0. Throws on
// a row with no positive weight.
Var masked_logsumexp(const Var& a, const Tensor& weights);
// mean_i w_i (logsumexp_j z_ij - z_{i,t_i}) / mean w, or the plain mean.
Var softmax_cross_entropy(const Var& logits, const std::vector<std::size_t>& targets,
                          const std::vector<double>& weights = {});
Var gather_rows(const Var& a, const std::vector<std::size_t>& rows);
// Per-row column pick: out_i = a(i, cols[i]), rows x 1.
Var pick(const Var& a, const std::vector<std::size_t>& cols);
Var concat_cols(const Var& a, const Var& b);
Var transpose(const Var& a);
Var l2_normalize_rows(const Var& a, double eps = 1e-12);
// Elementwise KL(N(mq, e^lq) || N(mp, e^lp)); p parameters may be 1 x cols rows.
Var gaussian_kl(const Var& mq, const Var& lq, const Var& mp, const Var& lp);
// log[F((z-mu)/s + 0.5/s) - F((z-mu)/s - 0.5/s)], F logistic, s = exp(log_s).
// mu and log_s are 1 x cols rows broadcast over z's rows.
Var logistic_bin_logprob(const Var& z, const Var& mu, const Var& log_s);

// Named parameter tensors.
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Tensor> values;

  void add(std::string name, Tensor t) {
    names.push_back(std::move(name));
    values.push_back(std::move(t));
  }
  std::size_t count() const;
  std::size_t index(const std::string& name) const;
};

class Sgd {
 public:
  explicit Sgd(double lr) : lr_(lr) {}
  void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, double lr_scale = 1.0);

 private:
  double lr_;
};

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}
  void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, double lr_scale = 1.0);
  std::uint64_t steps() const { return t_; }

  nlohmann::json state() const;
  void load_state(const nlohmann::json& j);

 private:
  double lr_, b1_, b2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

// 0.5 (1 + cos(pi step / total)) times base; base at step 0, 0 at total.
double cosine_lr(double base, std::uint64_t step, std::uint64_t total);

// <prefix>.bin holds little-endian doubles; <prefix>.json the names and shapes.
void save_checkpoint(const std::string& prefix, const ParamSet& p,
                     const nlohmann::json& extra = nlohmann::json::object());
ParamSet load_checkpoint(const std::string& prefix, nlohmann::json* extra = nullptr);

// Builds the scalar loss from leaf variables (one per parameter).
using LossBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheck {
  double max_rel_error = 0.0;
  std::vector<double> per_param;
};

// Central differences with step h against backward(); relative error per
// tensor is ||a - f|| / max(||a||, ||f||, 1e-8).
GradCheck gradient_check(const LossBuilder& f, const std::vector<Tensor>& params, double h = 1e-4);

// Runs the builder once and returns (loss, gradients).
std::pair<double, std::vector<Tensor>> value_and_grad(const LossBuilder& f,
                                                     const std::vector<Tensor>& params);

}  // namespace idg::ad
