#include "idg/autodiff.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>

#include "idg/errors.hpp"

namespace idg::ad {

Tensor::Tensor(std::size_t r, std::size_t c, std::vector<double> d)
    : rows(r), cols(c), data(std::move(d)) {
  if (data.size() != r * c) throw DimensionError("tensor data does not match its shape");
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() needs a 1 x 1 tensor");
  return data[0];
}

double Tensor::norm() const {
  double s = 0.0;
  for (double v : data) s += v * v;
  return std::sqrt(s);
}

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }

Var Tape::leaf(Tensor value) { return record(std::move(value), nullptr); }

Var Tape::record(Tensor value, std::function<void(Tape&, std::size_t)> back) {
  Tensor g(value.rows, value.cols);
  nodes_.push_back({std::move(value), std::move(g), std::move(back)});
  return {this, nodes_.size() - 1};
}

void Tape::backward(const Var& out) {
  if (out.tape() != this) throw DimensionError("output belongs to another tape");
  if (value(out.id()).size() != 1) throw DimensionError("backward needs a scalar output");
  for (auto& n : nodes_) std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
  nodes_[out.id()].grad.data[0] = 1.0;
  // Creation order is a topological order.
  for (std::size_t id = out.id() + 1; id-- > 0;)
    if (nodes_[id].back) nodes_[id].back(*this, id);
}

namespace {

Tape& same_tape(const Var& a, const Var& b) {
  if (a.tape() != b.tape()) throw DimensionError("variables live on different tapes");
  return *a.tape();
}

bool broadcast_row(const Tensor& a, const Tensor& b) {
  if (a.same_shape(b)) return false;
  if (b.rows == 1 && b.cols == a.cols) return true;
  throw DimensionError("shape mismatch: " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                       " vs " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
}

template <class F, class D>
Var unary(const Var& a, F f, D dfdx) {
  Tape& t = *a.tape();
  const Tensor& x = a.value();
  Tensor out(x.rows, x.cols);
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = f(x.data[i]);
  const std::size_t ia = a.id();
  return t.record(std::move(out), [ia, dfdx](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& x = tp.value(ia);
    const Tensor& y = tp.value(self);
    Tensor& ga = tp.grad_mut(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * dfdx(x.data[i], y.data[i]);
  });
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_value(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols != B.rows) throw DimensionError("matmul inner dimensions differ");
  Tensor C(A.rows, B.cols);
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t k = 0; k < A.cols; ++k) {
      const double aik = A(i, k);
      for (std::size_t j = 0; j < B.cols; ++j) C(i, j) += aik * B(k, j);
    }
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(C), [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& G = tp.grad(self);
    const Tensor& A = tp.value(ia);
    const Tensor& B = tp.value(ib);
    Tensor& GA = tp.grad_mut(ia);
    for (std::size_t i = 0; i < A.rows; ++i)
      for (std::size_t k = 0; k < A.cols; ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < B.cols; ++j) s += G(i, j) * B(k, j);
        GA(i, k) += s;
      }
    Tensor& GB = tp.grad_mut(ib);
    for (std::size_t i = 0; i < A.rows; ++i)
      for (std::size_t k = 0; k < A.cols; ++k) {
        const double aik = A(i, k);
        for (std::size_t j = 0; j < B.cols; ++j) GB(k, j) += aik * G(i, j);
      }
  });
}

namespace {

// out = a + sign * b with optional row broadcast of b.
Var add_signed(const Var& a, const Var& b, double sign) {
  Tape& t = same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const bool bc = broadcast_row(A, B);
  Tensor out = A;
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) out(i, j) += sign * (bc ? B(0, j) : B(i, j));
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), [ia, ib, bc, sign](Tape& tp, std::size_t self) {
    const Tensor& G = tp.grad(self);
    Tensor& GA = tp.grad_mut(ia);
    for (std::size_t i = 0; i < G.size(); ++i) GA.data[i] += G.data[i];
    Tensor& GB = tp.grad_mut(ib);
    for (std::size_t i = 0; i < G.rows; ++i)
      for (std::size_t j = 0; j < G.cols; ++j) (bc ? GB(0, j) : GB(i, j)) += sign * G(i, j);
  });
}

}  // namespace

Var add(const Var& a, const Var& b) { return add_signed(a, b, 1.0); }
Var sub(const Var& a, const Var& b) { return add_signed(a, b, -1.0); }

Var mul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const bool bc = broadcast_row(A, B);
  Tensor out(A.rows, A.cols);
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) out(i, j) = A(i, j) * (bc ? B(0, j) : B(i, j));
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), [ia, ib, bc](Tape& tp, std::size_t self) {
    const Tensor& G = tp.grad(self);
    const Tensor& A = tp.value(ia);
    const Tensor& B = tp.value(ib);
    Tensor& GA = tp.grad_mut(ia);
    Tensor& GB = tp.grad_mut(ib);
    for (std::size_t i = 0; i < G.rows; ++i)
      for (std::size_t j = 0; j < G.cols; ++j) {
        const double bij = bc ? B(0, j) : B(i, j);
        GA(i, j) += G(i, j) * bij;
        (bc ? GB(0, j) : GB(i, j)) += G(i, j) * A(i, j);
      }
  });
}

Var scale(const Var& a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(const Var& a, double c) {
  return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var exp(const Var& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var tanh(const Var& a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var relu(const Var& a) {
  return unary(a, [](double x) { return x > 0 ? x : 0.0; },
               [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var softplus(const Var& a) {
  return unary(a, softplus_value, [](double x, double) { return sigmoid(x); });
}

Var sum(const Var& a) {
  Tape& t = *a.tape();
  double s = 0.0;
  for (double v : a.value().data) s += v;
  const std::size_t ia = a.id();
  return t.record(Tensor::scalar(s), [ia](Tape& tp, std::size_t self) {
    const double g = tp.grad(self).data[0];
    for (double& v : tp.grad_mut(ia).data) v += g;
  });
}

Var sum(const Var& a, int axis) {
  if (axis != 0 && axis != 1) throw DimensionError("axis must be 0 or 1");
  Tape& t = *a.tape();
  const Tensor& A = a.value();
  Tensor out = axis == 0 ? Tensor(1, A.cols) : Tensor(A.rows, 1);
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) out.data[axis == 0 ? j : i] += A(i, j);
  const std::size_t ia = a.id();
  return t.record(std::move(out), [ia, axis](Tape& tp, std::size_t self) {
    const Tensor& G = tp.grad(self);
    Tensor& GA = tp.grad_mut(ia);
    for (std::size_t i = 0; i < GA.rows; ++i)
      for (std::size_t j = 0; j < GA.cols; ++j) GA(i, j) += G.data[axis == 0 ? j : i];
  });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var logsumexp(const Var& a, int axis) {
  if (axis != 0 && axis != 1) throw DimensionError("axis must be 0 or 1");
  const Tensor& A = a.value();
  if (axis == 0) return transpose(logsumexp(transpose(a), 1));
  return masked_logsumexp(a, Tensor(A.rows, A.cols, 1.0));
}

Var masked_logsumexp(const Var& a, const Tensor& w) {
  Tape& t = *a.tape();
  const Tensor& A = a.value();
  if (!A.same_shape(w)) throw DimensionError("mask shape differs from input");
  Tensor out(A.rows, 1);
  for (std::size_t i = 0; i < A.rows; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < A.cols; ++j)
      if (w(i, j) > 0) m = std::max(m, A(i, j));
    if (std::isinf(m) && m < 0)
      throw DimensionError("masked_logsumexp: row " + std::to_string(i) + " is fully masked");
    double s = 0.0;
    for (std::size_t j = 0; j < A.cols; ++j)
      if (w(i, j) > 0) s += w(i, j) * std::exp(A(i, j) - m);
    out(i, 0) = m + std::log(s);
  }
  const std::size_t ia = a.id();
  return t.record(std::move(out), [ia, w](Tape& tp, std::size_t self) {
    const Tensor& G = tp.grad(self);
    const Tensor& A = tp.value(ia);
    const Tensor& Y = tp.value(self);
    Tensor& GA = tp.grad_mut(ia);
    for (std::size_t i = 0; i < A.rows; ++i)
      for (std::size_t j = 0; j < A.cols; ++j)
        if (w(i, j) > 0) GA(i, j) += G(i, 0) * w(i, j) * std::exp(A(i, j) - Y(i, 0));
  });
}

Var softmax_cross_entropy(const Var& logits, const std::vector<std::size_t>& targets,
                          const std::vector<double>& weights) {
  Tape& t = *logits.tape();
  const Tensor& Z = logits.value();
  if (targets.size() != Z.rows) throw DimensionError("one target per row required");
  if (!weights.empty() && weights.size() != Z.rows)
    throw DimensionError("one weight per row required");
  std::vector<double> w = weights.empty() ? std::vector<double>(Z.rows, 1.0) : weights;
  double wsum = 0.0;
  for (double v : w) wsum += v;
  if (!(wsum > 0)) throw DimensionError("weights sum to zero");
  Tensor probs(Z.rows, Z.cols);
  double loss = 0.0;
  for (std::size_t i = 0; i < Z.rows; ++i) {
    if (targets[i] >= Z.cols) throw DimensionError("target out of range");
    double m = Z(i, 0);
    for (std::size_t j = 1; j < Z.cols; ++j) m = std::max(m, Z(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < Z.cols; ++j) s += std::exp(Z(i, j) - m);
    const double lse = m + std::log(s);
    for (std::size_t j = 0; j < Z.cols; ++j) probs(i, j) = std::exp(Z(i, j) - lse);
    if (w[i] != 0.0) loss += w[i] * (lse - Z(i, targets[i]));
  }
  loss /= wsum;
  const std::size_t iz = logits.id();
  return t.record(Tensor::scalar(loss), [iz, targets, w = std::move(w), wsum,
                                         probs = std::move(probs)](Tape& tp, std::size_t self) {
    const double g = tp.grad(self).data[0];
    Tensor& GZ = tp.grad_mut(iz);
    for (std::size_t i = 0; i < GZ.rows; ++i) {
      if (w[i] == 0.0) continue;
      const double c = g * w[i] / wsum;
      for (std::size_t j = 0; j < GZ.cols; ++j)
        GZ(i, j) += c * (probs(i, j) - (j == targets[i] ? 1.0 : 0.0));
    }
  });
}

Var gather_rows(const Var& a, const std::vector<std::size_t>& rows) {
  Tape& t = *a.tape();
  const Tensor& A = a.value();
  Tensor out(rows.size(), A.cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= A.rows) throw DimensionError("gather row out of range");
    for (std::size_t j = 0; j < A.cols; ++j) out(r, j) = A(rows[r], j);
  }
  const std::size_t ia = a.id();
  return t.record(std::move(out), [ia, rows](Tape& tp, std::size_t self) {
    const Tensor& G = tp.grad(self);
    Tensor& GA = tp.grad_mut(ia);
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t j = 0; j < G.cols; ++j) GA(rows[r], j) += G(r, j);
  });
}

Var pick(const Var& a, const std::vector<std::size_t>& cols) {
  Tape& t = *a.tape();
  const Tensor& A = a.value();
  if (cols.size() != A.rows) throw DimensionError("one column per row required");
  Tensor out(A.rows, 1);
  for (std::size_t i = 0; i < A.rows; ++i) {
    if (cols[i] >= A.cols) throw DimensionError("pick column out of range");
    out(i, 0) = A(i, cols[i]);
  }
  const std::size_t ia = a.id();
  return t.record(std::move(out), [ia, cols](Tape& tp, std::size_t self) {
    const Tensor& G = tp.grad(self);
    Tensor& GA = tp.grad_mut(ia);
    for (std::size_t i = 0; i < cols.size(); ++i) GA(i, cols[i]) += G(i, 0);
  });
}

Var concat_cols(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rows != B.rows) throw DimensionError("concat needs equal row counts");
  Tensor out(A.rows, A.cols + B.cols);
  for (std::size_t i = 0; i < A.rows; ++i) {
    for (std::size_t j = 0; j < A.cols; ++j) out(i, j) = A(i, j);
    for (std::size_t j = 0; j < B.cols; ++j) out(i, A.cols + j) = B(i, j);
  }
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& G = tp.grad(self);
    Tensor& GA = tp.grad_mut(ia);
    Tensor& GB = tp.grad_mut(ib);
    for (std::size_t i = 0; i < G.rows; ++i) {
      for (std::size_t j = 0; j < GA.cols; ++j) GA(i, j) += G(i, j);
      for (std::size_t j = 0; j < GB.cols; ++j) GB(i, j) += G(i, GA.cols + j);
    }
  });
}

Var transpose(const Var& a) {
  Tape& t = *a.tape();
  const Tensor& A = a.value();
  Tensor out(A.cols, A.rows);
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) out(j, i) = A(i, j);
  const std::size_t ia = a.id();
  return t.record(std::move(out), [ia](Tape& tp, std::size_t self) {
    const Tensor& G = tp.grad(self);
    Tensor& GA = tp.grad_mut(ia);
    for (std::size_t i = 0; i < GA.rows; ++i)
      for (std::size_t j = 0; j < GA.cols; ++j) GA(i, j) += G(j, i);
  });
}

Var l2_normalize_rows(const Var& a, double eps) {
  Tape& t = *a.tape();
  const Tensor& A = a.value();
  Tensor out(A.rows, A.cols);
  std::vector<double> norms(A.rows);
  for (std::size_t i = 0; i < A.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < A.cols; ++j) s += A(i, j) * A(i, j);
    norms[i] = std::max(std::sqrt(s), eps);
    for (std::size_t j = 0; j < A.cols; ++j) out(i, j) = A(i, j) / norms[i];
  }
  const std::size_t ia = a.id();
  return t.record(std::move(out), [ia, norms = std::move(norms)](Tape& tp, std::size_t self) {
    const Tensor& G = tp.grad(self);
    const Tensor& Y = tp.value(self);
    Tensor& GA = tp.grad_mut(ia);
    for (std::size_t i = 0; i < G.rows; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < G.cols; ++j) dot += G(i, j) * Y(i, j);
      for (std::size_t j = 0; j < G.cols; ++j) GA(i, j) += (G(i, j) - Y(i, j) * dot) / norms[i];
    }
  });
}

Var gaussian_kl(const Var& mq, const Var& lq, const Var& mp, const Var& lp) {
  Tape& t = same_tape(mq, lq);
  same_tape(mq, mp);
  same_tape(mq, lp);
  const Tensor& MQ = mq.value();
  const Tensor& LQ = lq.value();
  if (!MQ.same_shape(LQ)) throw DimensionError("posterior mean and log-variance differ in shape");
  const bool bc = broadcast_row(MQ, mp.value());
  if (!mp.value().same_shape(lp.value()))
    throw DimensionError("prior mean and log-variance differ in shape");
  const Tensor& MP = mp.value();
  const Tensor& LP = lp.value();
  Tensor out(MQ.rows, MQ.cols);
  for (std::size_t i = 0; i < MQ.rows; ++i)
    for (std::size_t j = 0; j < MQ.cols; ++j) {
      const double m = bc ? MP(0, j) : MP(i, j);
      const double l = bc ? LP(0, j) : LP(i, j);
      const double d = MQ(i, j) - m;
      out(i, j) = 0.5 * ((l - LQ(i, j)) + (std::exp(LQ(i, j)) + d * d) / std::exp(l) - 1.0);
    }
  const std::size_t a = mq.id(), b = lq.id(), c = mp.id(), e = lp.id();
  return t.record(std::move(out), [a, b, c, e, bc](Tape& tp, std::size_t self) {
    const Tensor& G = tp.grad(self);
    const Tensor& MQ = tp.value(a);
    const Tensor& LQ = tp.value(b);
    const Tensor& MP = tp.value(c);
    const Tensor& LP = tp.value(e);
    for (std::size_t i = 0; i < G.rows; ++i)
      for (std::size_t j = 0; j < G.cols; ++j) {
        const std::size_t pi = bc ? 0 : i;
        const double d = MQ(i, j) - MP(pi, j);
        const double ivp = std::exp(-LP(pi, j));
        const double vq = std::exp(LQ(i, j));
        const double g = G(i, j);
        tp.grad_mut(a)(i, j) += g * d * ivp;
        tp.grad_mut(b)(i, j) += g * 0.5 * (vq * ivp - 1.0);
        tp.grad_mut(c)(pi, j) -= g * d * ivp;
        tp.grad_mut(e)(pi, j) += g * 0.5 * (1.0 - (vq + d * d) * ivp);
      }
  });
}

Var logistic_bin_logprob(const Var& z, const Var& mu, const Var& log_s) {
  Tape& t = same_tape(z, mu);
  same_tape(z, log_s);
  const Tensor& Z = z.value();
  const Tensor& MU = mu.value();
  const Tensor& LS = log_s.value();
  if (MU.rows != 1 || MU.cols != Z.cols || !MU.same_shape(LS))
    throw DimensionError("entropy model parameters must be 1 x dims");
  Tensor out(Z.rows, Z.cols);
  Tensor da(Z.rows, Z.cols), db(Z.rows, Z.cols), av(Z.rows, Z.cols), bv(Z.rows, Z.cols);
  for (std::size_t i = 0; i < Z.rows; ++i)
    for (std::size_t j = 0; j < Z.cols; ++j) {
      const double s = std::exp(LS(0, j));
      const double u = (Z(i, j) - MU(0, j)) / s;
      const double a = u + 0.5 / s, b = u - 0.5 / s, gap = 1.0 / s;
      out(i, j) = -softplus_value(-a) - softplus_value(b) + std::log(-std::expm1(-gap));
      const double r = 1.0 / std::expm1(gap);
      da(i, j) = sigmoid(-a) + r;
      db(i, j) = -sigmoid(b) - r;
      av(i, j) = a;
      bv(i, j) = b;
    }
  const std::size_t iz = z.id(), im = mu.id(), il = log_s.id();
  return t.record(std::move(out), [=, da = std::move(da), db = std::move(db), av = std::move(av),
                                   bv = std::move(bv)](Tape& tp, std::size_t self) {
    const Tensor& G = tp.grad(self);
    const Tensor& LS = tp.value(il);
    for (std::size_t i = 0; i < G.rows; ++i)
      for (std::size_t j = 0; j < G.cols; ++j) {
        const double inv_s = std::exp(-LS(0, j));
        const double g = G(i, j);
        const double dz = (da(i, j) + db(i, j)) * inv_s;
        tp.grad_mut(iz)(i, j) += g * dz;
        tp.grad_mut(im)(0, j) -= g * dz;
        tp.grad_mut(il)(0, j) -= g * (da(i, j) * av(i, j) + db(i, j) * bv(i, j));
      }
  });
}

std::size_t ParamSet::count() const {
  std::size_t n = 0;
  for (const auto& t : values) n += t.size();
  return n;
}

std::size_t ParamSet::index(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  throw DimensionError("no parameter named '" + name + "'");
}

void Sgd::step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, double lr_scale) {
  if (params.size() != grads.size()) throw DimensionError("one gradient per parameter");
  for (std::size_t p = 0; p < params.size(); ++p)
    for (std::size_t i = 0; i < params[p].size(); ++i)
      params[p].data[i] -= lr_ * lr_scale * grads[p].data[i];
}

void Adam::step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, double lr_scale) {
  if (params.size() != grads.size()) throw DimensionError("one gradient per parameter");
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.rows, p.cols);
      v_.emplace_back(p.rows, p.cols);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t p = 0; p < params.size(); ++p)
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double g = grads[p].data[i];
      double& m = m_[p].data[i];
      double& v = v_[p].data[i];
      m = b1_ * m + (1.0 - b1_) * g;
      v = b2_ * v + (1.0 - b2_) * g * g;
      params[p].data[i] -= lr_ * lr_scale * (m / c1) / (std::sqrt(v / c2) + eps_);
    }
}

nlohmann::json Adam::state() const {
  nlohmann::json m = nlohmann::json::array(), v = nlohmann::json::array();
  for (std::size_t p = 0; p < m_.size(); ++p) {
    m.push_back({{"rows", m_[p].rows}, {"cols", m_[p].cols}, {"data", m_[p].data}});
    v.push_back({{"rows", v_[p].rows}, {"cols", v_[p].cols}, {"data", v_[p].data}});
  }
  return {{"lr", lr_}, {"beta1", b1_}, {"beta2", b2_}, {"eps", eps_}, {"t", t_}, {"m", m}, {"v", v}};
}

void Adam::load_state(const nlohmann::json& j) {
  lr_ = j.at("lr");
  b1_ = j.at("beta1");
  b2_ = j.at("beta2");
  eps_ = j.at("eps");
  t_ = j.at("t");
  m_.clear();
  v_.clear();
  for (const auto& e : j.at("m")) m_.emplace_back(e.at("rows"), e.at("cols"), e.at("data").get<std::vector<double>>());
  for (const auto& e : j.at("v")) v_.emplace_back(e.at("rows"), e.at("cols"), e.at("data").get<std::vector<double>>());
}

double cosine_lr(double base, std::uint64_t step, std::uint64_t total) {
  if (total == 0) return base;
  const double f = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * f));
}

namespace {

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  std::uint64_t r = 0;
  for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xFF) << (8 * (7 - i));
  return r;
}

}  // namespace

void save_checkpoint(const std::string& prefix, const ParamSet& p, const nlohmann::json& extra) {
  std::ofstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw Error("cannot write " + prefix + ".bin");
  nlohmann::json manifest = {{"format", "f64le"}, {"count", p.count()}};
  nlohmann::json params = nlohmann::json::array();
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    params.push_back({{"name", p.names[i]}, {"rows", p.values[i].rows}, {"cols", p.values[i].cols}});
    for (double v : p.values[i].data) {
      const std::uint64_t w = to_le(std::bit_cast<std::uint64_t>(v));
      bin.write(reinterpret_cast<const char*>(&w), sizeof w);
    }
  }
  manifest["params"] = params;
  if (!extra.empty()) manifest["extra"] = extra;
  std::ofstream js(prefix + ".json");
  if (!js) throw Error("cannot write " + prefix + ".json");
  js << manifest.dump(2) << "\n";
}

ParamSet load_checkpoint(const std::string& prefix, nlohmann::json* extra) {
  std::ifstream js(prefix + ".json");
  if (!js) throw Error("cannot read " + prefix + ".json");
  nlohmann::json manifest;
  try {
    js >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(prefix + ".json: " + e.what());
  }
  std::ifstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw Error("cannot read " + prefix + ".bin");
  ParamSet p;
  for (const auto& e : manifest.at("params")) {
    Tensor t(e.at("rows").get<std::size_t>(), e.at("cols").get<std::size_t>());
    for (double& v : t.data) {
      std::uint64_t w = 0;
      if (!bin.read(reinterpret_cast<char*>(&w), sizeof w))
        throw ParseError(prefix + ".bin is shorter than its manifest");
      v = std::bit_cast<double>(to_le(w));
    }
    p.add(e.at("name").get<std::string>(), std::move(t));
  }
  if (extra) *extra = manifest.value("extra", nlohmann::json::object());
  return p;
}

std::pair<double, std::vector<Tensor>> value_and_grad(const LossBuilder& f,
                                                     const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Var> leaves;
  for (const auto& p : params) leaves.push_back(tape.leaf(p));
  const Var out = f(tape, leaves);
  tape.backward(out);
  std::vector<Tensor> grads;
  for (const auto& l : leaves) grads.push_back(l.grad());
  return {out.value().item(), std::move(grads)};
}

GradCheck gradient_check(const LossBuilder& f, const std::vector<Tensor>& params, double h) {
  const auto [_, analytic] = value_and_grad(f, params);
  const auto eval = [&](const std::vector<Tensor>& ps) {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& p : ps) leaves.push_back(tape.leaf(p));
    return f(tape, leaves).value().item();
  };
  GradCheck r;
  std::vector<Tensor> ps = params;
  for (std::size_t p = 0; p < ps.size(); ++p) {
    Tensor fd(ps[p].rows, ps[p].cols);
    for (std::size_t i = 0; i < ps[p].size(); ++i) {
      const double orig = ps[p].data[i];
      ps[p].data[i] = orig + h;
      const double up = eval(ps);
      ps[p].data[i] = orig - h;
      const double down = eval(ps);
      ps[p].data[i] = orig;
      fd.data[i] = (up - down) / (2 * h);
    }
    double diff = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i) {
      const double d = fd.data[i] - analytic[p].data[i];
      diff += d * d;
    }
    const double rel = std::sqrt(diff) / std::max({analytic[p].norm(), fd.norm(), 1e-8});
    r.per_param.push_back(rel);
    r.max_rel_error = std::max(r.max_rel_error, rel);
  }
  return r;
}

}  // namespace idg::ad
