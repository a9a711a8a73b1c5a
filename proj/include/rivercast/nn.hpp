#pragma once

#include "rivercast/ops.hpp"

namespace rivercast {

enum class Activation { Silu, Gelu, Tanh, Relu };

inline Tensor apply_activation(Tape& tape, const Tensor& x, Activation a) {
  switch (a) {
    case Activation::Silu: return silu(tape, x);
    case Activation::Gelu: return gelu(tape, x);
    case Activation::Tanh: return tanh_op(tape, x);
    case Activation::Relu: return relu(tape, x);
  }
  fail("unknown activation");
}

// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual dense-layer default
inline Tensor init_linear_weight(int in, int out, Rng& rng) {
  double bound = 1.0 / std::sqrt(double(in));
  Tensor w = Tensor::zeros({in, out});
  for (std::size_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-bound, bound);
  return w;
}

inline Tensor init_linear_bias(int in, int out, Rng& rng) {
  double bound = 1.0 / std::sqrt(double(in));
  Tensor b = Tensor::zeros({out});
  for (std::size_t i = 0; i < b.numel(); ++i) b[i] = rng.uniform(-bound, bound);
  return b;
}

struct Mlp {
  std::vector<Tensor> weights;  // [in,h1], [h1,h2], ...
  std::vector<Tensor> biases;
  Activation activation = Activation::Gelu;
};

inline Mlp make_mlp(int in, const std::vector<int>& hidden, int out, Activation act, Rng& rng) {
  Mlp m;
  m.activation = act;
  std::vector<int> dims;
  dims.push_back(in);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    m.weights.push_back(init_linear_weight(dims[i], dims[i + 1], rng));
    m.biases.push_back(init_linear_bias(dims[i], dims[i + 1], rng));
  }
  return m;
}

inline Tensor mlp_forward(Tape& tape, const Mlp& m, const Tensor& x, double drop_rate = 0.0, bool training = false,
                          Rng* rng = nullptr) {
  Tensor h = x;
  for (std::size_t i = 0; i < m.weights.size(); ++i) {
    h = linear(tape, h, m.weights[i], m.biases[i]);
    if (i + 1 < m.weights.size()) {
      h = apply_activation(tape, h, m.activation);
      if (drop_rate > 0 && training && rng) h = dropout(tape, h, drop_rate, training, *rng);
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Gradient checking: reverse-mode vs central finite differences. The callable
// must rebuild the computation from the tracked inputs and return a scalar.
// ---------------------------------------------------------------------------
struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

inline double grad_rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

inline GradCheckReport grad_check(const std::function<Tensor(Tape&)>& fn, const std::vector<Tensor>& wrt,
                                  double h = 1e-5) {
  for (const Tensor& t : wrt) require(t.tracked(), "grad_check: inputs must be tracked");

  Tape tape;
  Tensor out = fn(tape);
  require(out.numel() == 1, "grad_check: callable must return a scalar");
  require(std::isfinite(out.value()), "grad_check: non-finite forward value");
  for (const Tensor& t : wrt) t.p->grad.assign(t.numel(), 0.0);
  out.p->grad.assign(1, 0.0);
  tape.backward(out);

  std::vector<std::vector<double>> analytic;
  for (const Tensor& t : wrt) analytic.push_back(t.p->grad);

  Tape eval;
  eval.recording = false;
  GradCheckReport rep;
  for (std::size_t ti = 0; ti < wrt.size(); ++ti) {
    Tensor t = wrt[ti];
    for (std::size_t i = 0; i < t.numel(); ++i) {
      double saved = t[i];
      t[i] = saved + h;
      double up = fn(eval).value();
      t[i] = saved - h;
      double dn = fn(eval).value();
      t[i] = saved;
      require(std::isfinite(up) && std::isfinite(dn), "grad_check: non-finite perturbed value");
      double fd = (up - dn) / (2.0 * h);
      rep.max_rel_err = std::max(rep.max_rel_err, grad_rel_err(analytic[ti][i], fd));
      ++rep.checked;
    }
  }
  return rep;
}

}  // namespace rivercast
