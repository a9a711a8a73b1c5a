#pragma once

#include "rivercast/tensor.hpp"

namespace rivercast {

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

inline double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

namespace act {
inline double silu(double x) { return x * sigmoid(x); }
inline double silu_d(double x) {
  double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}
// exact erf form
inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475)); }
inline double gelu_d(double x) {
  double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865475));
  double pdf = std::exp(-0.5 * x * x) * 0.3989422804014327;
  return cdf + x * pdf;
}
inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double softplus_d(double x) { return sigmoid(x); }
inline double tanh_(double x) { return std::tanh(x); }
inline double tanh_d(double x) {
  double t = std::tanh(x);
  return 1.0 - t * t;
}
inline double relu(double x) { return x > 0 ? x : 0.0; }
inline double relu_d(double x) { return x > 0 ? 1.0 : 0.0; }
}  // namespace act

template <double Fn(double), double Dfn(double)>
Tensor elementwise(Tape& tape, const Tensor& x) {
  bool tr = tape.track({&x});
  Tensor y = make_output(tape, x.shape(), tr);
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = Fn(x[i]);
  if (tr) {
    auto xi = x.p, yi = y.p;
    tape.record([xi, yi]() {
      if (!xi->tracked) return;
      for (std::size_t i = 0; i < xi->val.size(); ++i) xi->grad[i] += yi->grad[i] * Dfn(xi->val[i]);
    });
  }
  return y;
}

inline Tensor silu(Tape& t, const Tensor& x) { return elementwise<act::silu, act::silu_d>(t, x); }
inline Tensor gelu(Tape& t, const Tensor& x) { return elementwise<act::gelu, act::gelu_d>(t, x); }
inline Tensor softplus(Tape& t, const Tensor& x) { return elementwise<act::softplus, act::softplus_d>(t, x); }
inline Tensor tanh_op(Tape& t, const Tensor& x) { return elementwise<act::tanh_, act::tanh_d>(t, x); }
inline Tensor relu(Tape& t, const Tensor& x) { return elementwise<act::relu, act::relu_d>(t, x); }

// ---------------------------------------------------------------------------
// arithmetic
// ---------------------------------------------------------------------------

inline Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  bool tr = tape.track({&a, &b});
  Tensor y = make_output(tape, a.shape(), tr);
  for (std::size_t i = 0; i < a.numel(); ++i) y[i] = a[i] + b[i];
  if (tr) {
    auto ai = a.p, bi = b.p, yi = y.p;
    tape.record([ai, bi, yi]() {
      if (ai->tracked)
        for (std::size_t i = 0; i < ai->val.size(); ++i) ai->grad[i] += yi->grad[i];
      if (bi->tracked)
        for (std::size_t i = 0; i < bi->val.size(); ++i) bi->grad[i] += yi->grad[i];
    });
  }
  return y;
}

inline Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  bool tr = tape.track({&a, &b});
  Tensor y = make_output(tape, a.shape(), tr);
  for (std::size_t i = 0; i < a.numel(); ++i) y[i] = a[i] * b[i];
  if (tr) {
    auto ai = a.p, bi = b.p, yi = y.p;
    tape.record([ai, bi, yi]() {
      if (ai->tracked)
        for (std::size_t i = 0; i < ai->val.size(); ++i) ai->grad[i] += yi->grad[i] * bi->val[i];
      if (bi->tracked)
        for (std::size_t i = 0; i < bi->val.size(); ++i) bi->grad[i] += yi->grad[i] * ai->val[i];
    });
  }
  return y;
}

inline Tensor scale(Tape& tape, const Tensor& a, double c) {
  bool tr = tape.track({&a});
  Tensor y = make_output(tape, a.shape(), tr);
  for (std::size_t i = 0; i < a.numel(); ++i) y[i] = a[i] * c;
  if (tr) {
    auto ai = a.p;
    auto yi = y.p;
    tape.record([ai, yi, c]() {
      if (!ai->tracked) return;
      for (std::size_t i = 0; i < ai->val.size(); ++i) ai->grad[i] += yi->grad[i] * c;
    });
  }
  return y;
}

// x + b where b's shape is a trailing suffix of x's shape
inline Tensor broadcast_add(Tape& tape, const Tensor& x, const Tensor& b) {
  std::size_t bn = b.numel();
  require(bn > 0 && x.numel() % bn == 0, "broadcast_add: " + shape_str(b.shape()) + " is not a suffix block of " +
                                             shape_str(x.shape()));
  bool tr = tape.track({&x, &b});
  Tensor y = make_output(tape, x.shape(), tr);
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] + b[i % bn];
  if (tr) {
    auto xi = x.p, bi = b.p, yi = y.p;
    tape.record([xi, bi, yi, bn]() {
      if (xi->tracked)
        for (std::size_t i = 0; i < xi->val.size(); ++i) xi->grad[i] += yi->grad[i];
      if (bi->tracked)
        for (std::size_t i = 0; i < yi->val.size(); ++i) bi->grad[i % bn] += yi->grad[i];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// linear: y = x W + b, x is [.., in], W is [in, out], b is [out] (optional)
// ---------------------------------------------------------------------------
inline Tensor linear(Tape& tape, const Tensor& x, const Tensor& W, const Tensor& b = Tensor()) {
  require(W.rank() == 2, "linear: weight must be rank 2");
  int in = W.dim(0), out = W.dim(1);
  require(x.rank() >= 1 && x.dim(x.rank() - 1) == in,
          "linear: inner dimension mismatch, x " + shape_str(x.shape()) + " vs W " + shape_str(W.shape()));
  bool has_b = b.defined();
  if (has_b) require(b.rank() == 1 && b.dim(0) == out, "linear: bias shape mismatch");

  std::size_t rows = x.numel() / std::size_t(in);
  Shape yshape = x.shape();
  yshape.back() = out;
  bool tr = tape.track({&x, &W, has_b ? &b : nullptr});
  Tensor y = make_output(tape, yshape, tr);

  const double* xd = x.data();
  const double* wd = W.data();
  const double* bd = has_b ? b.data() : nullptr;
  double* yd = y.data();
  ComputePool::instance().for_chunks(rows, [&](int, std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r) {
      double* yr = yd + r * std::size_t(out);
      if (bd)
        for (int j = 0; j < out; ++j) yr[j] = bd[j];
      const double* xr = xd + r * std::size_t(in);
      for (int i = 0; i < in; ++i) {
        double xv = xr[i];
        const double* wrow = wd + std::size_t(i) * out;
        for (int j = 0; j < out; ++j) yr[j] += xv * wrow[j];
      }
    }
  });

  if (tr) {
    auto xi = x.p, wi = W.p, yi = y.p;
    auto bi = has_b ? b.p : nullptr;
    tape.record([xi, wi, bi, yi, rows, in, out]() {
      const double* gy = yi->grad.data();
      if (xi->tracked) {
        double* gx = xi->grad.data();
        const double* wd = wi->val.data();
        ComputePool::instance().for_chunks(rows, [&](int, std::size_t r0, std::size_t r1) {
          for (std::size_t r = r0; r < r1; ++r) {
            const double* gyr = gy + r * std::size_t(out);
            double* gxr = gx + r * std::size_t(in);
            for (int i = 0; i < in; ++i) {
              const double* wrow = wd + std::size_t(i) * out;
              double acc = 0;
              for (int j = 0; j < out; ++j) acc += gyr[j] * wrow[j];
              gxr[i] += acc;
            }
          }
        });
      }
      if (wi->tracked) {
        double* gw = wi->grad.data();
        const double* xd = xi->val.data();
        // partitioned over the input axis: every gw row belongs to one chunk
        ComputePool::instance().for_chunks(std::size_t(in), [&](int, std::size_t i0, std::size_t i1) {
          for (std::size_t r = 0; r < rows; ++r) {
            const double* gyr = gy + r * std::size_t(out);
            const double* xr = xd + r * std::size_t(in);
            for (std::size_t i = i0; i < i1; ++i) {
              double xv = xr[i];
              double* gwrow = gw + i * std::size_t(out);
              for (int j = 0; j < out; ++j) gwrow[j] += xv * gyr[j];
            }
          }
        });
      }
      if (bi && bi->tracked) {
        double* gb = bi->grad.data();
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gyr = gy + r * std::size_t(out);
          for (int j = 0; j < out; ++j) gb[j] += gyr[j];
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

// y = gamma * (x - mu)/sqrt(var + eps) + beta, per row over the last axis
inline Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5) {
  int K = x.dim(x.rank() - 1);
  require(K >= 1, "layer_norm: empty channel axis");
  require(gamma.rank() == 1 && gamma.dim(0) == K && beta.rank() == 1 && beta.dim(0) == K,
          "layer_norm: affine parameter shape mismatch");
  std::size_t rows = x.numel() / std::size_t(K);
  bool tr = tape.track({&x, &gamma, &beta});
  Tensor y = make_output(tape, x.shape(), tr);

  std::vector<double> xhat;
  std::vector<double> inv_sd(rows);
  if (tr) xhat.resize(x.numel());
  const double* xd = x.data();
  double* yd = y.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xd + r * K;
    double mu = 0;
    for (int k = 0; k < K; ++k) mu += xr[k];
    mu /= K;
    double var = 0;
    for (int k = 0; k < K; ++k) var += (xr[k] - mu) * (xr[k] - mu);
    var /= K;
    double inv = 1.0 / std::sqrt(var + eps);
    inv_sd[r] = inv;
    for (int k = 0; k < K; ++k) {
      double h = (xr[k] - mu) * inv;
      if (tr) xhat[r * K + k] = h;
      yd[r * K + k] = gamma[std::size_t(k)] * h + beta[std::size_t(k)];
    }
  }

  if (tr) {
    auto xi = x.p, gi = gamma.p, bi = beta.p, yi = y.p;
    auto xh = std::make_shared<std::vector<double>>(std::move(xhat));
    auto isd = std::make_shared<std::vector<double>>(std::move(inv_sd));
    tape.record([xi, gi, bi, yi, xh, isd, rows, K]() {
      const double* gy = yi->grad.data();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gyr = gy + r * K;
        const double* hr = xh->data() + r * K;
        if (gi->tracked)
          for (int k = 0; k < K; ++k) gi->grad[std::size_t(k)] += gyr[k] * hr[k];
        if (bi->tracked)
          for (int k = 0; k < K; ++k) bi->grad[std::size_t(k)] += gyr[k];
        if (xi->tracked) {
          double m1 = 0, m2 = 0;
          for (int k = 0; k < K; ++k) {
            double g = gyr[k] * gi->val[std::size_t(k)];
            m1 += g;
            m2 += g * hr[k];
          }
          m1 /= K;
          m2 /= K;
          double inv = (*isd)[r];
          double* gxr = xi->grad.data() + r * K;
          for (int k = 0; k < K; ++k) {
            double g = gyr[k] * gi->val[std::size_t(k)];
            gxr[k] += (g - m1 - hr[k] * m2) * inv;
          }
        }
      }
    });
  }
  return y;
}

// (x - mu)/(sd + eps) per row over the last axis; sd is the population
// standard deviation. No affine term.
inline Tensor channel_standardize(Tape& tape, const Tensor& x, double eps = 1e-5) {
  int K = x.dim(x.rank() - 1);
  std::size_t rows = x.numel() / std::size_t(K);
  bool tr = tape.track({&x});
  Tensor y = make_output(tape, x.shape(), tr);

  std::vector<double> mu_v(rows), sd_v(rows);
  const double* xd = x.data();
  double* yd = y.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xd + r * K;
    double mu = 0;
    for (int k = 0; k < K; ++k) mu += xr[k];
    mu /= K;
    double var = 0;
    for (int k = 0; k < K; ++k) var += (xr[k] - mu) * (xr[k] - mu);
    var /= K;
    double sd = std::sqrt(var);
    mu_v[r] = mu;
    sd_v[r] = sd;
    double inv = 1.0 / (sd + eps);
    for (int k = 0; k < K; ++k) yd[r * K + k] = (xr[k] - mu) * inv;
  }

  if (tr) {
    auto xi = x.p, yi = y.p;
    auto mus = std::make_shared<std::vector<double>>(std::move(mu_v));
    auto sds = std::make_shared<std::vector<double>>(std::move(sd_v));
    tape.record([xi, yi, mus, sds, rows, K, eps]() {
      if (!xi->tracked) return;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gyr = yi->grad.data() + r * K;
        const double* xr = xi->val.data() + r * K;
        double* gxr = xi->grad.data() + r * K;
        double mu = (*mus)[r], sd = (*sds)[r];
        double inv = 1.0 / (sd + eps);
        double m1 = 0, c = 0;
        for (int k = 0; k < K; ++k) {
          m1 += gyr[k];
          c += gyr[k] * (xr[k] - mu);
        }
        m1 /= K;
        // d sd/dx_j = (x_j - mu)/(K sd); the term vanishes for constant rows
        double sd_term = sd > 1e-300 ? c / (double(K) * sd * (sd + eps) * (sd + eps)) : 0.0;
        for (int k = 0; k < K; ++k) gxr[k] += (gyr[k] - m1) * inv - (xr[k] - mu) * sd_term;
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// depthwise causal 1-D convolution over [S, E]; kernel [E, w], tap w-1 is the
// current position, inputs left-padded with zeros
// ---------------------------------------------------------------------------
inline Tensor causal_conv1d(Tape& tape, const Tensor& x, const Tensor& kernel) {
  require(x.rank() == 2, "causal_conv1d: input must be [S, E]");
  require(kernel.rank() == 2 && kernel.dim(0) == x.dim(1), "causal_conv1d: kernel must be [E, w]");
  int S = x.dim(0), E = x.dim(1), w = kernel.dim(1);
  require(w >= 1, "causal_conv1d: kernel width must be >= 1");
  bool tr = tape.track({&x, &kernel});
  Tensor y = make_output(tape, x.shape(), tr);

  const double* xd = x.data();
  const double* kd = kernel.data();
  double* yd = y.data();
  for (int s = 0; s < S; ++s) {
    for (int j = 0; j < w; ++j) {
      int src = s - (w - 1) + j;
      if (src < 0) continue;
      const double* xr = xd + std::size_t(src) * E;
      double* yr = yd + std::size_t(s) * E;
      for (int e = 0; e < E; ++e) yr[e] += kd[std::size_t(e) * w + j] * xr[e];
    }
  }

  if (tr) {
    auto xi = x.p, ki = kernel.p, yi = y.p;
    tape.record([xi, ki, yi, S, E, w]() {
      const double* gy = yi->grad.data();
      for (int s = 0; s < S; ++s) {
        for (int j = 0; j < w; ++j) {
          int src = s - (w - 1) + j;
          if (src < 0) continue;
          const double* gyr = gy + std::size_t(s) * E;
          if (xi->tracked) {
            double* gxr = xi->grad.data() + std::size_t(src) * E;
            for (int e = 0; e < E; ++e) gxr[e] += gyr[e] * ki->val[std::size_t(e) * w + j];
          }
          if (ki->tracked) {
            const double* xr = xi->val.data() + std::size_t(src) * E;
            for (int e = 0; e < E; ++e) ki->grad[std::size_t(e) * w + j] += gyr[e] * xr[e];
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// structural ops
// ---------------------------------------------------------------------------

inline Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  require(shape_numel(shape) == x.numel(), "reshape: element count mismatch");
  bool tr = tape.track({&x});
  Tensor y = make_output(tape, std::move(shape), tr);
  std::copy(x.data(), x.data() + x.numel(), y.data());
  if (tr) {
    auto xi = x.p, yi = y.p;
    tape.record([xi, yi]() {
      if (!xi->tracked) return;
      for (std::size_t i = 0; i < xi->val.size(); ++i) xi->grad[i] += yi->grad[i];
    });
  }
  return y;
}

// permutes rows of [P, ..] or the middle axis of [T, P, ..]:
// out[.., i, ..] = in[.., perm[i], ..]
inline Tensor permute_points(Tape& tape, const Tensor& x, const std::vector<int>& perm) {
  require(x.rank() >= 2, "permute_points: rank must be >= 2");
  int axis = x.rank() == 2 ? 0 : 1;
  require(x.rank() <= 3, "permute_points: rank must be 2 or 3");
  int T = axis == 1 ? x.dim(0) : 1;
  int P = x.dim(axis);
  require(int(perm.size()) == P, "permute_points: order length " + std::to_string(perm.size()) +
                                     " does not match point axis " + std::to_string(P));
  std::size_t K = x.numel() / (std::size_t(T) * P);
  bool tr = tape.track({&x});
  Tensor y = make_output(tape, x.shape(), tr);
  const double* xd = x.data();
  double* yd = y.data();
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < P; ++i) {
      const double* src = xd + (std::size_t(t) * P + std::size_t(perm[std::size_t(i)])) * K;
      double* dst = yd + (std::size_t(t) * P + i) * K;
      std::copy(src, src + K, dst);
    }
  if (tr) {
    auto xi = x.p, yi = y.p;
    auto pm = std::make_shared<std::vector<int>>(perm);
    tape.record([xi, yi, pm, T, P, K]() {
      if (!xi->tracked) return;
      for (int t = 0; t < T; ++t)
        for (int i = 0; i < P; ++i) {
          const double* gsrc = yi->grad.data() + (std::size_t(t) * P + i) * K;
          double* gdst = xi->grad.data() + (std::size_t(t) * P + std::size_t((*pm)[std::size_t(i)])) * K;
          for (std::size_t k = 0; k < K; ++k) gdst[k] += gsrc[k];
        }
    });
  }
  return y;
}

// reverses the point axis (axis 0 of rank-2, axis 1 of rank-3)
inline Tensor flip_points(Tape& tape, const Tensor& x) {
  int P = x.rank() == 2 ? x.dim(0) : x.dim(1);
  std::vector<int> rev(std::size_t(P), 0);
  for (int i = 0; i < P; ++i) rev[std::size_t(i)] = P - 1 - i;
  return permute_points(tape, x, rev);
}

inline Tensor concat_last(Tape& tape, const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_last: no inputs");
  Shape lead = parts[0].shape();
  lead.pop_back();
  int total = 0;
  bool tr = false;
  for (const Tensor& t : parts) {
    Shape l = t.shape();
    int k = l.back();
    l.pop_back();
    require(l == lead, "concat_last: leading dims differ");
    total += k;
    tr = tr || tape.track({&t});
  }
  Shape yshape = lead;
  yshape.push_back(total);
  Tensor y = make_output(tape, yshape, tr);
  std::size_t rows = shape_numel(lead);
  int off = 0;
  for (const Tensor& t : parts) {
    int k = t.dim(t.rank() - 1);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(t.data() + r * k, t.data() + (r + 1) * k, y.data() + r * total + off);
    off += k;
  }
  if (tr) {
    std::vector<std::shared_ptr<TensorImpl>> impls;
    for (const Tensor& t : parts) impls.push_back(t.p);
    auto yi = y.p;
    tape.record([impls, yi, rows, total]() {
      int off = 0;
      for (auto& xi : impls) {
        int k = int(xi->val.size() / rows);
        if (xi->tracked)
          for (std::size_t r = 0; r < rows; ++r)
            for (int j = 0; j < k; ++j) xi->grad[r * k + j] += yi->grad[r * total + off + j];
        off += k;
      }
    });
  }
  return y;
}

// concatenates along axis 0; all parts share the trailing shape
inline Tensor concat_first(Tape& tape, const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_first: no inputs");
  Shape tail = parts[0].shape();
  tail.erase(tail.begin());
  int total = 0;
  bool tr = false;
  for (const Tensor& t : parts) {
    Shape tl = t.shape();
    int d0 = tl.front();
    tl.erase(tl.begin());
    require(tl == tail, "concat_first: trailing dims differ");
    total += d0;
    tr = tr || tape.track({&t});
  }
  Shape yshape;
  yshape.push_back(total);
  yshape.insert(yshape.end(), tail.begin(), tail.end());
  Tensor y = make_output(tape, yshape, tr);
  std::size_t off = 0;
  for (const Tensor& t : parts) {
    std::copy(t.data(), t.data() + t.numel(), y.data() + off);
    off += t.numel();
  }
  if (tr) {
    std::vector<std::shared_ptr<TensorImpl>> impls;
    for (const Tensor& t : parts) impls.push_back(t.p);
    auto yi = y.p;
    tape.record([impls, yi]() {
      std::size_t off = 0;
      for (auto& xi : impls) {
        if (xi->tracked)
          for (std::size_t i = 0; i < xi->val.size(); ++i) xi->grad[i] += yi->grad[off + i];
        off += xi->val.size();
      }
    });
  }
  return y;
}

inline std::vector<Tensor> split_last(Tape& tape, const Tensor& x, const std::vector<int>& sizes) {
  int K = x.dim(x.rank() - 1);
  int sum = 0;
  for (int s : sizes) sum += s;
  require(sum == K, "split_last: sizes do not cover the channel axis");
  std::size_t rows = x.numel() / std::size_t(K);
  Shape lead = x.shape();
  lead.pop_back();
  bool tr = tape.track({&x});
  std::vector<Tensor> out;
  int off = 0;
  for (int s : sizes) {
    Shape sh = lead;
    sh.push_back(s);
    Tensor part = make_output(tape, sh, tr);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(x.data() + r * K + off, x.data() + r * K + off + s, part.data() + r * s);
    if (tr) {
      auto xi = x.p, pi = part.p;
      int o = off, k = s;
      tape.record([xi, pi, rows, K, o, k]() {
        if (!xi->tracked) return;
        for (std::size_t r = 0; r < rows; ++r)
          for (int j = 0; j < k; ++j) xi->grad[r * K + o + j] += pi->grad[r * k + j];
      });
    }
    off += s;
    out.push_back(part);
  }
  return out;
}

// pairs consecutive time steps: [T, P, K] -> [T/2, P, 2K]
inline Tensor stack_time_pairs(Tape& tape, const Tensor& x) {
  require(x.rank() == 3, "stack_time_pairs: input must be [T, P, K]");
  int T = x.dim(0), P = x.dim(1), K = x.dim(2);
  require(T % 2 == 0, "stack_time_pairs: temporal length must be even, got " + std::to_string(T));
  bool tr = tape.track({&x});
  Tensor y = make_output(tape, {T / 2, P, 2 * K}, tr);
  for (int t = 0; t < T / 2; ++t)
    for (int p = 0; p < P; ++p) {
      const double* s0 = x.data() + (std::size_t(2 * t) * P + p) * K;
      const double* s1 = x.data() + (std::size_t(2 * t + 1) * P + p) * K;
      double* d = y.data() + (std::size_t(t) * P + p) * (2 * K);
      std::copy(s0, s0 + K, d);
      std::copy(s1, s1 + K, d + K);
    }
  if (tr) {
    auto xi = x.p, yi = y.p;
    tape.record([xi, yi, T, P, K]() {
      if (!xi->tracked) return;
      for (int t = 0; t < T / 2; ++t)
        for (int p = 0; p < P; ++p) {
          const double* g = yi->grad.data() + (std::size_t(t) * P + p) * (2 * K);
          double* g0 = xi->grad.data() + (std::size_t(2 * t) * P + p) * K;
          double* g1 = xi->grad.data() + (std::size_t(2 * t + 1) * P + p) * K;
          for (int k = 0; k < K; ++k) g0[k] += g[k];
          for (int k = 0; k < K; ++k) g1[k] += g[K + k];
        }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// dropout (inverted): identity in eval mode, scales kept units by 1/(1-rate)
// while training
// ---------------------------------------------------------------------------
inline Tensor dropout(Tape& tape, const Tensor& x, double rate, bool training, Rng& rng) {
  require(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0, 1)");
  if (!training || rate == 0.0) return x;
  bool tr = tape.track({&x});
  Tensor y = make_output(tape, x.shape(), tr);
  auto mask = std::make_shared<std::vector<double>>(x.numel());
  double keep = 1.0 - rate;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    double m = rng.uniform() < rate ? 0.0 : 1.0 / keep;
    (*mask)[i] = m;
    y[i] = x[i] * m;
  }
  if (tr) {
    auto xi = x.p, yi = y.p;
    tape.record([xi, yi, mask]() {
      if (!xi->tracked) return;
      for (std::size_t i = 0; i < xi->val.size(); ++i) xi->grad[i] += yi->grad[i] * (*mask)[i];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// reductions and losses
// ---------------------------------------------------------------------------

inline Tensor sum(Tape& tape, const Tensor& x) {
  bool tr = tape.track({&x});
  Tensor y = make_output(tape, {1}, tr);
  double acc = 0;
  for (std::size_t i = 0; i < x.numel(); ++i) acc += x[i];
  y[0] = acc;
  if (tr) {
    auto xi = x.p, yi = y.p;
    tape.record([xi, yi]() {
      if (!xi->tracked) return;
      for (std::size_t i = 0; i < xi->val.size(); ++i) xi->grad[i] += yi->grad[0];
    });
  }
  return y;
}

// mean over all elements of w * (target - pred)^2; target and weights are
// constants of the graph
inline Tensor weighted_mse(Tape& tape, const Tensor& pred, const Tensor& target, const Tensor& weights) {
  check_same_shape(pred, target, "weighted_mse");
  check_same_shape(pred, weights, "weighted_mse");
  std::size_t n = pred.numel();
  require(n > 0, "weighted_mse: empty input");
  bool tr = tape.track({&pred});
  Tensor y = make_output(tape, {1}, tr);
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double e = target[i] - pred[i];
    acc += weights[i] * e * e;
  }
  y[0] = acc / double(n);
  if (tr) {
    auto pi = pred.p, ti = target.p, wi = weights.p, yi = y.p;
    tape.record([pi, ti, wi, yi, n]() {
      if (!pi->tracked) return;
      double g = yi->grad[0];
      for (std::size_t i = 0; i < n; ++i)
        pi->grad[i] += g * (-2.0) * wi->val[i] * (ti->val[i] - pi->val[i]) / double(n);
    });
  }
  return y;
}

// scalar dot(out, probe) used by the gradient checker
inline Tensor probe_loss(Tape& tape, const Tensor& x, const Tensor& probe) {
  check_same_shape(x, probe, "probe_loss");
  bool tr = tape.track({&x});
  Tensor y = make_output(tape, {1}, tr);
  double acc = 0;
  for (std::size_t i = 0; i < x.numel(); ++i) acc += x[i] * probe[i];
  y[0] = acc;
  if (tr) {
    auto xi = x.p, pi = probe.p, yi = y.p;
    tape.record([xi, pi, yi]() {
      if (!xi->tracked) return;
      for (std::size_t i = 0; i < xi->val.size(); ++i) xi->grad[i] += yi->grad[0] * pi->val[i];
    });
  }
  return y;
}

}  // namespace rivercast
