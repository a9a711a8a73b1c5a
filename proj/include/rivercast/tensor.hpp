#pragma once

#include <algorithm>
#include <memory>
#include <numeric>

#include "rivercast/common.hpp"

namespace rivercast {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    require(d >= 0, "negative dimension");
    n *= std::size_t(d);
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

struct TensorImpl {
  Shape shape;
  std::vector<double> val;
  std::vector<double> grad;  // same length as val once tracked
  bool tracked = false;
};

// Value-semantic handle to a shared buffer. Ops return fresh handles; the
// tape's backward closures hold the impls they need alive.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape) {
    Tensor t;
    t.p = std::make_shared<TensorImpl>();
    t.p->shape = std::move(shape);
    t.p->val.assign(shape_numel(t.p->shape), 0.0);
    return t;
  }

  static Tensor from(Shape shape, std::vector<double> values) {
    require(shape_numel(shape) == values.size(), "tensor data does not match shape " + shape_str(shape));
    Tensor t;
    t.p = std::make_shared<TensorImpl>();
    t.p->shape = std::move(shape);
    t.p->val = std::move(values);
    return t;
  }

  static Tensor scalar(double v) { return from({1}, {v}); }

  bool defined() const { return p != nullptr; }
  const Shape& shape() const { return p->shape; }
  int dim(int i) const { return p->shape[std::size_t(i)]; }
  int rank() const { return int(p->shape.size()); }
  std::size_t numel() const { return p->val.size(); }

  double* data() { return p->val.data(); }
  const double* data() const { return p->val.data(); }
  double& operator[](std::size_t i) { return p->val[i]; }
  double operator[](std::size_t i) const { return p->val[i]; }

  bool tracked() const { return p && p->tracked; }
  void set_tracked(bool on = true) {
    p->tracked = on;
    if (on && p->grad.size() != p->val.size()) p->grad.assign(p->val.size(), 0.0);
  }
  double* grad() { return p->grad.data(); }
  const double* grad() const { return p->grad.data(); }
  void zero_grad() { std::fill(p->grad.begin(), p->grad.end(), 0.0); }

  double value() const {
    require(numel() == 1, "value() on non-scalar tensor");
    return p->val[0];
  }

  std::shared_ptr<TensorImpl> p;
};

// Records one backward closure per op. backward() replays them in reverse.
class Tape {
 public:
  bool recording = true;

  void record(std::function<void()> fn) { steps_.push_back(std::move(fn)); }

  bool track(std::initializer_list<const Tensor*> inputs) const {
    if (!recording) return false;
    for (const Tensor* t : inputs)
      if (t && t->defined() && t->tracked()) return true;
    return false;
  }

  void backward(Tensor root) {
    require(root.numel() == 1, "backward root must be scalar");
    require(root.tracked(), "backward root is not tracked; was the tape recording?");
    root.grad()[0] = 1.0;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
  }

  void clear() { steps_.clear(); }
  std::size_t size() const { return steps_.size(); }

 private:
  std::vector<std::function<void()>> steps_;
};

// Marks the output of an op and allocates its grad buffer when any input is
// tracked under a recording tape.
inline Tensor make_output(Tape& tape, Shape shape, bool tracked) {
  Tensor out = Tensor::zeros(std::move(shape));
  if (tape.recording && tracked) out.set_tracked();
  return out;
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  require(a.shape() == b.shape(),
          std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

inline bool all_finite(const Tensor& t) {
  for (std::size_t i = 0; i < t.numel(); ++i)
    if (!std::isfinite(t[i])) return false;
  return true;
}

}  // namespace rivercast
