#pragma once

#include <cstring>
#include <map>

#include "rivercast/binio.hpp"

namespace rivercast {

// ---------------------------------------------------------------------------
// Named learnable parameters. Names are unique, shapes immutable, iteration
// order is the sorted name order so serialization is deterministic.
// ---------------------------------------------------------------------------
class ParamStore {
 public:
  Tensor create(const std::string& name, Tensor init) {
    require(params_.find(name) == params_.end(), "parameter already exists: " + name);
    init.set_tracked();
    params_.emplace(name, init);
    return init;
  }

  Tensor& at(const std::string& name) {
    auto it = params_.find(name);
    require(it != params_.end(), "unknown parameter: " + name);
    return it->second;
  }

  const Tensor& at(const std::string& name) const {
    auto it = params_.find(name);
    require(it != params_.end(), "unknown parameter: " + name);
    return it->second;
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  std::size_t size() const { return params_.size(); }

  std::size_t total_elements() const {
    std::size_t n = 0;
    for (auto& [k, v] : params_) n += v.numel();
    return n;
  }

  void zero_grads() {
    for (auto& [k, v] : params_) v.zero_grad();
  }

  template <typename Fn>
  void for_each(Fn&& fn) {
    for (auto& [k, v] : params_) fn(k, v);
  }

  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (auto& [k, v] : params_) fn(k, v);
  }

  // deep copy of the values (grads and optimizer state are not part of it)
  void copy_values_from(const ParamStore& other) {
    require(size() == other.size(), "parameter store layout mismatch");
    auto it = other.params_.begin();
    for (auto& [k, v] : params_) {
      require(k == it->first && v.shape() == it->second.shape(), "parameter store layout mismatch at " + k);
      v.p->val = it->second.p->val;
      ++it;
    }
  }

  // --- binary format: magic "RSNN", version u32, count u32, then the shared
  // tensor record codec per parameter ---
  void save(const std::string& path) const {
    BinFile f(path, "wb");
    f.write("RSNN", 4);
    f.put<std::uint32_t>(1);
    f.put<std::uint32_t>(std::uint32_t(params_.size()));
    for (auto& [name, t] : params_) f.put_tensor(name, t.shape(), t.data());
  }

  void load(const std::string& path) {
    BinFile f(path, "rb");
    char magic[4];
    f.read(magic, 4);
    require(std::memcmp(magic, "RSNN", 4) == 0, "bad magic in parameter file: " + path);
    std::uint32_t version = f.get<std::uint32_t>();
    require(version == 1, "unsupported parameter file version " + std::to_string(version));
    std::uint32_t count = f.get<std::uint32_t>();
    std::map<std::string, Tensor> loaded;
    for (std::uint32_t i = 0; i < count; ++i) {
      auto [name, t] = f.get_tensor();
      loaded.emplace(std::move(name), std::move(t));
    }
    if (params_.empty()) {
      for (auto& [k, v] : loaded) {
        v.set_tracked();
        params_.emplace(k, v);
      }
    } else {
      require(loaded.size() == params_.size(), "parameter count mismatch in " + path);
      for (auto& [k, v] : params_) {
        auto it = loaded.find(k);
        require(it != loaded.end(), "missing parameter " + k + " in " + path);
        require(it->second.shape() == v.shape(), "shape mismatch for parameter " + k);
        v.p->val = it->second.p->val;
      }
    }
  }

 private:
  std::map<std::string, Tensor> params_;
};

// ---------------------------------------------------------------------------
// AdamW with decoupled weight decay
// ---------------------------------------------------------------------------
class AdamW {
 public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  void step(ParamStore& params, double lr) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1, double(t_));
    double bc2 = 1.0 - std::pow(beta2, double(t_));
    params.for_each([&](const std::string& name, Tensor& p) {
      State& s = state_[name];
      if (s.m.size() != p.numel()) {
        s.m.assign(p.numel(), 0.0);
        s.v.assign(p.numel(), 0.0);
      }
      double* pv = p.data();
      const double* g = p.grad();
      for (std::size_t i = 0; i < p.numel(); ++i) {
        s.m[i] = beta1 * s.m[i] + (1.0 - beta1) * g[i];
        s.v[i] = beta2 * s.v[i] + (1.0 - beta2) * g[i] * g[i];
        double mhat = s.m[i] / bc1;
        double vhat = s.v[i] / bc2;
        pv[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * pv[i]);
      }
    });
  }

  void reset() {
    state_.clear();
    t_ = 0;
  }

 private:
  struct State {
    std::vector<double> m, v;
  };
  std::map<std::string, State> state_;
  long t_ = 0;
};

// scales all gradients so their global L2 norm is at most max_norm; returns
// the pre-clip norm
inline double clip_global_grad_norm(ParamStore& params, double max_norm) {
  double sq = 0;
  params.for_each([&](const std::string&, Tensor& p) {
    const double* g = p.grad();
    for (std::size_t i = 0; i < p.numel(); ++i) sq += g[i] * g[i];
  });
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    double s = max_norm / norm;
    params.for_each([&](const std::string&, Tensor& p) {
      double* g = p.grad();
      for (std::size_t i = 0; i < p.numel(); ++i) g[i] *= s;
    });
  }
  return norm;
}

// linear warmup to lr_max, then cosine annealing down to lr_min
inline double lr_schedule(long step, long total_steps, long warmup_steps, double lr_max, double lr_min) {
  if (warmup_steps > 0 && step < warmup_steps) return lr_max * double(step + 1) / double(warmup_steps);
  long rest = std::max<long>(1, total_steps - warmup_steps);
  double prog = std::min(1.0, double(step - warmup_steps) / double(rest));
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(3.141592653589793 * prog));
}

}  // namespace rivercast
