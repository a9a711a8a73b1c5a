#pragma once

#include <cstdio>
#include <fstream>

#include "rivercast/data.hpp"
#include "rivercast/hydrology.hpp"
#include "rivercast/model.hpp"

namespace rivercast {

// ---------------------------------------------------------------------------
// target transform: sign(d) log(1 + |d|), with exact inverse
// ---------------------------------------------------------------------------
inline double transform_delta(double d) { return (d >= 0 ? 1.0 : -1.0) * std::log1p(std::abs(d)); }
inline double inverse_transform_delta(double y) { return (y >= 0 ? 1.0 : -1.0) * std::expm1(std::abs(y)); }

// flood-severity weight: the return period itself once it exceeds one year
inline double loss_weight(double severity_years) { return severity_years > 1.0 ? severity_years : 1.0; }

// lead-time weight u = exp(alpha (L - l + 1)), l in 1..L
inline double leadtime_weight(int lead, int total_leads, double alpha) {
  require(lead >= 1 && lead <= total_leads, "leadtime_weight: lead out of range");
  return std::exp(alpha * double(total_leads - lead + 1));
}

// ---------------------------------------------------------------------------
// per-channel normalization statistics from the training split
// ---------------------------------------------------------------------------
struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> sd;
  std::vector<std::uint8_t> constant;  // sd == 0: center only

  void resize(int channels) {
    mean.assign(std::size_t(channels), 0.0);
    sd.assign(std::size_t(channels), 1.0);
    constant.assign(std::size_t(channels), 0);
  }
};

struct NormStats {
  ChannelStats era5, glofas, cpc, hres, static_attrs;
};

namespace detail {

class Welford {
 public:
  void resize(int channels) {
    n_.assign(std::size_t(channels), 0.0);
    m_.assign(std::size_t(channels), 0.0);
    s_.assign(std::size_t(channels), 0.0);
  }
  void add(int c, double x) {
    if (is_missing(x)) return;
    double& n = n_[std::size_t(c)];
    double& m = m_[std::size_t(c)];
    double& s = s_[std::size_t(c)];
    n += 1.0;
    double d = x - m;
    m += d / n;
    s += d * (x - m);
  }
  ChannelStats finish() const {
    ChannelStats cs;
    cs.resize(int(n_.size()));
    for (std::size_t c = 0; c < n_.size(); ++c) {
      cs.mean[c] = m_[c];
      double var = n_[c] > 1 ? s_[c] / n_[c] : 0.0;
      double sd = std::sqrt(var);
      if (sd > 0) {
        cs.sd[c] = sd;
      } else {
        cs.sd[c] = 1.0;
        cs.constant[c] = 1;
      }
    }
    return cs;
  }

 private:
  std::vector<double> n_, m_, s_;
};

inline void add_block(Welford& w, const std::vector<double>& vals, int channels) {
  for (std::size_t i = 0; i < vals.size(); ++i) w.add(int(i % std::size_t(channels)), vals[i]);
}

}  // namespace detail

inline NormStats compute_norm_stats(const SampleSource& data, const std::vector<int>& train_indices) {
  require(!train_indices.empty(), "compute_norm_stats: empty training split");
  detail::Welford we, wg, wc, wh, ws;
  we.resize(kVe);
  wg.resize(kVg);
  wc.resize(kVc);
  wh.resize(kVh);
  ws.resize(data.points().static_width());
  for (int idx : train_indices) {
    ForecastSample s = data.sample(idx);
    detail::add_block(we, s.era5, kVe);
    detail::add_block(wg, s.glofas, kVg);
    detail::add_block(wc, s.cpc, kVc);
    detail::add_block(wh, s.hres, kVh);
  }
  std::vector<double> stat = data.points().static_matrix();
  detail::add_block(ws, stat, data.points().static_width());
  NormStats out;
  out.era5 = we.finish();
  out.glofas = wg.finish();
  out.cpc = wc.finish();
  out.hres = wh.finish();
  out.static_attrs = ws.finish();
  return out;
}

// standardize, then replace missing entries with zero (the mean)
inline void apply_norm(std::vector<double>& vals, const ChannelStats& cs) {
  int channels = int(cs.mean.size());
  for (std::size_t i = 0; i < vals.size(); ++i) {
    int c = int(i % std::size_t(channels));
    if (is_missing(vals[i])) {
      vals[i] = 0.0;
    } else {
      vals[i] = (vals[i] - cs.mean[std::size_t(c)]) / cs.sd[std::size_t(c)];
    }
  }
}

inline void denormalize(std::vector<double>& vals, const ChannelStats& cs) {
  int channels = int(cs.mean.size());
  for (std::size_t i = 0; i < vals.size(); ++i) {
    int c = int(i % std::size_t(channels));
    vals[i] = vals[i] * cs.sd[std::size_t(c)] + cs.mean[std::size_t(c)];
  }
}

// ---------------------------------------------------------------------------
// batches: one issuance date on one contiguous curve segment of points
// ---------------------------------------------------------------------------
struct SegmentPlan {
  std::vector<int> point_indices;  // into the full point set
  PointSet points;
  OrderSet orders;
  Tensor static_feats;                // normalized [Pseg, Vs]
  std::vector<int> threshold_rows;    // row in FloodThresholds per segment point
};

inline std::vector<int> threshold_rows_for(const PointSet& points, const FloodThresholds& th) {
  std::map<std::int64_t, int> row_of;
  for (int r = 0; r < th.points(); ++r) row_of[th.point_ids[std::size_t(r)]] = r;
  std::vector<int> rows;
  for (int p = 0; p < points.size(); ++p) {
    auto it = row_of.find(points[p].id);
    require(it != row_of.end(), "thresholds do not cover point " + std::to_string(points[p].id));
    rows.push_back(it->second);
  }
  return rows;
}

inline std::vector<SegmentPlan> plan_segments(const PointSet& points, const NormStats& stats,
                                              const FloodThresholds& th, int segment_max_len) {
  int P = points.size();
  int max_len = segment_max_len > 0 ? segment_max_len : P;
  // segments follow the Gilbert curve over the full set
  SerializationOrder global = serialize(points, CurveKind::Gilbert);
  std::vector<SegmentPlan> plans;
  for (const CurveSegment& seg : split_curve(global, max_len)) {
    SegmentPlan plan;
    plan.point_indices.assign(global.perm.begin() + seg.offset, global.perm.begin() + seg.offset + seg.length);
    plan.points = points.subset(plan.point_indices);
    plan.orders = build_orders(plan.points);
    std::vector<double> stat = plan.points.static_matrix();
    apply_norm(stat, stats.static_attrs);
    plan.static_feats = Tensor::from({plan.points.size(), plan.points.static_width()}, std::move(stat));
    plan.threshold_rows = threshold_rows_for(plan.points, th);
    plans.push_back(std::move(plan));
  }
  return plans;
}

// gathers the segment's columns of a [A, P, C] sample block
inline std::vector<double> gather_points(const std::vector<double>& vals, int a_dim, int p_dim, int channels,
                                         const std::vector<int>& idx) {
  std::vector<double> out(std::size_t(a_dim) * idx.size() * std::size_t(channels));
  for (int a = 0; a < a_dim; ++a)
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const double* src = vals.data() + (std::size_t(a) * p_dim + std::size_t(idx[j])) * channels;
      double* dst = out.data() + (std::size_t(a) * idx.size() + j) * channels;
      std::copy(src, src + channels, dst);
    }
  return out;
}

inline ForwardInputs make_inputs(const ForecastSample& s, const SegmentPlan& plan, const NormStats& stats) {
  int pseg = int(plan.point_indices.size());
  ForwardInputs in;
  std::vector<double> e = gather_points(s.era5, s.T, s.P, kVe, plan.point_indices);
  apply_norm(e, stats.era5);
  in.era5 = Tensor::from({s.T, pseg, kVe}, std::move(e));
  std::vector<double> g = gather_points(s.glofas, s.T, s.P, kVg, plan.point_indices);
  apply_norm(g, stats.glofas);
  in.glofas = Tensor::from({s.T, pseg, kVg}, std::move(g));
  std::vector<double> c = gather_points(s.cpc, s.T, s.P, kVc, plan.point_indices);
  apply_norm(c, stats.cpc);
  in.cpc = Tensor::from({s.T, pseg, kVc}, std::move(c));
  std::vector<double> h = gather_points(s.hres, s.L, s.P, kVh, plan.point_indices);
  apply_norm(h, stats.hres);
  for (int l = 0; l < s.L; ++l) {
    std::vector<double> lead(h.begin() + std::ptrdiff_t(std::size_t(l) * pseg * kVh),
                             h.begin() + std::ptrdiff_t(std::size_t(l + 1) * pseg * kVh));
    in.hres.push_back(Tensor::from({1, pseg, kVh}, std::move(lead)));
  }
  in.static_feats = plan.static_feats;
  return in;
}

// transformed-space targets and Eq-style weights; weights are computed on the
// untransformed target discharge and carry no gradient
struct LossTensors {
  Tensor target;  // [L, Pseg]
  Tensor weights;
};

inline LossTensors make_loss_tensors(const ForecastSample& s, const SegmentPlan& plan, const FloodThresholds& th,
                                     double alpha) {
  int pseg = int(plan.point_indices.size());
  LossTensors out;
  out.target = Tensor::zeros({s.L, pseg});
  out.weights = Tensor::zeros({s.L, pseg});
  for (int l = 0; l < s.L; ++l) {
    double u = leadtime_weight(l + 1, s.L, alpha);
    for (int j = 0; j < pseg; ++j) {
      int p = plan.point_indices[std::size_t(j)];
      double target_q = s.target[std::size_t(l) * s.P + p];
      double delta = target_q - s.x_prev[std::size_t(p)];
      out.target[std::size_t(l) * pseg + j] = transform_delta(delta);
      double severity = severity_rank(target_q, th, plan.threshold_rows[std::size_t(j)]);
      out.weights[std::size_t(l) * pseg + j] = u * loss_weight(severity);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// optimization loop
// ---------------------------------------------------------------------------
struct FitConfig {
  int epochs = 8;
  int warmup_epochs = 1;
  double lr = 2e-3;
  double min_lr = 1e-4;
  double weight_decay = 1e-3;
  double grad_clip = 10.0;
  int steps_per_epoch = 0;   // 0: every training issuance once per epoch
  int segment_max_len = 0;   // 0: one segment covering all points
  int loss_eval_stride = 1;  // subsamples the initial/final train-loss measurement
  int compute_threads = 1;   // kernel worker threads; results are deterministic per setting
  double alpha = 0.25;
  std::uint64_t seed = 1;
  bool verbose = false;
};

struct TraceRow {
  int epoch = 0;
  long step = 0;
  double lr = 0;
  double train_loss = kNaN;
  double val_loss = kNaN;  // filled on epoch boundaries
};

struct FitResult {
  NormStats stats;
  std::vector<TraceRow> trace;
  double initial_train_loss = kNaN;
  double final_train_loss = kNaN;
  double best_val_loss = kNaN;
  int best_epoch = -1;
};

inline double dataset_loss(const Model& m, const SampleSource& data, const std::vector<int>& indices,
                           const std::vector<SegmentPlan>& plans, const NormStats& stats, const FloodThresholds& th,
                           double alpha) {
  if (indices.empty()) return kNaN;
  double total = 0;
  std::size_t count = 0;
  Tape tape;
  tape.recording = false;
  for (int idx : indices) {
    ForecastSample s = data.sample(idx);
    for (const SegmentPlan& plan : plans) {
      ForwardInputs in = make_inputs(s, plan, stats);
      Tensor delta = model_forward(tape, m, in, plan.orders, false, nullptr);
      LossTensors lt = make_loss_tensors(s, plan, th, alpha);
      total += weighted_mse(tape, delta, lt.target, lt.weights).value();
      ++count;
    }
  }
  return total / double(count);
}

inline FitResult fit(Model& model, const SampleSource& data, const std::vector<int>& train_indices,
                     const std::vector<int>& val_indices, const FloodThresholds& thresholds, const FitConfig& cfg) {
  require(!train_indices.empty(), "fit: empty training split");
  ComputePool::instance().set_threads(cfg.compute_threads);
  FitResult res;
  res.stats = compute_norm_stats(data, train_indices);
  std::vector<SegmentPlan> plans = plan_segments(data.points(), res.stats, thresholds, cfg.segment_max_len);

  AdamW opt;
  opt.weight_decay = cfg.weight_decay;
  Rng rng(cfg.seed);
  Rng drop_rng(cfg.seed ^ 0xd20f0ffULL);

  long steps_per_epoch = (cfg.steps_per_epoch > 0 ? cfg.steps_per_epoch : long(train_indices.size())) *
                         long(plans.size());
  long total_steps = steps_per_epoch * cfg.epochs;
  long warmup_steps = steps_per_epoch * cfg.warmup_epochs;

  std::vector<int> loss_probe;
  for (std::size_t i = 0; i < train_indices.size(); i += std::size_t(std::max(1, cfg.loss_eval_stride)))
    loss_probe.push_back(train_indices[i]);
  res.initial_train_loss = dataset_loss(model, data, loss_probe, plans, res.stats, thresholds, cfg.alpha);

  std::vector<double> best_values;
  res.best_val_loss = std::numeric_limits<double>::infinity();
  bool has_val = !val_indices.empty();

  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order = train_indices;
    rng.shuffle(order);
    if (cfg.steps_per_epoch > 0 && cfg.steps_per_epoch < int(order.size()))
      order.resize(std::size_t(cfg.steps_per_epoch));

    double epoch_loss = 0;
    long epoch_batches = 0;
    for (int idx : order) {
      ForecastSample s = data.sample(idx);
      for (const SegmentPlan& plan : plans) {
        double lr = lr_schedule(step, total_steps, warmup_steps, cfg.lr, cfg.min_lr);
        Tape tape;
        ForwardInputs in = make_inputs(s, plan, res.stats);
        Tensor delta = model_forward(tape, model, in, plan.orders, true, &drop_rng);
        LossTensors lt = make_loss_tensors(s, plan, thresholds, cfg.alpha);
        Tensor loss = weighted_mse(tape, delta, lt.target, lt.weights);
        double lv = loss.value();
        if (!std::isfinite(lv))
          fail("fit: non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(step));
        model.params.zero_grads();
        tape.backward(loss);
        clip_global_grad_norm(model.params, cfg.grad_clip);
        opt.step(model.params, lr);
        epoch_loss += lv;
        ++epoch_batches;
        res.trace.push_back({epoch, step, lr, lv, kNaN});
        ++step;
      }
    }

    double val = has_val ? dataset_loss(model, data, val_indices, plans, res.stats, thresholds, cfg.alpha) : kNaN;
    if (!res.trace.empty()) res.trace.back().val_loss = val;
    double mean_train = epoch_batches ? epoch_loss / double(epoch_batches) : kNaN;
    if (cfg.verbose)
      std::fprintf(stderr, "epoch %d  train %.6f  val %.6f\n", epoch, mean_train, val);
    if (has_val && val < res.best_val_loss) {
      res.best_val_loss = val;
      res.best_epoch = epoch;
      best_values.clear();
      model.params.for_each([&](const std::string&, Tensor& p) {
        best_values.insert(best_values.end(), p.data(), p.data() + p.numel());
      });
    }
  }

  if (has_val && !best_values.empty()) {
    std::size_t off = 0;
    model.params.for_each([&](const std::string&, Tensor& p) {
      std::copy(best_values.begin() + std::ptrdiff_t(off), best_values.begin() + std::ptrdiff_t(off + p.numel()),
                p.data());
      off += p.numel();
    });
  }
  res.final_train_loss = dataset_loss(model, data, loss_probe, plans, res.stats, thresholds, cfg.alpha);
  return res;
}

inline void save_loss_trace_csv(const std::vector<TraceRow>& trace, const std::string& path) {
  std::ofstream f(path);
  require(f.good(), "cannot open for writing: " + path);
  f.precision(12);
  f << "epoch,step,lr,train_loss,val_loss\n";
  for (const TraceRow& r : trace) {
    f << r.epoch << ',' << r.step << ',' << r.lr << ',' << r.train_loss << ',';
    if (!is_missing(r.val_loss)) f << r.val_loss;
    f << "\n";
  }
}

}  // namespace rivercast
