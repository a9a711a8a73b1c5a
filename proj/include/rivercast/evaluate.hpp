#pragma once

#include "rivercast/baselines.hpp"
#include "rivercast/metrics.hpp"
#include "rivercast/training.hpp"

namespace rivercast {

// a forecaster maps one sample to [L, P] discharge in m^3/s
using ForecastFn = std::function<std::vector<double>(const ForecastSample&)>;

inline ForecastFn persistence_forecaster() {
  return [](const ForecastSample& s) { return persistence_forecast(s.x_prev, s.L); };
}

inline ForecastFn climatology_forecaster(const ClimatologyTable& table, int quantile_index = 5) {
  return [&table, quantile_index](const ForecastSample& s) {
    return climatology_forecast(table, s.issuance, s.L, quantile_index);
  };
}

// target passthrough, for wiring checks
inline ForecastFn oracle_forecaster() {
  return [](const ForecastSample& s) { return s.target; };
}

inline ForecastFn model_forecaster(const Model& model, const NormStats& stats, const PointSet& points,
                                   const FloodThresholds& thresholds, int segment_max_len = 0) {
  auto plans = std::make_shared<std::vector<SegmentPlan>>(plan_segments(points, stats, thresholds, segment_max_len));
  return [&model, &stats, plans](const ForecastSample& s) {
    Tape tape;
    tape.recording = false;
    std::vector<double> out(std::size_t(s.L) * s.P, kNaN);
    for (const SegmentPlan& plan : *plans) {
      ForwardInputs in = make_inputs(s, plan, stats);
      Tensor delta = model_forward(tape, model, in, plan.orders, false, nullptr);
      std::vector<double> xprev_seg(plan.point_indices.size());
      for (std::size_t j = 0; j < plan.point_indices.size(); ++j)
        xprev_seg[j] = s.x_prev[std::size_t(plan.point_indices[j])];
      std::vector<double> dv(delta.data(), delta.data() + delta.numel());
      std::vector<double> q = reconstruct_discharge(dv, xprev_seg);
      for (int l = 0; l < s.L; ++l)
        for (std::size_t j = 0; j < plan.point_indices.size(); ++j)
          out[std::size_t(l) * s.P + std::size_t(plan.point_indices[j])] =
              q[std::size_t(l) * plan.point_indices.size() + j];
    }
    return out;
  };
}

// ---------------------------------------------------------------------------
// metric protocol: per point and lead, the forecast series across issuances
// is scored against observed discharge; events are classified per return
// period with the same thresholds on both sides
// ---------------------------------------------------------------------------
inline std::vector<PointReport> evaluate_forecaster(const SampleSource& data, const std::vector<int>& indices,
                                                    const ForecastFn& forecaster, const FloodThresholds& thresholds,
                                                    int n_threads = 1) {
  require(!indices.empty(), "evaluate_forecaster: no samples");
  ForecastSample first = data.sample(indices.front());
  int leads = first.L;
  int p_count = first.P;
  std::size_t n_t = indices.size();

  // forecast passes are the expensive part; gather obs/pred once
  std::vector<double> obs(n_t * std::size_t(leads) * p_count);
  std::vector<double> pred(n_t * std::size_t(leads) * p_count);
  for (std::size_t i = 0; i < n_t; ++i) {
    ForecastSample s = data.sample(indices[i]);
    std::vector<double> f = forecaster(s);
    require(f.size() == std::size_t(leads) * p_count, "forecaster returned wrong shape");
    std::copy(s.target.begin(), s.target.end(), obs.begin() + std::ptrdiff_t(i * std::size_t(leads) * p_count));
    std::copy(f.begin(), f.end(), pred.begin() + std::ptrdiff_t(i * std::size_t(leads) * p_count));
  }

  std::vector<int> th_rows = threshold_rows_for(data.points(), thresholds);
  std::vector<PointReport> reports{std::size_t(p_count)};
  parallel_for(std::size_t(p_count), n_threads, [&](std::size_t p) {
    PointReport rep;
    rep.point_id = data.points()[int(p)].id;
    for (int l = 0; l < leads; ++l) {
      std::vector<double> o(n_t), f(n_t);
      for (std::size_t i = 0; i < n_t; ++i) {
        o[i] = obs[(i * std::size_t(leads) + std::size_t(l)) * p_count + p];
        f[i] = pred[(i * std::size_t(leads) + std::size_t(l)) * p_count + p];
      }
      rep.by_lead.push_back(continuous_metrics(o, f));
      std::vector<EventMetrics> ev;
      for (double rp : thresholds.return_periods) {
        std::vector<std::uint8_t> oe = classify_events(o, thresholds, th_rows[p], rp);
        std::vector<std::uint8_t> fe = classify_events(f, thresholds, th_rows[p], rp);
        ev.push_back(event_metrics(oe, fe));
      }
      rep.events.push_back(std::move(ev));
    }
    reports[p] = std::move(rep);
  });
  return reports;
}

// chronological split of sample indices by issuance day: [0, train_end) is
// train, [train_end, val_end) validation, the rest test
struct SplitIndices {
  std::vector<int> train, val, test;
};

inline SplitIndices chronological_split(const SampleSource& data, int train_end_day, int val_end_day) {
  require(train_end_day <= val_end_day, "split: train must precede validation");
  SplitIndices s;
  for (int i = 0; i < data.size(); ++i) {
    int t = data.issuance_day(i);
    if (t < train_end_day) s.train.push_back(i);
    else if (t < val_end_day) s.val.push_back(i);
    else s.test.push_back(i);
  }
  return s;
}

}  // namespace rivercast
