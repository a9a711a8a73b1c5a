#pragma once

#include <algorithm>

#include "rivercast/common.hpp"

namespace rivercast {

// ---------------------------------------------------------------------------
// Continuous skill of a forecast series against observations. Entries where
// either side is missing are dropped first. Metrics that need observed (or
// predicted) variance are flagged undefined instead of being zero-filled.
// ---------------------------------------------------------------------------
struct ContinuousMetrics {
  double mae = kNaN;
  double rmse = kNaN;
  double r = kNaN;
  double r2 = kNaN;
  double kge = kNaN;
  bool r_defined = false;
  bool r2_defined = false;
  bool kge_defined = false;
  std::size_t n = 0;
};

inline ContinuousMetrics continuous_metrics(const std::vector<double>& obs, const std::vector<double>& pred) {
  require(obs.size() == pred.size(), "continuous_metrics: series lengths differ");
  std::vector<double> o, p;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (is_missing(obs[i]) || is_missing(pred[i])) continue;
    o.push_back(obs[i]);
    p.push_back(pred[i]);
  }
  require(o.size() >= 2, "continuous_metrics: need at least two paired values");
  std::size_t n = o.size();

  double mo = 0, mp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mo += o[i];
    mp += p[i];
  }
  mo /= double(n);
  mp /= double(n);

  ContinuousMetrics m;
  m.n = n;
  double se = 0, ae = 0, so = 0, sp = 0, cov = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double e = o[i] - p[i];
    ae += std::abs(e);
    se += e * e;
    so += (o[i] - mo) * (o[i] - mo);
    sp += (p[i] - mp) * (p[i] - mp);
    cov += (o[i] - mo) * (p[i] - mp);
  }
  m.mae = ae / double(n);
  m.rmse = std::sqrt(se / double(n));

  if (so > 0) {
    m.r2 = 1.0 - se / so;
    m.r2_defined = true;
  }
  if (so > 0 && sp > 0) {
    m.r = cov / (std::sqrt(so) * std::sqrt(sp));
    m.r_defined = true;
    if (mo != 0.0 && mp != 0.0) {
      double beta = mp / mo;
      double cv_o = std::sqrt(so / double(n)) / mo;
      double cv_p = std::sqrt(sp / double(n)) / mp;
      double gamma = cv_p / cv_o;
      m.kge = 1.0 - std::sqrt((m.r - 1) * (m.r - 1) + (beta - 1) * (beta - 1) + (gamma - 1) * (gamma - 1));
      m.kge_defined = true;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Event skill. F1 uses the direct form 2TP/(2TP+FP+FN), which stays defined
// (and zero) when recall is zero but precision is not computable.
// ---------------------------------------------------------------------------
struct EventMetrics {
  long tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = kNaN;
  double recall = kNaN;
  double f1 = kNaN;
  bool precision_defined = false;
  bool recall_defined = false;
  bool f1_defined = false;
};

inline EventMetrics event_metrics(const std::vector<std::uint8_t>& obs_events,
                                  const std::vector<std::uint8_t>& pred_events) {
  require(obs_events.size() == pred_events.size(), "event_metrics: series lengths differ");
  EventMetrics m;
  for (std::size_t i = 0; i < obs_events.size(); ++i) {
    if (obs_events[i] && pred_events[i]) ++m.tp;
    else if (!obs_events[i] && pred_events[i]) ++m.fp;
    else if (obs_events[i] && !pred_events[i]) ++m.fn;
    else ++m.tn;
  }
  if (m.tp + m.fp > 0) {
    m.precision = double(m.tp) / double(m.tp + m.fp);
    m.precision_defined = true;
  }
  if (m.tp + m.fn > 0) {
    m.recall = double(m.tp) / double(m.tp + m.fn);
    m.recall_defined = true;
  }
  if (2 * m.tp + m.fp + m.fn > 0) {
    m.f1 = 2.0 * double(m.tp) / double(2 * m.tp + m.fp + m.fn);
    m.f1_defined = true;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Aggregation over points: mean and median of the defined values, with the
// undefined count reported
// ---------------------------------------------------------------------------
struct Aggregate {
  double mean = kNaN;
  double median = kNaN;
  std::size_t n_valid = 0;
  std::size_t n_undefined = 0;
};

inline Aggregate aggregate_values(std::vector<double> values) {
  Aggregate a;
  std::vector<double> valid;
  for (double v : values) {
    if (is_missing(v)) ++a.n_undefined;
    else valid.push_back(v);
  }
  a.n_valid = valid.size();
  if (valid.empty()) return a;
  double s = 0;
  for (double v : valid) s += v;
  a.mean = s / double(valid.size());
  std::sort(valid.begin(), valid.end());
  std::size_t n = valid.size();
  a.median = n % 2 ? valid[n / 2] : 0.5 * (valid[n / 2 - 1] + valid[n / 2]);
  return a;
}

// per-point report for one forecaster: continuous metrics per lead, event
// metrics per (lead, return period)
struct PointReport {
  std::int64_t point_id = 0;
  std::vector<ContinuousMetrics> by_lead;
  std::vector<std::vector<EventMetrics>> events;  // [lead][rp]
};

struct MetricSummary {
  std::vector<double> leads;            // 1..L
  std::vector<double> return_periods;
  // aggregates over points, one per lead
  std::vector<Aggregate> mae, rmse, r, r2, kge;
  // event aggregates [lead][rp]
  std::vector<std::vector<Aggregate>> f1, precision, recall;
  // headline numbers: mean/median over points and leads; F1 restricted to
  // return periods 1.5..20
  Aggregate r2_all, kge_all, f1_small_rps;
};

inline MetricSummary aggregate_reports(const std::vector<PointReport>& reports,
                                       const std::vector<double>& return_periods) {
  require(!reports.empty(), "aggregate_reports: no points");
  std::size_t n_leads = reports.front().by_lead.size();
  std::size_t n_rps = return_periods.size();
  MetricSummary s;
  s.return_periods = return_periods;
  for (std::size_t l = 0; l < n_leads; ++l) s.leads.push_back(double(l + 1));

  auto collect = [&](auto&& get) {
    std::vector<Aggregate> out;
    for (std::size_t l = 0; l < n_leads; ++l) {
      std::vector<double> vals;
      for (const PointReport& r : reports) vals.push_back(get(r.by_lead[l]));
      out.push_back(aggregate_values(std::move(vals)));
    }
    return out;
  };
  s.mae = collect([](const ContinuousMetrics& m) { return m.mae; });
  s.rmse = collect([](const ContinuousMetrics& m) { return m.rmse; });
  s.r = collect([](const ContinuousMetrics& m) { return m.r_defined ? m.r : kNaN; });
  s.r2 = collect([](const ContinuousMetrics& m) { return m.r2_defined ? m.r2 : kNaN; });
  s.kge = collect([](const ContinuousMetrics& m) { return m.kge_defined ? m.kge : kNaN; });

  s.f1.resize(n_leads);
  s.precision.resize(n_leads);
  s.recall.resize(n_leads);
  for (std::size_t l = 0; l < n_leads; ++l)
    for (std::size_t r = 0; r < n_rps; ++r) {
      std::vector<double> f1v, pv, rv;
      for (const PointReport& rep : reports) {
        const EventMetrics& m = rep.events[l][r];
        f1v.push_back(m.f1_defined ? m.f1 : kNaN);
        pv.push_back(m.precision_defined ? m.precision : kNaN);
        rv.push_back(m.recall_defined ? m.recall : kNaN);
      }
      s.f1[l].push_back(aggregate_values(std::move(f1v)));
      s.precision[l].push_back(aggregate_values(std::move(pv)));
      s.recall[l].push_back(aggregate_values(std::move(rv)));
    }

  {
    std::vector<double> r2v, kgev, f1v;
    for (const PointReport& rep : reports)
      for (std::size_t l = 0; l < n_leads; ++l) {
        r2v.push_back(rep.by_lead[l].r2_defined ? rep.by_lead[l].r2 : kNaN);
        kgev.push_back(rep.by_lead[l].kge_defined ? rep.by_lead[l].kge : kNaN);
        for (std::size_t r = 0; r < n_rps; ++r)
          if (return_periods[r] >= 1.5 && return_periods[r] <= 20.0)
            f1v.push_back(rep.events[l][r].f1_defined ? rep.events[l][r].f1 : kNaN);
      }
    s.r2_all = aggregate_values(std::move(r2v));
    s.kge_all = aggregate_values(std::move(kgev));
    s.f1_small_rps = aggregate_values(std::move(f1v));
  }
  return s;
}

}  // namespace rivercast
