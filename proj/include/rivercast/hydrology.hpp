#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "rivercast/common.hpp"

namespace rivercast {

constexpr double kEulerMascheroni = 0.5772156649015329;

inline const std::vector<double>& default_return_periods() {
  static const std::vector<double> rps = {1.5, 2, 5, 10, 20, 50, 100, 200, 500};
  return rps;
}

// ---------------------------------------------------------------------------
// Annual maxima. One maximum per calendar year; years with more than 20% of
// days missing are dropped. Missing values are NaN.
// ---------------------------------------------------------------------------
inline std::vector<double> annual_maxima(const std::vector<double>& series, const Date& start, int min_years = 0) {
  std::int64_t day0 = days_from_civil(start);
  struct YearAcc {
    double max = -std::numeric_limits<double>::infinity();
    int present = 0;
  };
  std::map<int, YearAcc> years;
  for (std::size_t i = 0; i < series.size(); ++i) {
    Date d = civil_from_days(day0 + std::int64_t(i));
    YearAcc& acc = years[d.year];
    if (!is_missing(series[i])) {
      acc.max = std::max(acc.max, series[i]);
      ++acc.present;
    }
  }
  std::vector<double> maxima;
  for (auto& [year, acc] : years) {
    int len = is_leap_year(year) ? 366 : 365;
    if (acc.present < int(std::ceil(0.8 * len))) continue;  // >20% missing
    maxima.push_back(acc.max);
  }
  if (int(maxima.size()) < min_years) fail("insufficient record: " + std::to_string(maxima.size()) + " usable years");
  return maxima;
}

// ---------------------------------------------------------------------------
// First two sample L-moments from the unbiased probability-weighted moments:
//   b0 = mean, b1 = (1/n) sum x_(i) (i-1)/(n-1) over ascending order stats
//   lambda1 = b0, lambda2 = 2 b1 - b0
// ---------------------------------------------------------------------------
inline std::pair<double, double> lmoments(std::vector<double> sample) {
  std::size_t n = sample.size();
  require(n >= 2, "lmoments: need at least two values");
  std::sort(sample.begin(), sample.end());
  double b0 = 0, b1 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    b0 += sample[i];
    b1 += sample[i] * double(i) / double(n - 1);
  }
  b0 /= double(n);
  b1 /= double(n);
  return {b0, 2.0 * b1 - b0};
}

// Gumbel parameters by L-moments: beta = lambda2/ln 2, mu = lambda1 - gamma*beta.
// A degenerate (constant) sample maps to beta = 0, mu = lambda1.
struct GumbelFit {
  double mu = 0;
  double beta = 0;
};

inline GumbelFit gumbel_fit(const std::vector<double>& maxima) {
  auto [l1, l2] = lmoments(maxima);
  if (l2 <= 0) return {l1, 0.0};
  double beta = l2 / std::log(2.0);
  return {l1 - kEulerMascheroni * beta, beta};
}

// Gumbel quantile at the annual non-exceedance probability 1 - 1/RP
inline double return_level(double return_period_years, double mu, double beta) {
  require(return_period_years > 1.0, "return_level: return period must exceed 1 year");
  return mu - beta * std::log(-std::log(1.0 - 1.0 / return_period_years));
}

// ---------------------------------------------------------------------------
// Per-point thresholds for the standard return periods
// ---------------------------------------------------------------------------
struct FloodThresholds {
  std::vector<double> return_periods;        // ascending
  std::vector<std::int64_t> point_ids;
  std::vector<double> thetas;                // [point][rp], row-major
  std::vector<double> mu, beta;              // fit metadata per point
  std::vector<int> n_years;

  int points() const { return int(point_ids.size()); }
  int rps() const { return int(return_periods.size()); }
  double theta(int point, int rp_index) const { return thetas[std::size_t(point) * return_periods.size() + rp_index]; }
};

inline FloodThresholds fit_flood_thresholds(const std::vector<std::int64_t>& point_ids,
                                            const std::vector<std::vector<double>>& daily_series, const Date& start,
                                            const std::vector<double>& rps = default_return_periods(),
                                            int min_years = 5) {
  require(point_ids.size() == daily_series.size(), "fit_flood_thresholds: id/series count mismatch");
  FloodThresholds out;
  out.return_periods = rps;
  out.point_ids = point_ids;
  out.thetas.resize(point_ids.size() * rps.size());
  out.mu.resize(point_ids.size());
  out.beta.resize(point_ids.size());
  out.n_years.resize(point_ids.size());
  for (std::size_t p = 0; p < point_ids.size(); ++p) {
    std::vector<double> maxima = annual_maxima(daily_series[p], start, min_years);
    GumbelFit fit = gumbel_fit(maxima);
    out.mu[p] = fit.mu;
    out.beta[p] = fit.beta;
    out.n_years[p] = int(maxima.size());
    for (std::size_t r = 0; r < rps.size(); ++r)
      out.thetas[p * rps.size() + r] = std::max(0.0, return_level(rps[r], fit.mu, fit.beta));
    // a zero scale can leave numerically equal levels; enforce monotonicity
    for (std::size_t r = 1; r < rps.size(); ++r)
      out.thetas[p * rps.size() + r] = std::max(out.thetas[p * rps.size() + r], out.thetas[p * rps.size() + r - 1]);
  }
  return out;
}

// largest return period whose threshold is met; 0 when below all of them
inline double severity_rank(double discharge, const FloodThresholds& th, int point) {
  double rank = 0;
  for (int r = 0; r < th.rps(); ++r)
    if (discharge >= th.theta(point, r)) rank = th.return_periods[std::size_t(r)];
  return rank;
}

// event series at one return period: day is an event iff discharge >= theta_r
inline std::vector<std::uint8_t> classify_events(const std::vector<double>& series, const FloodThresholds& th,
                                                 int point, double return_period) {
  int rp_index = -1;
  for (int r = 0; r < th.rps(); ++r)
    if (th.return_periods[std::size_t(r)] == return_period) rp_index = r;
  require(rp_index >= 0, "classify_events: return period not in thresholds");
  double theta = th.theta(point, rp_index);
  std::vector<std::uint8_t> events(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) events[i] = (!is_missing(series[i]) && series[i] >= theta) ? 1 : 0;
  return events;
}

// --- CSV: (point_id, rp, theta, mu, beta, n_years) ---
inline void save_thresholds_csv(const FloodThresholds& th, const std::string& path) {
  std::ofstream f(path);
  require(f.good(), "cannot open for writing: " + path);
  f.precision(17);
  f << "point_id,rp,theta,mu,beta,n_years\n";
  for (int p = 0; p < th.points(); ++p)
    for (int r = 0; r < th.rps(); ++r)
      f << th.point_ids[std::size_t(p)] << ',' << th.return_periods[std::size_t(r)] << ',' << th.theta(p, r) << ','
        << th.mu[std::size_t(p)] << ',' << th.beta[std::size_t(p)] << ',' << th.n_years[std::size_t(p)] << "\n";
}

inline FloodThresholds load_thresholds_csv(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "cannot open for reading: " + path);
  std::string line;
  require(bool(std::getline(f, line)), "thresholds CSV is empty");
  require(line == "point_id,rp,theta,mu,beta,n_years", "unexpected thresholds CSV header: " + line);
  FloodThresholds th;
  std::map<std::int64_t, std::map<double, double>> table;
  std::map<std::int64_t, std::tuple<double, double, int>> meta;
  std::vector<std::int64_t> order;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<std::string> cols;
    while (std::getline(ss, tok, ',')) cols.push_back(tok);
    require(cols.size() == 6, "malformed thresholds CSV row: " + line);
    std::int64_t id = std::stoll(cols[0]);
    if (!table.count(id)) order.push_back(id);
    table[id][std::stod(cols[1])] = std::stod(cols[2]);
    meta[id] = {std::stod(cols[3]), std::stod(cols[4]), std::stoi(cols[5])};
  }
  require(!order.empty(), "thresholds CSV has no rows");
  for (auto& [rp, theta] : table[order.front()]) th.return_periods.push_back(rp);
  for (std::int64_t id : order) {
    th.point_ids.push_back(id);
    require(table[id].size() == th.return_periods.size(), "inconsistent return periods in thresholds CSV");
    for (double rp : th.return_periods) th.thetas.push_back(table[id].at(rp));
    auto [mu, beta, ny] = meta[id];
    th.mu.push_back(mu);
    th.beta.push_back(beta);
    th.n_years.push_back(ny);
  }
  return th;
}

}  // namespace rivercast
