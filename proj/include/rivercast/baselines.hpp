#pragma once

#include <algorithm>
#include <fstream>
#include <sstream>

#include "rivercast/common.hpp"

namespace rivercast {

// every lead repeats the discharge of the day before issuance
inline std::vector<double> persistence_forecast(const std::vector<double>& x_prev, int leads) {
  std::vector<double> out(std::size_t(leads) * x_prev.size());
  for (int l = 0; l < leads; ++l)
    std::copy(x_prev.begin(), x_prev.end(), out.begin() + std::ptrdiff_t(l) * std::ptrdiff_t(x_prev.size()));
  return out;
}

// ---------------------------------------------------------------------------
// Climatology: 11 quantiles (0%, 10%, .., 100%) per point and day-of-year,
// pooled over a 31-day window centered on the day, wrapping year boundaries
// on the fixed 366-slot calendar.
// ---------------------------------------------------------------------------
constexpr int kClimatologyQuantiles = 11;
constexpr int kClimatologySlots = 366;

struct ClimatologyTable {
  int points = 0;
  std::vector<double> q;  // [point][slot][quantile]

  double at(int point, int slot1based, int quantile) const {
    return q[(std::size_t(point) * kClimatologySlots + std::size_t(slot1based - 1)) * kClimatologyQuantiles +
             std::size_t(quantile)];
  }
};

inline double quantile_sorted(const std::vector<double>& sorted, double level) {
  require(!sorted.empty(), "quantile of empty sample");
  if (sorted.size() == 1) return sorted[0];
  double pos = level * double(sorted.size() - 1);
  std::size_t lo = std::size_t(pos);
  if (lo >= sorted.size() - 1) return sorted.back();
  double frac = pos - double(lo);
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

// history is [day][point] row-major; start anchors calendar days
inline ClimatologyTable build_climatology(const std::vector<double>& history, int days, int points, const Date& start,
                                          int window = 31, int n_threads = 1) {
  require(days >= 730, "build_climatology: need at least two years of history");
  require(int(history.size()) == days * points, "build_climatology: history size mismatch");
  int half = window / 2;
  std::int64_t day0 = days_from_civil(start);
  std::vector<int> slot_of_day(std::size_t(days), 0);
  for (int d = 0; d < days; ++d) slot_of_day[std::size_t(d)] = doy366(civil_from_days(day0 + d)) - 1;

  // membership of calendar slots in each window, wrapping at year boundaries
  std::vector<std::vector<int>> days_in_slot(kClimatologySlots);
  for (int d = 0; d < days; ++d) days_in_slot[std::size_t(slot_of_day[std::size_t(d)])].push_back(d);

  ClimatologyTable table;
  table.points = points;
  table.q.assign(std::size_t(points) * kClimatologySlots * kClimatologyQuantiles, kNaN);
  parallel_for(std::size_t(points), n_threads, [&](std::size_t p) {
    for (int slot = 0; slot < kClimatologySlots; ++slot) {
      std::vector<double> pool;
      for (int off = -half; off <= half; ++off) {
        int s = ((slot + off) % kClimatologySlots + kClimatologySlots) % kClimatologySlots;
        for (int d : days_in_slot[std::size_t(s)]) {
          double v = history[std::size_t(d) * points + p];
          if (!is_missing(v)) pool.push_back(v);
        }
      }
      if (pool.empty()) continue;
      std::sort(pool.begin(), pool.end());
      for (int k = 0; k < kClimatologyQuantiles; ++k)
        table.q[(p * kClimatologySlots + std::size_t(slot)) * kClimatologyQuantiles + std::size_t(k)] =
            quantile_sorted(pool, double(k) / double(kClimatologyQuantiles - 1));
    }
  });
  return table;
}

// deterministic climatology forecast: quantile_index 5 is the median
inline std::vector<double> climatology_forecast(const ClimatologyTable& table, const Date& issuance, int leads,
                                                int quantile_index = 5) {
  require(quantile_index >= 0 && quantile_index < kClimatologyQuantiles, "bad quantile index");
  std::int64_t day0 = days_from_civil(issuance);
  std::vector<double> out(std::size_t(leads) * table.points);
  for (int l = 1; l <= leads; ++l) {
    int slot = doy366(civil_from_days(day0 + l));
    for (int p = 0; p < table.points; ++p)
      out[std::size_t(l - 1) * table.points + std::size_t(p)] = table.at(p, slot, quantile_index);
  }
  return out;
}

// --- CSV: (point_id, doy, q0..q100) ---
inline void save_climatology_csv(const ClimatologyTable& table, const std::vector<std::int64_t>& point_ids,
                                 const std::string& path) {
  require(int(point_ids.size()) == table.points, "climatology CSV: id count mismatch");
  std::ofstream f(path);
  require(f.good(), "cannot open for writing: " + path);
  f.precision(17);
  f << "point_id,doy";
  for (int k = 0; k < kClimatologyQuantiles; ++k) f << ",q" << k * 10;
  f << "\n";
  for (int p = 0; p < table.points; ++p)
    for (int slot = 1; slot <= kClimatologySlots; ++slot) {
      f << point_ids[std::size_t(p)] << ',' << slot;
      for (int k = 0; k < kClimatologyQuantiles; ++k) f << ',' << table.at(p, slot, k);
      f << "\n";
    }
}

}  // namespace rivercast
