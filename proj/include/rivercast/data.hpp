#pragma once

#include <sstream>

#include "rivercast/binio.hpp"
#include "rivercast/geometry.hpp"

namespace rivercast {

// channel widths of the synthetic sources
constexpr int kVe = 6;  // reanalysis-like land surface channels
constexpr int kVg = 3;  // discharge-reanalysis-like channels
constexpr int kVc = 1;  // gauge-precipitation-like channel
constexpr int kVh = 3;  // weather-forecast-like channels
constexpr int kVs = 8;  // static river attributes

// ---------------------------------------------------------------------------
// Tree-structured river network on a grid. Every point has at most one
// downstream neighbor and reaches a root.
// ---------------------------------------------------------------------------
struct SyntheticNetwork {
  PointSet points;
  std::vector<int> downstream;             // -1 at roots
  std::vector<std::vector<int>> upstream;  // children
  std::vector<double> reservoir_k;         // linear reservoir constant, days
  std::vector<double> runoff_coef;
  std::vector<int> drainage;               // upstream count + 1
  std::vector<int> depth;                  // hops from root
};

struct NetworkOptions {
  double lat0 = 45.0, lat1 = 47.0;
  double lon0 = 8.0, lon1 = 10.0;
  int roots = 0;  // 0: pick max(1, n/64)
};

inline SyntheticNetwork generate_network(std::uint64_t seed, int grid_w, int grid_h, int n_points,
                                         const NetworkOptions& opt = {}) {
  require(n_points >= 1 && n_points <= grid_w * grid_h, "generate_network: point count exceeds grid");
  Rng rng(seed);

  std::vector<int> cells(std::size_t(grid_w) * std::size_t(grid_h));
  for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = int(i);
  rng.shuffle(cells);
  cells.resize(std::size_t(n_points));

  int n_roots = opt.roots > 0 ? opt.roots : std::max(1, n_points / 64);
  n_roots = std::min(n_roots, n_points);

  SyntheticNetwork net;
  net.downstream.assign(std::size_t(n_points), -1);
  net.upstream.resize(std::size_t(n_points));
  net.depth.assign(std::size_t(n_points), 0);

  std::vector<int> gx(std::size_t(n_points), 0);
  std::vector<int> gy(std::size_t(n_points), 0);
  for (int i = 0; i < n_points; ++i) {
    gx[std::size_t(i)] = cells[std::size_t(i)] % grid_w;
    gy[std::size_t(i)] = cells[std::size_t(i)] / grid_w;
  }

  // attach each later point to the nearest already-attached point
  for (int i = n_roots; i < n_points; ++i) {
    int best = -1;
    long best_d = std::numeric_limits<long>::max();
    for (int j = 0; j < i; ++j) {
      long dx = gx[std::size_t(i)] - gx[std::size_t(j)];
      long dy = gy[std::size_t(i)] - gy[std::size_t(j)];
      long d = dx * dx + dy * dy;
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    net.downstream[std::size_t(i)] = best;
    net.upstream[std::size_t(best)].push_back(i);
    net.depth[std::size_t(i)] = net.depth[std::size_t(best)] + 1;
  }

  net.drainage.assign(std::size_t(n_points), 1);
  for (int i = n_points - 1; i >= 0; --i) {  // children always have larger index
    int d = net.downstream[std::size_t(i)];
    if (d >= 0) net.drainage[std::size_t(d)] += net.drainage[std::size_t(i)];
  }

  net.reservoir_k.resize(std::size_t(n_points));
  net.runoff_coef.resize(std::size_t(n_points));
  std::vector<double> elev(std::size_t(n_points), 0.0);
  for (int i = 0; i < n_points; ++i) {
    net.reservoir_k[std::size_t(i)] = rng.uniform(3.0, 8.0);
    net.runoff_coef[std::size_t(i)] = rng.uniform(0.3, 0.9);
    // downstream neighbors are strictly lower
    elev[std::size_t(i)] = 50.0 + 40.0 * net.depth[std::size_t(i)] + rng.uniform(0.0, 20.0);
  }

  net.points = PointSet(grid_w, grid_h);
  for (int i = 0; i < n_points; ++i) {
    GeoPoint p;
    p.id = std::int64_t(gy[std::size_t(i)]) * grid_w + gx[std::size_t(i)];
    p.gx = gx[std::size_t(i)];
    p.gy = gy[std::size_t(i)];
    p.lat = opt.lat0 + (gy[std::size_t(i)] + 0.5) / double(grid_h) * (opt.lat1 - opt.lat0);
    p.lon = opt.lon0 + (gx[std::size_t(i)] + 0.5) / double(grid_w) * (opt.lon1 - opt.lon0);
    p.elevation = elev[std::size_t(i)];
    auto xyz = wgs84_cartesian(p.lat, p.lon, p.elevation);
    p.static_attrs = {std::log1p(double(net.drainage[std::size_t(i)])),
                      p.elevation / 100.0,
                      net.reservoir_k[std::size_t(i)],
                      net.runoff_coef[std::size_t(i)],
                      net.downstream[std::size_t(i)] < 0 ? 1.0 : 0.0,
                      xyz[0] / kWgs84A,
                      xyz[1] / kWgs84A,
                      xyz[2] / kWgs84A};
    net.points.add(std::move(p));
  }
  return net;
}

// ---------------------------------------------------------------------------
// Daily simulation. Local runoff through a linear reservoir, routed
// downstream with a one-day-per-hop lag; the forecast-like forcing is the
// true future corrupted by noise that grows with lead time.
// ---------------------------------------------------------------------------
struct SimulateOptions {
  int leads = 7;
  double precip_scale = 1.0;
  bool noisy_views = true;   // noise on the input channels and forecasts
  Date start{2000, 1, 1};
};

struct Simulation {
  int days = 0;
  int n_points = 0;
  int leads = 0;
  Date start;
  std::vector<double> precip;     // [day][P], truth
  std::vector<double> discharge;  // [day][P], truth, m^3/s
  std::vector<double> era5;       // [day][P][Ve]
  std::vector<double> glofas;     // [day][P][Vg]
  std::vector<double> cpc;        // [day][P][1]
  std::vector<double> hres;       // [day][L][P][Vh]; forecast issued each day

  double discharge_at(int day, int p) const { return discharge[std::size_t(day) * n_points + p]; }

  std::vector<double> discharge_series(int p) const {
    std::vector<double> s(std::size_t(days), 0.0);
    for (int d = 0; d < days; ++d) s[std::size_t(d)] = discharge_at(d, p);
    return s;
  }
};

inline Simulation simulate(const SyntheticNetwork& net, int days, std::uint64_t seed,
                           const SimulateOptions& opt = {}) {
  require(days >= 400, "simulate: need at least 400 days");
  int P = net.points.size();
  int L = opt.leads;
  Rng rng(seed ^ 0x5117ab1eULL);

  Simulation sim;
  sim.days = days;
  sim.n_points = P;
  sim.leads = L;
  sim.start = opt.start;
  sim.precip.assign(std::size_t(days) * P, 0.0);
  sim.discharge.assign(std::size_t(days) * P, 0.0);
  sim.era5.assign(std::size_t(days) * P * kVe, 0.0);
  sim.glofas.assign(std::size_t(days) * P * kVg, 0.0);
  sim.cpc.assign(std::size_t(days) * P * kVc, 0.0);
  sim.hres.assign(std::size_t(days) * std::size_t(L) * P * kVh, kNaN);

  // --- truth pass: precipitation, storage, routing ---
  std::vector<double> storage(std::size_t(P), 0.0);
  std::vector<double> q_local(std::size_t(days) * P, 0.0);
  std::vector<double> temperature(std::size_t(days) * P, 0.0);
  std::int64_t day0 = days_from_civil(opt.start);
  for (int d = 0; d < days; ++d) {
    Date date = civil_from_days(day0 + d);
    double frac = double(doy366(date)) / 366.0;
    double season = 2.5 * (1.0 + 0.8 * std::sin(6.283185307179586 * frac - 1.5707963267948966));

    // up to two regional storm cells per day, heavy-tailed intensity
    struct Storm {
      int center;
      double radius, peak;
    };
    std::vector<Storm> storms;
    for (int k = 0; k < 2; ++k) {
      double p_storm = k == 0 ? 0.10 : 0.03;
      bool hit = rng.uniform() < p_storm;
      int center = int(rng.below(std::uint64_t(P)));
      double radius = rng.uniform(2.5, 8.0);
      double peak = std::min(300.0, 12.0 * std::pow(std::max(1e-9, rng.uniform()), -0.7));
      if (hit) storms.push_back({center, radius, peak});
    }

    for (int p = 0; p < P; ++p) {
      double pr = season * (0.6 + 0.8 * rng.uniform());
      for (const Storm& s : storms) {
        double dx = net.points[p].gx - net.points[s.center].gx;
        double dy = net.points[p].gy - net.points[s.center].gy;
        double sig = s.radius * 0.5;
        pr += s.peak * std::exp(-(dx * dx + dy * dy) / (2.0 * sig * sig));
      }
      pr *= opt.precip_scale;
      sim.precip[std::size_t(d) * P + p] = pr;

      // outflow is drawn from the carried-over storage; today's runoff enters
      // afterwards and shows up in discharge from the next day on
      double q = storage[std::size_t(p)] / net.reservoir_k[std::size_t(p)];
      storage[std::size_t(p)] -= q;
      storage[std::size_t(p)] += net.runoff_coef[std::size_t(p)] * pr;
      q_local[std::size_t(d) * P + p] = q;

      double elev = net.points[p].elevation;
      temperature[std::size_t(d) * P + p] =
          12.0 + 10.0 * std::sin(6.283185307179586 * frac - 2.0) - elev / 300.0 + 1.5 * rng.normal();

      double routed = q;
      for (int u : net.upstream[std::size_t(p)])
        if (d > 0) routed += sim.discharge[std::size_t(d - 1) * P + u];
      sim.discharge[std::size_t(d) * P + p] = routed;
    }
  }

  // --- noisy views of the truth (the hindcast input channels) ---
  // water-volume channels are reported log-compressed, the usual hydrological
  // preprocessing for heavy-tailed magnitudes
  auto nz = [&](double scale) { return opt.noisy_views ? scale * rng.normal() : 0.0; };
  for (int d = 0; d < days; ++d)
    for (int p = 0; p < P; ++p) {
      std::size_t dp = std::size_t(d) * P + p;
      double pr = sim.precip[dp];
      double q = sim.discharge[dp];
      double ql = q_local[dp];
      // end-of-day storage: what the outflow will draw from tomorrow
      double st = ql * net.reservoir_k[std::size_t(p)] - ql + net.runoff_coef[std::size_t(p)] * pr;
      double tmp = temperature[dp];
      double* e = sim.era5.data() + dp * kVe;
      e[0] = std::log1p(pr) + nz(0.05);
      e[1] = tmp + nz(0.5);
      e[2] = std::log1p(st) + nz(0.05);
      e[3] = std::log1p(ql) + nz(0.05);
      e[4] = std::max(0.0, 0.25 * tmp) * (1.0 + nz(0.1));
      e[5] = std::max(0.0, -tmp) * 0.5 * (1.0 + nz(0.1));
      double* g = sim.glofas.data() + dp * kVg;
      g[0] = std::log1p(q) + nz(0.025);
      g[1] = std::log1p(st) + nz(0.025);
      g[2] = std::log1p(ql) + nz(0.025);
      sim.cpc[dp] = std::log1p(pr) + nz(0.08);
    }

  // --- forecast-like forcing: future truth with lead-dependent corruption ---
  for (int t = 0; t < days; ++t)
    for (int l = 1; l <= L; ++l) {
      if (t + l >= days) {
        if (opt.noisy_views)  // keep the noise stream aligned regardless of span
          for (int p = 0; p < P; ++p)
            for (int c = 0; c < kVh; ++c) rng.normal();
        continue;
      }
      double sigma = 0.01 * l;
      for (int p = 0; p < P; ++p) {
        std::size_t src = std::size_t(t + l) * P + p;
        double* h = sim.hres.data() + ((std::size_t(t) * L + (l - 1)) * P + p) * kVh;
        h[0] = std::log1p(sim.precip[src]) + (opt.noisy_views ? sigma * rng.normal() : 0.0);
        h[1] = temperature[src] + (opt.noisy_views ? 3.0 * sigma * rng.normal() : 0.0);
        h[2] = std::max(0.0, 0.25 * temperature[src]) * (1.0 + (opt.noisy_views ? sigma * rng.normal() : 0.0));
      }
    }
  return sim;
}

// ---------------------------------------------------------------------------
// Forecast samples. For issuance day t (data shifted to mimic an operational
// 00 UTC run):
//   era5/glofas inputs cover days t-T-1 .. t-2
//   cpc covers days t-T-2 .. t-3
//   the forecast forcing covers leads t+1 .. t+L (issued at t)
//   target is discharge at t+1 .. t+L, x_prev is discharge at t-1
// ---------------------------------------------------------------------------
struct ForecastSample {
  int t = 0;
  Date issuance;
  int T = 0, L = 0, P = 0;
  std::vector<double> era5;    // [T][P][Ve]
  std::vector<double> glofas;  // [T][P][Vg]
  std::vector<double> cpc;     // [T][P][1]
  std::vector<double> hres;    // [L][P][Vh]
  std::vector<double> target;  // [L][P]
  std::vector<double> x_prev;  // [P]
};

inline int first_valid_issuance(int T) { return T + 2; }
inline int last_valid_issuance(int days, int L) { return days - L - 1; }

inline ForecastSample assemble_sample(const Simulation& sim, int t, int T) {
  int L = sim.leads;
  int P = sim.n_points;
  require(t >= first_valid_issuance(T) && t <= last_valid_issuance(sim.days, L),
          "assemble_sample: issuance day " + std::to_string(t) + " out of range");
  ForecastSample s;
  s.t = t;
  s.issuance = civil_from_days(days_from_civil(sim.start) + t);
  s.T = T;
  s.L = L;
  s.P = P;
  s.era5.resize(std::size_t(T) * P * kVe);
  s.glofas.resize(std::size_t(T) * P * kVg);
  s.cpc.resize(std::size_t(T) * P * kVc);
  s.hres.resize(std::size_t(L) * P * kVh);
  s.target.resize(std::size_t(L) * P);
  s.x_prev.resize(std::size_t(P));
  for (int step = 0; step < T; ++step) {
    int d_eg = t - T - 1 + step;  // shifted one day into the past
    int d_c = t - T - 2 + step;   // shifted two days
    std::copy(sim.era5.begin() + std::ptrdiff_t(std::size_t(d_eg) * P * kVe),
              sim.era5.begin() + std::ptrdiff_t(std::size_t(d_eg + 1) * P * kVe),
              s.era5.begin() + std::ptrdiff_t(std::size_t(step) * P * kVe));
    std::copy(sim.glofas.begin() + std::ptrdiff_t(std::size_t(d_eg) * P * kVg),
              sim.glofas.begin() + std::ptrdiff_t(std::size_t(d_eg + 1) * P * kVg),
              s.glofas.begin() + std::ptrdiff_t(std::size_t(step) * P * kVg));
    std::copy(sim.cpc.begin() + std::ptrdiff_t(std::size_t(d_c) * P * kVc),
              sim.cpc.begin() + std::ptrdiff_t(std::size_t(d_c + 1) * P * kVc),
              s.cpc.begin() + std::ptrdiff_t(std::size_t(step) * P * kVc));
  }
  std::copy(sim.hres.begin() + std::ptrdiff_t(std::size_t(t) * sim.leads * P * kVh),
            sim.hres.begin() + std::ptrdiff_t(std::size_t(t + 1) * sim.leads * P * kVh), s.hres.begin());
  for (int l = 1; l <= L; ++l)
    for (int p = 0; p < P; ++p) s.target[std::size_t(l - 1) * P + p] = sim.discharge_at(t + l, p);
  for (int p = 0; p < P; ++p) s.x_prev[std::size_t(p)] = sim.discharge_at(t - 1, p);
  return s;
}

inline std::vector<ForecastSample> assemble_samples(const Simulation& sim, int T) {
  std::vector<ForecastSample> out;
  for (int t = first_valid_issuance(T); t <= last_valid_issuance(sim.days, sim.leads); ++t)
    out.push_back(assemble_sample(sim, t, T));
  return out;
}

// ---------------------------------------------------------------------------
// Sample access shared by training and evaluation: in-memory datasets and
// lazily assembled simulations look the same.
// ---------------------------------------------------------------------------
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual int size() const = 0;
  virtual int issuance_day(int i) const = 0;
  virtual ForecastSample sample(int i) const = 0;
  virtual const PointSet& points() const = 0;
  virtual Date start_date() const = 0;
};

struct Dataset {
  PointSet points;
  Date start{2000, 1, 1};
  int T = 4;
  std::vector<ForecastSample> samples;
};

class DatasetSource final : public SampleSource {
 public:
  explicit DatasetSource(const Dataset& ds) : ds_(ds) {}
  int size() const override { return int(ds_.samples.size()); }
  int issuance_day(int i) const override { return ds_.samples[std::size_t(i)].t; }
  ForecastSample sample(int i) const override { return ds_.samples[std::size_t(i)]; }
  const PointSet& points() const override { return ds_.points; }
  Date start_date() const override { return ds_.start; }

 private:
  const Dataset& ds_;
};

class SimulationSource final : public SampleSource {
 public:
  SimulationSource(const Simulation& sim, const PointSet& points, int T) : sim_(sim), points_(points), t_(T) {
    for (int t = first_valid_issuance(T); t <= last_valid_issuance(sim.days, sim.leads); ++t) issuances_.push_back(t);
  }
  int size() const override { return int(issuances_.size()); }
  int issuance_day(int i) const override { return issuances_[std::size_t(i)]; }
  ForecastSample sample(int i) const override { return assemble_sample(sim_, issuances_[std::size_t(i)], t_); }
  const PointSet& points() const override { return points_; }
  Date start_date() const override { return sim_.start; }

 private:
  const Simulation& sim_;
  const PointSet& points_;
  int t_;
  std::vector<int> issuances_;
};

// ---------------------------------------------------------------------------
// Dataset container: magic "RSDS", version, the point set as a CSV blob,
// then per-sample tensors in the shared tensor record codec.
// ---------------------------------------------------------------------------
inline void save_dataset(const Dataset& ds, const std::string& path) {
  BinFile f(path, "wb");
  f.write("RSDS", 4);
  f.put<std::uint32_t>(1);
  f.put<std::uint32_t>(std::uint32_t(ds.points.grid_width()));
  f.put<std::uint32_t>(std::uint32_t(ds.points.grid_height()));
  f.put<std::int32_t>(ds.start.year);
  f.put<std::int32_t>(ds.start.month);
  f.put<std::int32_t>(ds.start.day);
  f.put<std::uint32_t>(std::uint32_t(ds.T));
  std::ostringstream csv;
  save_pointset_csv(ds.points, csv);
  f.put_bytes(csv.str());
  f.put<std::uint64_t>(ds.samples.size());
  for (const ForecastSample& s : ds.samples) {
    f.put<std::uint32_t>(std::uint32_t(s.t));
    f.put_tensor("era5", {s.T, s.P, kVe}, s.era5.data());
    f.put_tensor("glofas", {s.T, s.P, kVg}, s.glofas.data());
    f.put_tensor("cpc", {s.T, s.P, kVc}, s.cpc.data());
    f.put_tensor("hres", {s.L, s.P, kVh}, s.hres.data());
    f.put_tensor("target", {s.L, s.P}, s.target.data());
    f.put_tensor("x_prev", {s.P}, s.x_prev.data());
  }
}

inline Dataset load_dataset(const std::string& path) {
  BinFile f(path, "rb");
  char magic[4];
  f.read(magic, 4);
  require(std::memcmp(magic, "RSDS", 4) == 0, "bad magic in dataset file: " + path);
  std::uint32_t version = f.get<std::uint32_t>();
  require(version == 1, "unsupported dataset version " + std::to_string(version));
  Dataset ds;
  int gw = int(f.get<std::uint32_t>());
  int gh = int(f.get<std::uint32_t>());
  ds.start.year = f.get<std::int32_t>();
  ds.start.month = f.get<std::int32_t>();
  ds.start.day = f.get<std::int32_t>();
  ds.T = int(f.get<std::uint32_t>());
  std::istringstream csv(f.get_bytes());
  ds.points = load_pointset_csv(csv, gw, gh);
  std::uint64_t n = f.get<std::uint64_t>();
  std::int64_t day0 = days_from_civil(ds.start);
  for (std::uint64_t i = 0; i < n; ++i) {
    ForecastSample s;
    s.t = int(f.get<std::uint32_t>());
    s.issuance = civil_from_days(day0 + s.t);
    auto expect = [&](const char* want) {
      auto [name, t] = f.get_tensor();
      require(name == want, "dataset record out of order: got " + name);
      return t;
    };
    Tensor era5 = expect("era5");
    Tensor glofas = expect("glofas");
    Tensor cpc = expect("cpc");
    Tensor hres = expect("hres");
    Tensor target = expect("target");
    Tensor x_prev = expect("x_prev");
    s.T = era5.dim(0);
    s.P = era5.dim(1);
    s.L = hres.dim(0);
    s.era5.assign(era5.data(), era5.data() + era5.numel());
    s.glofas.assign(glofas.data(), glofas.data() + glofas.numel());
    s.cpc.assign(cpc.data(), cpc.data() + cpc.numel());
    s.hres.assign(hres.data(), hres.data() + hres.numel());
    s.target.assign(target.data(), target.data() + target.numel());
    s.x_prev.assign(x_prev.data(), x_prev.data() + x_prev.numel());
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

inline Dataset dataset_from_simulation(const Simulation& sim, const SyntheticNetwork& net, int T) {
  Dataset ds;
  ds.points = net.points;
  ds.start = sim.start;
  ds.T = T;
  ds.samples = assemble_samples(sim, T);
  return ds;
}

}  // namespace rivercast
