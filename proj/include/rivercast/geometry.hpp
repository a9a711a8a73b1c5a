#pragma once

#include <array>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "rivercast/common.hpp"

namespace rivercast {

// WGS-84 semi-axes in kilometers
constexpr double kWgs84A = 6378.137;
constexpr double kWgs84B = 6356.752;

// Cartesian position on the WGS-84 ellipsoid. Latitude/longitude in degrees,
// elevation H in meters; result in kilometers.
inline std::array<double, 3> wgs84_cartesian(double lat_deg, double lon_deg, double elevation_m) {
  require(lat_deg >= -90.0 && lat_deg <= 90.0, "latitude out of range");
  const double deg = 3.141592653589793 / 180.0;
  double phi = lat_deg * deg;
  double lam = lon_deg * deg;
  double h = elevation_m / 1000.0;
  double e2 = (kWgs84A * kWgs84A - kWgs84B * kWgs84B) / (kWgs84A * kWgs84A);
  double sphi = std::sin(phi);
  double n = kWgs84A / std::sqrt(1.0 - e2 * sphi * sphi);
  return {(n + h) * std::cos(phi) * std::cos(lam), (n + h) * std::cos(phi) * std::sin(lam),
          ((1.0 - e2) * n + h) * sphi};
}

struct GeoPoint {
  std::int64_t id = 0;
  double lat = 0;   // degrees, [-90, 90]
  double lon = 0;   // degrees, [-180, 180)
  double elevation = 0;  // meters
  int gx = 0;       // grid cell column
  int gy = 0;       // grid cell row
  std::vector<double> static_attrs;
};

class PointSet {
 public:
  PointSet() = default;
  PointSet(int grid_width, int grid_height) : grid_width_(grid_width), grid_height_(grid_height) {}

  void add(GeoPoint p) {
    require(p.gx >= 0 && p.gx < grid_width_ && p.gy >= 0 && p.gy < grid_height_,
            "point " + std::to_string(p.id) + " lies outside the grid");
    std::int64_t cell = std::int64_t(p.gy) * grid_width_ + p.gx;
    require(cells_.emplace(cell, points_.size()).second,
            "duplicate grid cell (" + std::to_string(p.gx) + "," + std::to_string(p.gy) + ")");
    if (!points_.empty())
      require(p.static_attrs.size() == points_.front().static_attrs.size(),
              "static attribute width differs between points");
    require(id_to_index_.emplace(p.id, points_.size()).second, "duplicate point id " + std::to_string(p.id));
    points_.push_back(std::move(p));
  }

  int grid_width() const { return grid_width_; }
  int grid_height() const { return grid_height_; }
  int size() const { return int(points_.size()); }
  int static_width() const { return points_.empty() ? 0 : int(points_.front().static_attrs.size()); }

  const GeoPoint& operator[](int i) const { return points_[std::size_t(i)]; }
  const std::vector<GeoPoint>& points() const { return points_; }

  int index_of(std::int64_t id) const {
    auto it = id_to_index_.find(id);
    require(it != id_to_index_.end(), "unknown point id " + std::to_string(id));
    return int(it->second);
  }

  bool occupies(int gx, int gy) const {
    if (gx < 0 || gx >= grid_width_ || gy < 0 || gy >= grid_height_) return false;
    return cells_.count(std::int64_t(gy) * grid_width_ + gx) != 0;
  }

  int index_at(int gx, int gy) const {
    auto it = cells_.find(std::int64_t(gy) * grid_width_ + gx);
    return it == cells_.end() ? -1 : int(it->second);
  }

  // flattened static attributes, row per point
  std::vector<double> static_matrix() const {
    int vs = static_width();
    std::vector<double> out(points_.size() * std::size_t(vs));
    for (std::size_t p = 0; p < points_.size(); ++p)
      for (int k = 0; k < vs; ++k) out[p * vs + k] = points_[p].static_attrs[std::size_t(k)];
    return out;
  }

  PointSet subset(const std::vector<int>& indices) const {
    PointSet out(grid_width_, grid_height_);
    for (int i : indices) out.add(points_[std::size_t(i)]);
    return out;
  }

 private:
  int grid_width_ = 0;
  int grid_height_ = 0;
  std::vector<GeoPoint> points_;
  std::unordered_map<std::int64_t, std::size_t> cells_;
  std::unordered_map<std::int64_t, std::size_t> id_to_index_;
};

// ---------------------------------------------------------------------------
// Diagnostic point filtering. A land cell survives when its median discharge
// reaches 10 m^3/s, when an 8-neighbor land cell does, or when it is gauged.
// Out-of-bounds neighbors are treated as absent.
// ---------------------------------------------------------------------------
constexpr double kDiagnosticDischarge = 10.0;  // m^3/s

inline std::vector<std::uint8_t> diagnostic_keep_mask(int width, int height, const std::vector<std::uint8_t>& land,
                                                      const std::vector<double>& median_discharge,
                                                      const std::vector<std::uint8_t>& gauged) {
  std::size_t n = std::size_t(width) * std::size_t(height);
  require(land.size() == n && median_discharge.size() == n && gauged.size() == n,
          "diagnostic filter: grid arrays must share dimensions");
  auto has_flow = [&](int x, int y) {
    if (x < 0 || x >= width || y < 0 || y >= height) return false;
    std::size_t i = std::size_t(y) * width + x;
    return land[i] != 0 && median_discharge[i] >= kDiagnosticDischarge;
  };
  std::vector<std::uint8_t> keep(n, 0);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      std::size_t i = std::size_t(y) * width + x;
      if (gauged[i]) {
        keep[i] = 1;
        continue;
      }
      if (!land[i]) continue;
      bool ok = has_flow(x, y);
      for (int dy = -1; dy <= 1 && !ok; ++dy)
        for (int dx = -1; dx <= 1 && !ok; ++dx)
          if (dx || dy) ok = has_flow(x + dx, y + dy);
      if (ok) keep[i] = 1;
    }
  return keep;
}

// Subset form: candidate points define the land cells of their grid.
inline PointSet filter_diagnostic_points(const PointSet& candidates, const std::vector<double>& median_discharge,
                                         const std::vector<std::uint8_t>& gauged) {
  require(int(median_discharge.size()) == candidates.size() && int(gauged.size()) == candidates.size(),
          "diagnostic filter: per-point arrays must match the point count");
  int w = candidates.grid_width(), h = candidates.grid_height();
  std::size_t n = std::size_t(w) * std::size_t(h);
  std::vector<std::uint8_t> land(n, 0), gauged_grid(n, 0);
  std::vector<double> med(n, 0.0);
  for (int p = 0; p < candidates.size(); ++p) {
    const GeoPoint& gp = candidates[p];
    std::size_t i = std::size_t(gp.gy) * w + gp.gx;
    land[i] = 1;
    med[i] = median_discharge[std::size_t(p)];
    gauged_grid[i] = gauged[std::size_t(p)];
  }
  std::vector<std::uint8_t> keep = diagnostic_keep_mask(w, h, land, med, gauged_grid);
  std::vector<int> kept;
  for (int p = 0; p < candidates.size(); ++p) {
    const GeoPoint& gp = candidates[p];
    if (keep[std::size_t(gp.gy) * w + gp.gx]) kept.push_back(p);
  }
  require(!kept.empty(), "no diagnostic points");
  return candidates.subset(kept);
}

// ---------------------------------------------------------------------------
// CSV round trip: header `id,lat,lon,elev,gx,gy,s0..s{Vs-1}`
// ---------------------------------------------------------------------------
inline void save_pointset_csv(const PointSet& ps, std::ostream& os) {
  os << "id,lat,lon,elev,gx,gy";
  for (int k = 0; k < ps.static_width(); ++k) os << ",s" << k;
  os << "\n";
  os.precision(17);
  for (int p = 0; p < ps.size(); ++p) {
    const GeoPoint& gp = ps[p];
    os << gp.id << ',' << gp.lat << ',' << gp.lon << ',' << gp.elevation << ',' << gp.gx << ',' << gp.gy;
    for (double v : gp.static_attrs) os << ',' << v;
    os << "\n";
  }
}

inline void save_pointset_csv(const PointSet& ps, const std::string& path) {
  std::ofstream f(path);
  require(f.good(), "cannot open for writing: " + path);
  save_pointset_csv(ps, f);
}

inline PointSet load_pointset_csv(std::istream& is, int grid_width, int grid_height) {
  std::string line;
  require(bool(std::getline(is, line)), "point set CSV is empty");
  require(line.rfind("id,lat,lon,elev,gx,gy", 0) == 0, "unexpected point set CSV header: " + line);
  PointSet ps(grid_width, grid_height);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<std::string> cols;
    while (std::getline(ss, tok, ',')) cols.push_back(tok);
    require(cols.size() >= 6, "malformed point set CSV row: " + line);
    GeoPoint gp;
    gp.id = std::stoll(cols[0]);
    gp.lat = std::stod(cols[1]);
    gp.lon = std::stod(cols[2]);
    gp.elevation = std::stod(cols[3]);
    gp.gx = std::stoi(cols[4]);
    gp.gy = std::stoi(cols[5]);
    for (std::size_t i = 6; i < cols.size(); ++i) gp.static_attrs.push_back(std::stod(cols[i]));
    ps.add(std::move(gp));
  }
  return ps;
}

inline PointSet load_pointset_csv(const std::string& path, int grid_width, int grid_height) {
  std::ifstream f(path);
  require(f.good(), "cannot open for reading: " + path);
  return load_pointset_csv(f, grid_width, grid_height);
}

}  // namespace rivercast
