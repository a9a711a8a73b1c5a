#pragma once

#include <map>
#include <mutex>

#include "rivercast/geometry.hpp"

namespace rivercast {

enum class CurveKind { SweepH, SweepV, ZigzagH, ZigzagV, Gilbert, GilbertTransposed };

inline const char* curve_name(CurveKind k) {
  switch (k) {
    case CurveKind::SweepH: return "sweep_h";
    case CurveKind::SweepV: return "sweep_v";
    case CurveKind::ZigzagH: return "zigzag_h";
    case CurveKind::ZigzagV: return "zigzag_v";
    case CurveKind::Gilbert: return "gilbert";
    case CurveKind::GilbertTransposed: return "gilbert_t";
  }
  return "?";
}

inline CurveKind curve_from_name(const std::string& s) {
  for (CurveKind k : {CurveKind::SweepH, CurveKind::SweepV, CurveKind::ZigzagH, CurveKind::ZigzagV,
                      CurveKind::Gilbert, CurveKind::GilbertTransposed})
    if (s == curve_name(k)) return k;
  fail("unknown curve kind: " + s);
}

// the serialization cycle used by hindcast and forecast layers
inline CurveKind curve_cycle(int block_index) {
  static const CurveKind cycle[4] = {CurveKind::SweepH, CurveKind::SweepV, CurveKind::Gilbert,
                                     CurveKind::GilbertTransposed};
  return cycle[block_index % 4];
}

struct Cell {
  int x = 0;
  int y = 0;
};

namespace detail {

inline int sgn(int v) { return (v > 0) - (v < 0); }

// Generalized Hilbert curve over an arbitrary w x h rectangle: consecutive
// cells are always 4-neighbors. Axis vectors (ax,ay) and (bx,by) span the
// rectangle being filled.
inline void gilbert_rec(int x, int y, int ax, int ay, int bx, int by, std::vector<Cell>& out) {
  int w = std::abs(ax + ay);
  int h = std::abs(bx + by);
  int dax = sgn(ax), day = sgn(ay);
  int dbx = sgn(bx), dby = sgn(by);

  if (h == 1) {
    for (int i = 0; i < w; ++i) {
      out.push_back({x, y});
      x += dax;
      y += day;
    }
    return;
  }
  if (w == 1) {
    for (int i = 0; i < h; ++i) {
      out.push_back({x, y});
      x += dbx;
      y += dby;
    }
    return;
  }

  int ax2 = ax / 2, ay2 = ay / 2;
  int bx2 = bx / 2, by2 = by / 2;
  int w2 = std::abs(ax2 + ay2);
  int h2 = std::abs(bx2 + by2);

  if (2 * w > 3 * h) {
    if ((w2 % 2) && (w > 2)) {
      ax2 += dax;
      ay2 += day;
    }
    gilbert_rec(x, y, ax2, ay2, bx, by, out);
    gilbert_rec(x + ax2, y + ay2, ax - ax2, ay - ay2, bx, by, out);
  } else {
    if ((h2 % 2) && (h > 2)) {
      bx2 += dbx;
      by2 += dby;
    }
    gilbert_rec(x, y, bx2, by2, ax2, ay2, out);
    gilbert_rec(x + bx2, y + by2, ax, ay, bx - bx2, by - by2, out);
    gilbert_rec(x + (ax - dax) + (bx2 - dbx), y + (ay - day) + (by2 - dby), -bx2, -by2, -(ax - ax2), -(ay - ay2),
                out);
  }
}

}  // namespace detail

// full tour of a width x height rectangle along the generalized Hilbert curve
inline std::vector<Cell> gilbert_order(int width, int height) {
  require(width >= 1 && height >= 1, "gilbert_order: grid must be at least 1x1");
  std::vector<Cell> out;
  out.reserve(std::size_t(width) * std::size_t(height));
  if (width >= height)
    detail::gilbert_rec(0, 0, width, 0, 0, height, out);
  else
    detail::gilbert_rec(0, 0, 0, height, width, 0, out);
  return out;
}

// reflects a tour vertically: y' = (H-1) - y with 0-based rows
inline std::vector<Cell> transpose_order(const std::vector<Cell>& order, int grid_height) {
  std::vector<Cell> out(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) out[i] = {order[i].x, grid_height - 1 - order[i].y};
  return out;
}

// position of every cell along the curve, indexed by row-major cell index
inline std::vector<std::uint64_t> curve_code_table(CurveKind kind, int width, int height) {
  std::size_t n = std::size_t(width) * std::size_t(height);
  std::vector<std::uint64_t> codes(n);
  auto at = [&](int x, int y) -> std::uint64_t& { return codes[std::size_t(y) * width + x]; };
  switch (kind) {
    case CurveKind::SweepH:
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) at(x, y) = std::uint64_t(y) * width + x;
      break;
    case CurveKind::SweepV:
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) at(x, y) = std::uint64_t(x) * height + y;
      break;
    case CurveKind::ZigzagH:
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) at(x, y) = std::uint64_t(y) * width + (y % 2 == 0 ? x : width - 1 - x);
      break;
    case CurveKind::ZigzagV:
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) at(x, y) = std::uint64_t(x) * height + (x % 2 == 0 ? y : height - 1 - y);
      break;
    case CurveKind::Gilbert:
    case CurveKind::GilbertTransposed: {
      std::vector<Cell> tour = gilbert_order(width, height);
      if (kind == CurveKind::GilbertTransposed) tour = transpose_order(tour, height);
      for (std::size_t i = 0; i < tour.size(); ++i) at(tour[i].x, tour[i].y) = std::uint64_t(i);
      break;
    }
  }
  return codes;
}

// tours in step order, mostly for the curve debug command
inline std::vector<Cell> curve_tour(CurveKind kind, int width, int height) {
  std::vector<std::uint64_t> codes = curve_code_table(kind, width, height);
  std::vector<Cell> tour(codes.size());
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) tour[std::size_t(codes[std::size_t(y) * width + x])] = {x, y};
  return tour;
}

// Gilbert code tables are comparatively expensive; cache them per grid.
inline const std::vector<std::uint64_t>& cached_code_table(CurveKind kind, int width, int height) {
  static std::map<std::tuple<int, int, int>, std::vector<std::uint64_t>> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_tuple(int(kind), width, height);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, curve_code_table(kind, width, height)).first;
  return it->second;
}

// ---------------------------------------------------------------------------
// Serialization order for a sparse point set: every point gets the 64-bit
// code of its cell along the curve, perm sorts points by code ascending and
// inv undoes it.
// ---------------------------------------------------------------------------
struct SerializationOrder {
  CurveKind kind = CurveKind::SweepH;
  std::vector<int> perm;             // point index at each curve position
  std::vector<int> inv;              // curve position of each point
  std::vector<std::uint64_t> codes;  // per point, in original point order
};

inline SerializationOrder serialize(const PointSet& points, CurveKind kind) {
  const std::vector<std::uint64_t>& table = cached_code_table(kind, points.grid_width(), points.grid_height());
  int p_count = points.size();
  SerializationOrder order;
  order.kind = kind;
  order.codes.resize(std::size_t(p_count));
  for (int p = 0; p < p_count; ++p) {
    const GeoPoint& gp = points[p];
    order.codes[std::size_t(p)] = table[std::size_t(gp.gy) * points.grid_width() + gp.gx];
  }
  order.perm.resize(std::size_t(p_count));
  for (int i = 0; i < p_count; ++i) order.perm[std::size_t(i)] = i;
  std::stable_sort(order.perm.begin(), order.perm.end(),
                   [&](int a, int b) { return order.codes[std::size_t(a)] < order.codes[std::size_t(b)]; });
  for (std::size_t i = 1; i < order.perm.size(); ++i)
    require(order.codes[std::size_t(order.perm[i])] != order.codes[std::size_t(order.perm[i - 1])],
            "serialize: duplicate curve codes (duplicate grid cells?)");
  order.inv.resize(std::size_t(p_count));
  for (int i = 0; i < p_count; ++i) order.inv[std::size_t(order.perm[std::size_t(i)])] = i;
  return order;
}

// value-level permutation helpers for [P] / [.., P, K]-shaped flat arrays;
// the differentiable path uses permute_points from ops.hpp
inline std::vector<double> apply_order_values(const std::vector<double>& x, const std::vector<int>& perm,
                                              std::size_t row_width) {
  std::size_t p_count = perm.size();
  require(row_width > 0 && x.size() % (p_count * row_width) == 0, "apply_order: length mismatch");
  std::size_t blocks = x.size() / (p_count * row_width);
  std::vector<double> out(x.size());
  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t i = 0; i < p_count; ++i)
      std::copy(x.begin() + std::ptrdiff_t((b * p_count + std::size_t(perm[i])) * row_width),
                x.begin() + std::ptrdiff_t((b * p_count + std::size_t(perm[i]) + 1) * row_width),
                out.begin() + std::ptrdiff_t((b * p_count + i) * row_width));
  return out;
}

// contiguous curve segments of at most max_len points, in curve order
struct CurveSegment {
  int offset = 0;
  int length = 0;
};

inline std::vector<CurveSegment> split_curve(const SerializationOrder& order, int max_len) {
  require(max_len >= 1, "split_curve: max_len must be >= 1");
  std::vector<CurveSegment> segs;
  int p_count = int(order.perm.size());
  for (int off = 0; off < p_count; off += max_len) segs.push_back({off, std::min(max_len, p_count - off)});
  return segs;
}

}  // namespace rivercast
