#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "rivercast/hydrology.hpp"

using namespace rivercast;

namespace {

double gumbel_draw(Rng& rng, double mu, double beta) {
  double u = rng.uniform();
  if (u <= 0) u = 1e-16;
  return mu - beta * std::log(-std::log(u));
}

// U-statistic identity: lambda2 = mean |Xi - Xj| / 2 over distinct pairs
double gini_half(const std::vector<double>& xs) {
  double acc = 0;
  std::size_t n = xs.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) acc += std::abs(xs[i] - xs[j]);
  return acc / (double(n) * double(n - 1) / 2.0) / 2.0;
}

}  // namespace

TEST_CASE("annual maxima groups by calendar year") {
  // two plain years of constant 7
  std::vector<double> series(730, 7.0);
  auto maxima = annual_maxima(series, Date{2001, 1, 1});
  REQUIRE(maxima.size() == 2);
  CHECK(maxima[0] == 7.0);
  CHECK(maxima[1] == 7.0);

  // a single spike lands in the right year
  series[100] = 100.0;
  auto maxima2 = annual_maxima(series, Date{2001, 1, 1});
  CHECK(maxima2[0] == 100.0);
  CHECK(maxima2[1] == 7.0);
}

TEST_CASE("annual maxima matches a per-year loop oracle on a 40-year series") {
  Rng rng(41);
  Date start{1980, 1, 1};
  std::int64_t day0 = days_from_civil(start);
  int days = int(days_from_civil(2020, 1, 1) - day0);
  std::vector<double> series(std::size_t(days), 0.0);
  for (int d = 0; d < days; ++d) series[std::size_t(d)] = 10.0 + 5.0 * rng.normal();

  std::map<int, double> oracle;
  for (int d = 0; d < days; ++d) {
    int y = civil_from_days(day0 + d).year;
    auto it = oracle.find(y);
    if (it == oracle.end()) oracle[y] = series[std::size_t(d)];
    else it->second = std::max(it->second, series[std::size_t(d)]);
  }
  auto maxima = annual_maxima(series, start);
  REQUIRE(maxima.size() == oracle.size());
  std::size_t i = 0;
  for (auto& [y, m] : oracle) CHECK(maxima[i++] == m);
}

TEST_CASE("annual maxima drops years with too many missing days") {
  // year 1 complete, year 2 is 30% missing
  std::vector<double> series(730, 3.0);
  for (int d = 365; d < 365 + 110; ++d) series[std::size_t(d)] = kNaN;
  auto maxima = annual_maxima(series, Date{2001, 1, 1});
  CHECK(maxima.size() == 1);
}

TEST_CASE("insufficient record raises") {
  std::vector<double> series(730, 7.0);
  CHECK_THROWS_WITH(annual_maxima(series, Date{2001, 1, 1}, 5), doctest::Contains("insufficient record"));
}

TEST_CASE("lmoments hand values and pairwise-difference identity") {
  auto [l1c, l2c] = lmoments({4.0, 4.0, 4.0});
  CHECK(l1c == doctest::Approx(4.0));
  CHECK(l2c == doctest::Approx(0.0));

  // sample (0, 1): b0 = 1/2, b1 = 1/2, lambda2 = 2 b1 - b0 = 1/2, matching
  // the distinct-pair identity E|X1-X2|/2
  auto [l1, l2] = lmoments({0.0, 1.0});
  CHECK(l1 == doctest::Approx(0.5));
  CHECK(l2 == doctest::Approx(gini_half({0.0, 1.0})));
  CHECK(l2 == doctest::Approx(0.5));

  Rng rng(42);
  std::vector<double> xs;
  for (int i = 0; i < 200; ++i) xs.push_back(rng.normal() * 3.0 + 1.0);
  auto [m1, m2] = lmoments(xs);
  double mean = 0;
  for (double v : xs) mean += v;
  CHECK(m1 == doctest::Approx(mean / xs.size()).epsilon(1e-12));
  CHECK(m2 == doctest::Approx(gini_half(xs)).epsilon(1e-10));
  CHECK(m2 >= 0.0);

  CHECK_THROWS(lmoments({1.0}));
}

TEST_CASE("lmoments of a million uniform draws hit the analytic values") {
  // Uniform(0,1): lambda1 = 1/2, lambda2 = 1/6
  Rng rng(43);
  std::vector<double> xs(1000000);
  for (auto& v : xs) v = rng.uniform();
  auto [l1, l2] = lmoments(std::move(xs));
  CHECK(l1 == doctest::Approx(0.5).epsilon(0.01));
  CHECK(l2 == doctest::Approx(1.0 / 6.0).epsilon(0.01));
}

TEST_CASE("gumbel fit closed forms and degeneracy") {
  GumbelFit c = gumbel_fit({5.0, 5.0, 5.0});
  CHECK(c.mu == doctest::Approx(5.0));
  CHECK(c.beta == 0.0);

  // lambda1 = gamma, lambda2 = ln 2 inverts to (mu, beta) = (0, 1); build a
  // two-point sample with those L-moments: lambda2 = (x2-x1)/2, lambda1 = mean
  double l2 = std::log(2.0);
  double x1 = kEulerMascheroni - l2, x2 = kEulerMascheroni + l2;
  GumbelFit f = gumbel_fit({x1, x2});
  CHECK(f.beta == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(f.mu == doctest::Approx(0.0).scale(1).epsilon(1e-12));
}

TEST_CASE("gumbel fit recovers parameters from large samples") {
  Rng rng(44);
  std::vector<double> xs(100000);
  for (auto& v : xs) v = gumbel_draw(rng, 10.0, 2.0);
  GumbelFit f = gumbel_fit(xs);
  CHECK(f.mu == doctest::Approx(10.0).epsilon(0.02));
  CHECK(f.beta == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("gumbel fit error shrinks as the sample grows") {
  double errs[3];
  int sizes[3] = {100, 10000, 1000000};
  for (int k = 0; k < 3; ++k) {
    Rng rng(45);  // same stream, nested samples
    std::vector<double> xs(std::size_t(sizes[k]));
    for (auto& v : xs) v = gumbel_draw(rng, 3.0, 1.5);
    GumbelFit f = gumbel_fit(xs);
    errs[k] = std::abs(f.mu - 3.0) + std::abs(f.beta - 1.5);
  }
  CHECK(errs[2] < errs[0]);
  CHECK(errs[2] < 0.01);
}

TEST_CASE("return levels") {
  CHECK(return_level(2.0, 0.0, 1.0) == doctest::Approx(-std::log(std::log(2.0))).epsilon(1e-14));
  CHECK(return_level(2.0, 4.0, 3.0) == doctest::Approx(4.0 + 0.3665 * 3.0).epsilon(1e-3));
  CHECK(return_level(100.0, 0.0, 0.0) == doctest::Approx(0.0).scale(1));
  CHECK_THROWS(return_level(1.0, 0.0, 1.0));
  CHECK_THROWS(return_level(0.5, 0.0, 1.0));

  // strictly increasing in RP when beta > 0
  double prev = -1e300;
  for (double rp : default_return_periods()) {
    double th = return_level(rp, 2.0, 0.7);
    CHECK(th > prev);
    prev = th;
  }
}

TEST_CASE("return_level(2) matches the empirical median of annual maxima") {
  Rng rng(46);
  std::vector<double> xs(100000);
  for (auto& v : xs) v = gumbel_draw(rng, 10.0, 2.0);
  GumbelFit f = gumbel_fit(xs);
  std::sort(xs.begin(), xs.end());
  double median = 0.5 * (xs[49999] + xs[50000]);
  CHECK(return_level(2.0, f.mu, f.beta) == doctest::Approx(median).epsilon(0.02));
}

TEST_CASE("threshold fitting, severity ranks, and event classification") {
  Rng rng(47);
  Date start{2000, 1, 1};
  int days = 365 * 7 + 2;
  std::vector<std::vector<double>> series(2);
  for (int p = 0; p < 2; ++p) {
    series[std::size_t(p)].resize(std::size_t(days));
    for (int d = 0; d < days; ++d)
      series[std::size_t(p)][std::size_t(d)] = 20.0 * (p + 1) + 6.0 * rng.normal() + (rng.uniform() < 0.01 ? 60 : 0);
  }
  FloodThresholds th = fit_flood_thresholds({100, 200}, series, start);
  REQUIRE(th.points() == 2);
  REQUIRE(th.rps() == 9);
  for (int p = 0; p < 2; ++p)
    for (int r = 1; r < th.rps(); ++r) CHECK(th.theta(p, r) >= th.theta(p, r - 1));

  // severity: below all -> 0; boundary is inclusive
  CHECK(severity_rank(0.0, th, 0) == 0.0);
  CHECK(severity_rank(th.theta(0, 2), th, 0) == doctest::Approx(5.0));  // exactly theta_5 -> 5
  double x20 = 0.5 * (th.theta(0, 4) + th.theta(0, 5));                 // between theta_20 and theta_50
  CHECK(severity_rank(x20, th, 0) == doctest::Approx(20.0));
  CHECK(severity_rank(1e12, th, 0) == doctest::Approx(500.0));

  // classification matches the elementwise comparison oracle
  std::vector<double> probe(200);
  for (auto& v : probe) v = 20.0 + 30.0 * rng.normal();
  auto events = classify_events(probe, th, 0, 2.0);
  for (std::size_t i = 0; i < probe.size(); ++i)
    CHECK(events[i] == (probe[i] >= th.theta(0, 1) ? 1 : 0));
  CHECK_THROWS(classify_events(probe, th, 0, 3.14));

  // CSV round trip
  save_thresholds_csv(th, "thresholds_test.csv");
  FloodThresholds back = load_thresholds_csv("thresholds_test.csv");
  REQUIRE(back.points() == th.points());
  REQUIRE(back.return_periods == th.return_periods);
  for (int p = 0; p < th.points(); ++p) {
    CHECK(back.point_ids[std::size_t(p)] == th.point_ids[std::size_t(p)]);
    CHECK(back.n_years[std::size_t(p)] == th.n_years[std::size_t(p)]);
    for (int r = 0; r < th.rps(); ++r) CHECK(back.theta(p, r) == doctest::Approx(th.theta(p, r)).epsilon(1e-14));
  }
  std::remove("thresholds_test.csv");

  // fewer than five usable years refuses to fit
  std::vector<std::vector<double>> short_series = {std::vector<double>(720, 5.0)};
  CHECK_THROWS_WITH(fit_flood_thresholds({1}, short_series, start), doctest::Contains("insufficient record"));
}
