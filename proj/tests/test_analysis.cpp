#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "deepangle/analysis.hpp"
#include "deepangle/direct.hpp"
#include "test_util.hpp"

using namespace deepangle;
using testutil::error_kind_of;

namespace {

/// Angles on a plane of side n: white noise smoothed with a Gaussian of std w, rescaled to mean/std.
std::vector<PredictionPoint> smooth_field(int n, double w, std::uint64_t seed, double mean = 90, double sd = 15) {
  Dims d{n, n, 1};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<double> f(d.size());
  for (auto& v : f) v = g(rng);
  f = gaussian_smooth(f, d, w, 4);
  auto st = angle_stats(f);
  std::vector<PredictionPoint> pts;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) pts.push_back({{x, y, 0}, mean + sd * (f[d.linear(x, y, 0)] - st.mean) / st.std});
  return pts;
}

LagCurve curve_from(const std::vector<double>& lags, const std::vector<double>& s) {
  LagCurve c;
  c.lag = lags;
  c.s = s;
  c.pairs.assign(s.size(), 0);
  for (std::size_t k = 0; k < s.size(); ++k)
    if (!std::isnan(s[k])) c.pairs[k] = 10;
  return c;
}

AngleField field_of(std::vector<PredictionPoint> pts) {
  AngleField f;
  f.points = std::move(pts);
  f.summary = summarize(f.points);
  return f;
}

}  // namespace

TEST(Stats, Examples) {
  auto a = angle_stats(std::vector<double>{90, 90, 90});
  EXPECT_EQ(a.mean, 90);
  EXPECT_EQ(a.std, 0);
  EXPECT_EQ(a.cv, 0);
  auto b = angle_stats(std::vector<double>{60, 120});
  EXPECT_EQ(b.mean, 90);
  EXPECT_EQ(b.std, 30);
  EXPECT_NEAR(b.cv, 1.0 / 3, 1e-15);
}

TEST(Stats, NormalSample) {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> g(77, 21);
  std::vector<double> v(100000);
  for (auto& x : v) x = g(rng);
  auto s = angle_stats(v);
  EXPECT_NEAR(s.mean, 77, 0.5);
  EXPECT_NEAR(s.std, 21, 0.5);
}

TEST(Stats, EmptyIsDataError) {
  EXPECT_EQ(error_kind_of([] { angle_stats(std::vector<double>{}); }), ErrorKind::data);
}

TEST(RSquared, Examples) {
  std::vector<double> t{0, 1, 2};
  EXPECT_EQ(r_squared(t, t), 1.0);
  EXPECT_EQ(r_squared(std::vector<double>{1, 1, 1}, t), 0.0);
  EXPECT_NEAR(r_squared(std::vector<double>{0, 1, 3}, t), 0.5, 1e-15);
}

TEST(RSquared, Errors) {
  EXPECT_EQ(error_kind_of([] { r_squared(std::vector<double>{1, 2}, std::vector<double>{3, 3}); }), ErrorKind::data);
  EXPECT_EQ(error_kind_of([] { r_squared(std::vector<double>{1}, std::vector<double>{3}); }),
            ErrorKind::precondition);
  EXPECT_EQ(error_kind_of([] { r_squared(std::vector<double>{1, 2}, std::vector<double>{3, 4, 5}); }),
            ErrorKind::precondition);
}

TEST(RSquared, AffineInvariant) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 180);
  std::vector<double> p(50), t(50);
  for (std::size_t i = 0; i < 50; ++i) t[i] = u(rng), p[i] = t[i] + u(rng) / 6 - 15;
  double base = r_squared(p, t);
  for (auto [a, b] : {std::pair{2.0, 5.0}, {-0.5, 100.0}, {1e3, -7.0}}) {
    std::vector<double> p2(p), t2(t);
    for (auto& x : p2) x = a * x + b;
    for (auto& x : t2) x = a * x + b;
    EXPECT_NEAR(r_squared(p2, t2), base, 1e-12);
  }
}

TEST(Lag, UncorrelatedFieldMatchesStd) {
  std::mt19937_64 rng(5);
  std::vector<Index3> cells;
  for (int z = 0; z < 40; ++z)
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 40; ++x) cells.push_back({x, y, z});
  std::shuffle(cells.begin(), cells.end(), rng);
  std::normal_distribution<double> g(90, 15);
  std::vector<PredictionPoint> pts;
  for (int i = 0; i < 10000; ++i) pts.push_back({cells[std::size_t(i)], g(rng)});
  const double sd = angle_stats(std::vector<double>([&] {
                      std::vector<double> a;
                      for (auto& p : pts) a.push_back(p.angle_deg);
                      return a;
                    }())).std;
  auto c = lag_std_curve(pts, 1, 20);
  EXPECT_GT(c.populated_count(), 15u);
  for (std::size_t k = 0; k < c.s.size(); ++k)
    if (c.populated(k)) {
      EXPECT_NEAR(c.s[k], sd, 0.05 * sd) << "lag " << c.lag[k];
    }
}

TEST(Lag, EqualAnglesGiveZero) {
  std::vector<PredictionPoint> pts;
  for (int i = 0; i < 30; ++i) pts.push_back({{i, i % 4, 0}, 42});
  auto c = lag_std_curve(pts, 1, 10);
  for (std::size_t k = 0; k < c.s.size(); ++k)
    if (c.populated(k)) {
      EXPECT_EQ(c.s[k], 0);
    }
}

TEST(Lag, TwoPoints) {
  std::vector<PredictionPoint> pts{{{0, 0, 0}, 40}, {{6, 8, 0}, 60}};
  auto c = lag_std_curve(pts, 1, 12);
  ASSERT_EQ(c.s.size(), 13u);
  EXPECT_EQ(c.populated_count(), 1u);
  EXPECT_EQ(c.pairs[10], 1u);
  EXPECT_NEAR(c.s[10], std::sqrt(200.0), 1e-12);
  EXPECT_TRUE(std::isnan(c.s[3]));
  EXPECT_EQ(c.lag[10], 10);
}

TEST(Lag, SymmetricTranslationInvariantAndWorkerFree) {
  auto pts = smooth_field(30, 2, 9);
  auto a = lag_std_curve(pts, 1, 12);
  auto rev = pts;
  std::reverse(rev.begin(), rev.end());
  auto b = lag_std_curve(rev, 1, 12);
  auto moved = pts;
  for (auto& p : moved) p.position = {p.position.x + 1000, p.position.y - 77, p.position.z + 5};
  auto c = lag_std_curve(moved, 1, 12);
  auto d = lag_std_curve(pts, 1, 12, 4);
  auto shifted = pts;
  for (auto& p : shifted) p.angle_deg += 25;
  auto e = lag_std_curve(shifted, 1, 12);
  for (std::size_t k = 0; k < a.s.size(); ++k) {
    if (!a.populated(k)) continue;
    EXPECT_NEAR(b.s[k], a.s[k], 1e-12);
    EXPECT_NEAR(c.s[k], a.s[k], 1e-12);
    EXPECT_EQ(d.s[k], a.s[k]);
    EXPECT_NEAR(e.s[k], a.s[k], 1e-9);
    EXPECT_EQ(b.pairs[k], a.pairs[k]);
  }
}

TEST(Lag, Preconditions) {
  std::vector<PredictionPoint> one{{{0, 0, 0}, 40}}, two{{{0, 0, 0}, 40}, {{1, 0, 0}, 50}};
  EXPECT_EQ(error_kind_of([&] { lag_std_curve(one, 1, 10); }), ErrorKind::precondition);
  EXPECT_EQ(error_kind_of([&] { lag_std_curve(two, 0, 10); }), ErrorKind::precondition);
}

TEST(CorrLength, PiecewiseLinear) {
  std::vector<double> lag, s;
  lag.push_back(0);
  s.push_back(std::nan(""));
  for (int l = 1; l <= 30; ++l) lag.push_back(l), s.push_back(std::min(double(l), 10.0));
  auto c = correlation_length(curve_from(lag, s));
  ASSERT_TRUE(c.defined);
  EXPECT_NEAR(c.length, 10, 1);
  EXPECT_NEAR(c.sill, 10, 1e-12);
  EXPECT_NEAR(c.slope, 1, 1e-12);

  for (auto& v : s) v *= 2;
  auto c2 = correlation_length(curve_from(lag, s));
  ASSERT_TRUE(c2.defined);
  EXPECT_NEAR(c2.length, c.length, 1e-12);
}

TEST(CorrLength, FlatIsUndefined) {
  std::vector<double> lag, s;
  for (int l = 1; l <= 20; ++l) lag.push_back(l), s.push_back(7.5);
  auto c = correlation_length(curve_from(lag, s));
  EXPECT_FALSE(c.defined);
  EXPECT_TRUE(std::isnan(c.length));
  EXPECT_NEAR(c.slope, 0, 1e-12);
}

TEST(CorrLength, FallingIsUndefined) {
  std::vector<double> lag, s;
  for (int l = 1; l <= 20; ++l) lag.push_back(l), s.push_back(30.0 - l);
  EXPECT_FALSE(correlation_length(curve_from(lag, s)).defined);
}

TEST(CorrLength, NeedsFourBins) {
  auto c = curve_from({1, 2, 3, 4}, {1, 2, std::nan(""), 3});
  EXPECT_EQ(error_kind_of([&] { correlation_length(c); }), ErrorKind::data);
}

TEST(CorrLength, FieldShiftAndScale) {
  auto pts = smooth_field(60, 3, 4);
  auto base = correlation_length(lag_std_curve(pts, 1, 25));
  ASSERT_TRUE(base.defined);
  auto shifted = pts, scaled = pts;
  for (auto& p : shifted) p.angle_deg += 30;
  for (auto& p : scaled) p.angle_deg *= 2;
  EXPECT_NEAR(correlation_length(lag_std_curve(shifted, 1, 25)).length, base.length, 1e-9);
  EXPECT_NEAR(correlation_length(lag_std_curve(scaled, 1, 25)).length, base.length, 1e-9);
}

TEST(Interp, SingleSeedFillsComponent) {
  Mask m{{12, 5, 5}, std::vector<std::uint8_t>(300, 0)};
  for (int x = 0; x < 8; ++x) m.bits[m.dims.linear(x, 2, 2)] = 1;
  m.bits[m.dims.linear(11, 4, 4)] = 1;
  std::vector<PredictionPoint> seed{{{3, 2, 2}, 55.5}};
  auto f = interpolate_volumetric(seed, m);
  for (int x = 0; x < 8; ++x) EXPECT_EQ(f.values[m.dims.linear(x, 2, 2)], 55.5);
  EXPECT_TRUE(std::isnan(f.values[m.dims.linear(11, 4, 4)]));
  EXPECT_TRUE(std::isnan(f.values[m.dims.linear(0, 0, 0)]));
  EXPECT_EQ(f.assigned, 8u);
  EXPECT_EQ(f.unreachable, 1u);
  EXPECT_EQ(f.iterations, 4u);
}

TEST(Interp, BarMidpointBetweenSeeds) {
  Dims d{40, 3, 3};
  Mask m{d, std::vector<std::uint8_t>(d.size(), 1)};
  std::vector<PredictionPoint> seeds{{{10, 1, 1}, 40}, {{30, 1, 1}, 80}};
  auto f = interpolate_volumetric(seeds, m);
  EXPECT_EQ(f.values[d.linear(10, 1, 1)], 40);
  EXPECT_EQ(f.values[d.linear(30, 1, 1)], 80);
  double mid = f.values[d.linear(20, 1, 1)];
  EXPECT_GT(mid, 40);
  EXPECT_LT(mid, 80);
  EXPECT_EQ(f.unreachable, 0u);
}

TEST(Interp, SeedsKeptAndBounded) {
  Volume v = testutil::random_volume({24, 24, 24}, 12, {0, 0.3, 0.4, 0.3});
  Mask m = pore_mask(v);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(20, 160);
  std::vector<PredictionPoint> seeds;
  for (std::size_t i = 0; i < m.bits.size() && seeds.size() < 40; i += 211)
    if (m.bits[i]) seeds.push_back({m.dims.coord(i), u(rng)});
  auto f = interpolate_volumetric(seeds, m);
  double lo = 180, hi = 0;
  for (const auto& s : seeds) lo = std::min(lo, s.angle_deg), hi = std::max(hi, s.angle_deg);
  for (const auto& s : seeds) EXPECT_EQ(f.values[m.dims.linear(s.position)], s.angle_deg);
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    if (!m.bits[i]) {
      EXPECT_TRUE(std::isnan(f.values[i]));
      continue;
    }
    if (std::isnan(f.values[i])) continue;
    EXPECT_GE(f.values[i], lo);
    EXPECT_LE(f.values[i], hi);
  }
  EXPECT_EQ(f.assigned + f.unreachable, m.count());
}

TEST(Interp, SharedVoxelSeedsAveraged) {
  Dims d{5, 5, 5};
  Mask m{d, std::vector<std::uint8_t>(d.size(), 1)};
  std::vector<PredictionPoint> seeds{{{2, 2, 2}, 40}, {{2, 2, 2}, 60}};
  auto f = interpolate_volumetric(seeds, m);
  EXPECT_EQ(f.values[d.linear(2, 2, 2)], 50);
  EXPECT_EQ(f.values[d.linear(0, 0, 0)], 50);
}

TEST(Interp, Preconditions) {
  Dims d{5, 5, 5};
  Mask m{d, std::vector<std::uint8_t>(d.size(), 0)};
  m.bits[0] = 1;
  std::vector<PredictionPoint> outside{{{2, 2, 2}, 40}};
  EXPECT_EQ(error_kind_of([&] { interpolate_volumetric(outside, m); }), ErrorKind::precondition);
  EXPECT_EQ(error_kind_of([&] { interpolate_volumetric({}, m); }), ErrorKind::precondition);
}

TEST(Interp, SavedAsFixedPoint) {
  InterpolatedField f;
  f.dims = {3, 1, 1};
  f.values = {12.345, std::nan(""), 179.99};
  auto dir = testutil::scratch("interp_save");
  save_angle_volume(f, dir / "a.raw", dir / "a.json");
  std::ifstream in(dir / "a.raw", std::ios::binary);
  std::vector<unsigned char> b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ASSERT_EQ(b.size(), 6u);
  EXPECT_EQ(b[0] | (b[1] << 8), 1235);
  EXPECT_EQ(b[2] | (b[3] << 8), 0);
  EXPECT_EQ(b[4] | (b[5] << 8), 17999);
  auto meta = nlohmann::json::parse(read_text_file(dir / "a.json"));
  EXPECT_EQ(meta["dtype"], "uint16le");
  EXPECT_EQ(meta["scale_deg"], 0.01);
  EXPECT_EQ(meta["shape"], nlohmann::json({3, 1, 1}));
}

TEST(Hist, Bins) {
  auto h = histogram(std::vector<double>{0, 4.99, 5, 90, 180, -1, 181});
  ASSERT_EQ(h.counts.size(), 36u);
  EXPECT_EQ(h.counts[0], 2u);
  EXPECT_EQ(h.counts[1], 1u);
  EXPECT_EQ(h.counts[18], 1u);
  EXPECT_EQ(h.counts[35], 1u);
  EXPECT_EQ(std::accumulate(h.counts.begin(), h.counts.end(), std::size_t(0)), 5u);
}

TEST(Series, IdenticalStepsHaveZeroTrends) {
  auto f = field_of(smooth_field(24, 2, 1));
  std::vector<AngleField> steps(40, f);
  auto rep = timeseries_report(steps);
  ASSERT_EQ(rep.trends.size(), 40u);
  for (const auto& t : rep.trends) {
    EXPECT_EQ(t.d_mean, 0);
    EXPECT_EQ(t.d_std, 0);
    EXPECT_EQ(t.d_cv, 0);
    EXPECT_EQ(t.d_length, 0);
  }
}

TEST(Series, StdTrend) {
  std::vector<AngleField> steps{field_of({{{0, 0, 0}, 80}, {{5, 0, 0}, 100}}),
                                field_of({{{0, 0, 0}, 70}, {{5, 0, 0}, 110}})};
  auto rep = timeseries_report(steps);
  EXPECT_EQ(rep.steps[0].stats.std, 10);
  EXPECT_EQ(rep.trends[1].d_std, 10);
  EXPECT_EQ(rep.trends[1].d_mean, 0);
  EXPECT_NEAR(rep.trends[1].d_cv, 20.0 / 90 - 10.0 / 90, 1e-15);
  EXPECT_EQ(rep.trends[0].d_std, 0);
}

TEST(Series, IncreasingCorrelationScale) {
  std::vector<AngleField> steps;
  for (double w : {2.0, 4.0, 6.0}) steps.push_back(field_of(smooth_field(96, w, 31)));
  TimeseriesConfig cfg;
  cfg.max_lag = 30;
  auto rep = timeseries_report(steps, cfg);
  for (std::size_t t = 0; t < 3; ++t) ASSERT_TRUE(rep.steps[t].corr.defined) << t;
  EXPECT_GT(rep.trends[1].d_length, 0);
  EXPECT_GT(rep.trends[2].d_length, 0);
}

TEST(Series, EmptyStepAndEmptyList) {
  std::vector<AngleField> steps{field_of({}), field_of({{{0, 0, 0}, 80}})};
  auto rep = timeseries_report(steps);
  EXPECT_TRUE(rep.steps[0].empty);
  EXPECT_FALSE(rep.steps[1].empty);
  std::ostringstream os;
  write_timeseries_report(os, rep);
  EXPECT_NE(os.str().find("# trends"), std::string::npos);
  EXPECT_EQ(error_kind_of([] { timeseries_report(std::vector<AngleField>{}); }), ErrorKind::data);
}

TEST(Series, ReportSections) {
  std::vector<AngleField> steps{field_of(smooth_field(20, 2, 1)), field_of(smooth_field(20, 3, 2)),
                                field_of(smooth_field(20, 4, 3))};
  auto rep = timeseries_report(steps);
  std::ostringstream os;
  write_timeseries_report(os, rep);
  std::string s = os.str();
  for (const char* sec : {"# steps", "# trends", "# histogram step 0", "# lag curve step 2"})
    EXPECT_NE(s.find(sec), std::string::npos) << sec;
  std::istringstream in(s);
  std::string line;
  while (std::getline(in, line) && line != "# trends") {
  }
  std::getline(in, line);
  int rows = 0;
  while (std::getline(in, line) && !line.empty() && line[0] != '#') ++rows;
  EXPECT_EQ(rows, 3);
}
