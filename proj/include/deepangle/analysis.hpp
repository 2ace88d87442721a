/// @file analysis.hpp
/// @brief Distributions, lag-distance variability, correlation length,
///        volumetric interpolation and time-series reports over AngleFields.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "deepangle/common.hpp"
#include "deepangle/pipeline.hpp"
#include "deepangle/stats.hpp"
#include "deepangle/volume.hpp"

namespace deepangle {

// ---------------------------------------------------------------------------
// Lag curve

struct LagCurve {
  double bin_width = 1;
  std::vector<double> lag;          ///< bin centers k * bin_width
  std::vector<double> s;            ///< NaN where the bin is empty
  std::vector<std::size_t> pairs;

  bool populated(std::size_t k) const { return pairs[k] > 0; }
  std::size_t populated_count() const {
    return std::size_t(std::count_if(pairs.begin(), pairs.end(), [](std::size_t n) { return n > 0; }));
  }
};

/// s(l) = sqrt(mean over pairs in bin of (ai - aj)^2 / 2). A pair at
/// distance d falls in bin round(d / bin_width); pairs beyond max_lag are
/// ignored.
inline LagCurve lag_std_curve(std::span<const PredictionPoint> points, double bin_width, double max_lag,
                              unsigned workers = 1) {
  require(points.size() >= 2, "lag curve needs at least two points");
  require(bin_width > 0 && max_lag >= bin_width, "need 0 < bin width <= max lag");
  const std::size_t bins = std::size_t(std::floor(max_lag / bin_width)) + 1;
  std::vector<Index3> pos(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) pos[i] = points[i].position;
  NeighborGrid grid(pos, max_lag);

  // Fixed blocks reduced in order keep the sums independent of the worker count.
  const std::size_t blocks = std::min<std::size_t>(points.size(), 256);
  std::vector<std::vector<double>> sums(blocks, std::vector<double>(bins, 0.0));
  std::vector<std::vector<std::size_t>> counts(blocks, std::vector<std::size_t>(bins, 0));
  parallel_for(blocks, workers, [&](std::size_t b) {
    const std::size_t lo = b * points.size() / blocks, hi = (b + 1) * points.size() / blocks;
    for (std::size_t i = lo; i < hi; ++i)
      grid.for_each_within(pos[i], max_lag, false, [&](std::size_t j) {
        if (j <= i) return;
        auto k = std::size_t(std::lround(distance(pos[i], pos[j]) / bin_width));
        if (k >= bins) return;
        const double diff = points[i].angle_deg - points[j].angle_deg;
        sums[b][k] += diff * diff;
        ++counts[b][k];
      });
  });
  LagCurve c;
  c.bin_width = bin_width;
  c.lag.resize(bins);
  c.s.assign(bins, std::numeric_limits<double>::quiet_NaN());
  c.pairs.assign(bins, 0);
  for (std::size_t k = 0; k < bins; ++k) {
    c.lag[k] = double(k) * bin_width;
    double total = 0;
    for (std::size_t b = 0; b < blocks; ++b) {
      total += sums[b][k];
      c.pairs[k] += counts[b][k];
    }
    if (c.pairs[k] > 0) c.s[k] = std::sqrt(total / double(c.pairs[k]) / 2.0);
  }
  return c;
}

// ---------------------------------------------------------------------------
// Correlation length

struct CorrelationLength {
  bool defined = false;
  double length = std::numeric_limits<double>::quiet_NaN();
  double sill = 0;
  double slope = 0;
  double intercept = 0;
};

/// Tangent through the first three populated bins (least squares), sill from
/// the last quarter of populated bins; L is where the tangent meets the sill.
/// Undefined when the tangent does not rise, starts at or above the sill, or
/// reaches the sill only beyond the last populated lag.
inline CorrelationLength correlation_length(const LagCurve& curve) {
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < curve.pairs.size(); ++k)
    if (curve.populated(k)) idx.push_back(k);
  if (idx.size() < 4) fail(ErrorKind::data, "correlation length needs at least 4 populated lag bins");

  CorrelationLength out;
  const std::size_t tail = (idx.size() + 3) / 4;
  for (std::size_t i = idx.size() - tail; i < idx.size(); ++i) out.sill += curve.s[idx[i]];
  out.sill /= double(tail);

  double mx = 0, my = 0;
  for (int i = 0; i < 3; ++i) {
    mx += curve.lag[idx[std::size_t(i)]];
    my += curve.s[idx[std::size_t(i)]];
  }
  mx /= 3;
  my /= 3;
  double sxy = 0, sxx = 0;
  for (int i = 0; i < 3; ++i) {
    const double dx = curve.lag[idx[std::size_t(i)]] - mx;
    sxy += dx * (curve.s[idx[std::size_t(i)]] - my);
    sxx += dx * dx;
  }
  out.slope = sxy / sxx;
  out.intercept = my - out.slope * mx;

  const double last = curve.lag[idx.back()];
  const double rise = out.slope * last;
  if (!(rise > 1e-9 * std::max(out.sill, 1e-300)) || out.intercept >= out.sill) return out;
  const double L = (out.sill - out.intercept) / out.slope;
  if (L <= 0 || L > last) return out;
  out.defined = true;
  out.length = L;
  return out;
}

// ---------------------------------------------------------------------------
// Volumetric interpolation

struct InterpolatedField {
  Dims dims;
  std::vector<double> values;  ///< NaN where unassigned
  std::size_t assigned = 0;
  std::size_t unreachable = 0;  ///< mask voxels never reached
  std::size_t iterations = 0;
};

/// Grows seed values through `mask` one 26-neighborhood shell at a time; a
/// newly reached voxel takes the mean of its already assigned neighbors.
/// Several points on one voxel are averaged into a single seed.
inline InterpolatedField interpolate_volumetric(std::span<const PredictionPoint> points, const Mask& mask) {
  require(!points.empty(), "interpolation needs at least one point");
  const Dims& d = mask.dims;
  require(mask.bits.size() == d.size(), "mask size does not match its dimensions");
  InterpolatedField f;
  f.dims = d;
  f.values.assign(d.size(), std::numeric_limits<double>::quiet_NaN());
  std::vector<double> seed_sum(d.size(), 0.0);
  std::vector<std::uint32_t> seed_n(d.size(), 0);
  std::vector<std::size_t> current;
  for (const auto& p : points) {
    require(d.contains(p.position) && mask.bits[d.linear(p.position)], "interpolation seed lies outside the mask");
    std::size_t i = d.linear(p.position);
    if (seed_n[i]++ == 0) current.push_back(i);
    seed_sum[i] += p.angle_deg;
  }
  for (auto i : current) f.values[i] = seed_sum[i] / seed_n[i];
  f.assigned = current.size();

  std::vector<std::uint8_t> queued(d.size(), 0);
  for (auto i : current) queued[i] = 1;
  auto neighbors = [&](std::size_t i, auto&& fn) {
    Index3 c = d.coord(i);
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (!dx && !dy && !dz) continue;
          int x = c.x + dx, y = c.y + dy, z = c.z + dz;
          if (d.contains(x, y, z)) fn(d.linear(x, y, z));
        }
  };
  std::vector<std::size_t> front;
  std::vector<double> next_values;
  for (;;) {
    front.clear();
    for (auto i : current)
      neighbors(i, [&](std::size_t j) {
        if (mask.bits[j] && !queued[j]) {
          queued[j] = 1;
          front.push_back(j);
        }
      });
    if (front.empty()) break;
    std::sort(front.begin(), front.end());
    next_values.assign(front.size(), 0.0);
    for (std::size_t k = 0; k < front.size(); ++k) {
      double sum = 0;
      int n = 0;
      neighbors(front[k], [&](std::size_t j) {
        if (!std::isnan(f.values[j])) {
          sum += f.values[j];
          ++n;
        }
      });
      next_values[k] = sum / n;
    }
    for (std::size_t k = 0; k < front.size(); ++k) f.values[front[k]] = next_values[k];
    f.assigned += front.size();
    ++f.iterations;
    current.swap(front);
  }
  f.unreachable = mask.count() - f.assigned;
  return f;
}

/// Pore-space mask: every voxel holding one of the two fluids.
inline Mask pore_mask(const Volume& vol) {
  Mask m{vol.dims(), std::vector<std::uint8_t>(vol.data().size(), 0)};
  for (std::size_t i = 0; i < m.bits.size(); ++i) {
    auto v = vol.data()[i];
    m.bits[i] = v == code(Phase::reference_fluid) || v == code(Phase::other_fluid);
  }
  return m;
}

/// Mask of a single phase.
inline Mask phase_mask(const Volume& vol, Phase p) {
  Mask m{vol.dims(), std::vector<std::uint8_t>(vol.data().size(), 0)};
  for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = vol.data()[i] == code(p);
  return m;
}

/// Writes angles as little-endian uint16 in units of 0.01 degree, 0 = no data.
inline void save_angle_volume(const InterpolatedField& f, const std::filesystem::path& raw_path,
                              const std::filesystem::path& meta_path) {
  std::vector<std::uint8_t> bytes(f.values.size() * 2, 0);
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    double v = f.values[i];
    std::uint16_t q = std::isnan(v) ? 0 : std::uint16_t(std::lround(clamp_angle(v) * 100.0));
    bytes[2 * i] = std::uint8_t(q & 0xff);
    bytes[2 * i + 1] = std::uint8_t(q >> 8);
  }
  write_bytes(raw_path, bytes.data(), bytes.size());
  nlohmann::ordered_json j;
  j["shape"] = {f.dims.nx, f.dims.ny, f.dims.nz};
  j["order"] = "xyz";
  j["dtype"] = "uint16le";
  j["scale_deg"] = 0.01;
  j["nodata"] = 0;
  std::string meta = j.dump(2) + "\n";
  write_bytes(meta_path, meta.data(), meta.size());
}

// ---------------------------------------------------------------------------
// Histograms and time series

struct Histogram {
  double lo = 0, hi = 180;
  std::vector<std::size_t> counts;
};

/// Equal-width bins over [lo, hi]; the upper edge belongs to the last bin,
/// values outside are dropped.
inline Histogram histogram(std::span<const double> values, std::size_t bins = 36, double lo = 0, double hi = 180) {
  require(bins > 0 && hi > lo, "invalid histogram range");
  Histogram h{lo, hi, std::vector<std::size_t>(bins, 0)};
  for (double v : values) {
    if (!(v >= lo && v <= hi)) continue;
    auto k = std::min(bins - 1, std::size_t((v - lo) / (hi - lo) * double(bins)));
    ++h.counts[k];
  }
  return h;
}

struct TimeseriesConfig {
  double bin_width = 1;
  double max_lag = 40;
  std::size_t histogram_bins = 36;
  unsigned workers = 1;
};

struct StepReport {
  std::string label;
  std::size_t count = 0;
  bool empty = true;
  AngleStats stats{std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(),
                   std::numeric_limits<double>::quiet_NaN()};
  Histogram hist;
  LagCurve curve;
  CorrelationLength corr;
};

/// Change of each quantity against the previous step; zero for the first step.
struct TrendRow {
  double d_mean = 0, d_std = 0, d_cv = 0, d_length = 0;
};

struct TimeseriesReport {
  std::vector<StepReport> steps;
  std::vector<TrendRow> trends;
};

inline StepReport analyze_step(std::span<const PredictionPoint> points, const TimeseriesConfig& cfg,
                               std::string label = {}) {
  StepReport r;
  r.label = std::move(label);
  r.count = points.size();
  std::vector<double> angles(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) angles[i] = points[i].angle_deg;
  r.hist = histogram(angles, cfg.histogram_bins);
  if (points.empty()) return r;
  r.empty = false;
  r.stats = angle_stats(angles);
  if (points.size() >= 2) {
    r.curve = lag_std_curve(points, cfg.bin_width, cfg.max_lag, cfg.workers);
    if (r.curve.populated_count() >= 4) r.corr = correlation_length(r.curve);
  }
  return r;
}

inline TimeseriesReport timeseries_report(std::span<const AngleField> fields, const TimeseriesConfig& cfg = {}) {
  if (fields.empty()) fail(ErrorKind::data, "time series needs at least one step");
  TimeseriesReport rep;
  for (std::size_t t = 0; t < fields.size(); ++t)
    rep.steps.push_back(analyze_step(fields[t].points, cfg,
                                     fields[t].volume_id.empty() ? "step" + std::to_string(t) : fields[t].volume_id));
  rep.trends.resize(fields.size());
  for (std::size_t t = 1; t < fields.size(); ++t) {
    const auto& a = rep.steps[t - 1];
    const auto& b = rep.steps[t];
    rep.trends[t] = {b.stats.mean - a.stats.mean, b.stats.std - a.stats.std, b.stats.cv - a.stats.cv,
                     b.corr.length - a.corr.length};
    // Undefined lengths on both sides count as no change.
    if (!a.corr.defined && !b.corr.defined) rep.trends[t].d_length = 0;
  }
  return rep;
}

namespace detail {
inline std::string fmt(double v, int prec = 4) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}
}  // namespace detail

/// Plain-text report: a step table, a trend table, then histogram and lag
/// curve columns per step.
inline void write_timeseries_report(std::ostream& os, const TimeseriesReport& rep) {
  using detail::fmt;
  os << "# steps\n";
  os << "step\tlabel\tcount\tmean\tstd\tcv\tcorrelation_length\tsill\n";
  for (std::size_t t = 0; t < rep.steps.size(); ++t) {
    const auto& s = rep.steps[t];
    os << t << '\t' << s.label << '\t' << s.count << '\t' << fmt(s.stats.mean) << '\t' << fmt(s.stats.std) << '\t'
       << fmt(s.stats.cv) << '\t' << (s.corr.defined ? fmt(s.corr.length) : "undefined") << '\t' << fmt(s.corr.sill)
       << '\n';
  }
  os << "\n# trends\n";
  os << "step\td_mean\td_std\td_cv\td_correlation_length\n";
  for (std::size_t t = 0; t < rep.trends.size(); ++t) {
    const auto& r = rep.trends[t];
    os << t << '\t' << fmt(r.d_mean) << '\t' << fmt(r.d_std) << '\t' << fmt(r.d_cv) << '\t' << fmt(r.d_length) << '\n';
  }
  for (std::size_t t = 0; t < rep.steps.size(); ++t) {
    const auto& s = rep.steps[t];
    os << "\n# histogram step " << t << "\n";
    os << "bin_lo\tbin_hi\tcount\n";
    const double w = (s.hist.hi - s.hist.lo) / double(s.hist.counts.size());
    for (std::size_t k = 0; k < s.hist.counts.size(); ++k)
      os << fmt(s.hist.lo + w * double(k), 2) << '\t' << fmt(s.hist.lo + w * double(k + 1), 2) << '\t'
         << s.hist.counts[k] << '\n';
    os << "\n# lag curve step " << t << "\n";
    os << "lag\ts\tpairs\n";
    for (std::size_t k = 0; k < s.curve.lag.size(); ++k)
      os << fmt(s.curve.lag[k], 2) << '\t' << fmt(s.curve.s[k]) << '\t' << s.curve.pairs[k] << '\n';
  }
}

}  // namespace deepangle
