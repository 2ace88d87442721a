/// @file benchmark.hpp
/// @brief Curved-surface accuracy and timing comparison between the network
///        pipeline and the direct baseline.
#pragma once

#include <chrono>
#include <map>
#include <ostream>
#include <vector>

#include <json.hpp>

#include "deepangle/direct.hpp"
#include "deepangle/pipeline.hpp"
#include "deepangle/stats.hpp"
#include "deepangle/synth.hpp"

namespace deepangle {

struct BenchmarkConfig {
  double droplet_radius = 10;
  std::vector<double> angles{30, 60, 90, 120, 150};
  std::vector<Convexity> convexities{Convexity::convex, Convexity::concave};
  std::uint64_t seed = 1;
  int side = 0;  ///< 0 = smallest domain holding the geometry
  PipelineConfig pipeline;
  DirectConfig direct;
};

/// Error summary of one method on one convexity; truth is the angle of the nearest droplet.
struct MethodScore {
  std::size_t points = 0;
  double r2 = std::numeric_limits<double>::quiet_NaN();
  bool r2_defined = false;
  double mae = 0;
  double error_std = 0;
  double angle_std = 0;
  double seconds = 0;
};

struct DropletError {
  Convexity convexity;
  double true_angle = 0;
  int droplet = 0;
  std::size_t pipeline_points = 0, direct_points = 0;
  double pipeline_mean = std::numeric_limits<double>::quiet_NaN();
  double direct_mean = std::numeric_limits<double>::quiet_NaN();
};

struct ConvexityResult {
  Convexity convexity;
  MethodScore pipeline, direct;
  std::size_t direct_skipped = 0;
};

struct BenchmarkReport {
  std::vector<ConvexityResult> results;
  std::vector<DropletError> droplets;
};

inline MethodScore score(const std::vector<double>& pred, const std::vector<double>& truth, double seconds) {
  MethodScore s;
  s.points = pred.size();
  s.seconds = seconds;
  if (pred.empty()) return s;
  std::vector<double> err(pred.size());
  double abs_sum = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    err[i] = pred[i] - truth[i];
    abs_sum += std::abs(err[i]);
  }
  s.mae = abs_sum / double(pred.size());
  s.error_std = angle_stats(err).std;
  s.angle_std = angle_stats(pred).std;
  if (pred.size() >= 2 && angle_stats(truth).std > 0) {
    s.r2 = r_squared(pred, truth);
    s.r2_defined = true;
  }
  return s;
}

/// Runs both methods on one benchmark volume per (convexity, angle). The
/// direct method is evaluated at the centers the pipeline sampled, so both
/// see the same contact-point budget.
inline BenchmarkReport run_benchmark(const BenchmarkConfig& cfg, const Model& small, const Model& large) {
  require(!cfg.angles.empty(), "benchmark needs at least one angle");
  using clock = std::chrono::steady_clock;
  BenchmarkReport rep;
  for (Convexity cv : cfg.convexities) {
    std::vector<double> p_pred, p_truth, d_pred, d_truth;
    double p_sec = 0, d_sec = 0;
    std::size_t skipped = 0;
    for (std::size_t a = 0; a < cfg.angles.size(); ++a) {
      auto b = generate_curved_benchmark(cfg.droplet_radius, {cfg.angles[a]}, cv, derive_seed(cfg.seed, a),
                                         cfg.side);
      auto t0 = clock::now();
      auto field = run_pipeline(b.volume, cfg.pipeline, small, large);
      auto t1 = clock::now();
      std::vector<Index3> centers;
      for (const auto& p : field.points) centers.push_back(p.position);
      DirectConfig dc = cfg.direct;
      dc.workers = cfg.pipeline.workers;
      auto direct = measure_direct(b.volume, dc, std::span<const Index3>(centers));
      auto t2 = clock::now();
      p_sec += std::chrono::duration<double>(t1 - t0).count();
      d_sec += std::chrono::duration<double>(t2 - t1).count();
      skipped += direct.skipped;

      std::map<int, DropletError> per;
      for (const auto& d : b.droplets) per[d.id] = {cv, d.true_angle, d.id};
      for (const auto& p : field.points) {
        const auto& d = b.droplets[std::size_t(nearest_droplet(b, p.position))];
        p_pred.push_back(p.angle_deg);
        p_truth.push_back(d.true_angle);
        auto& e = per[d.id];
        e.pipeline_mean = (e.pipeline_points ? e.pipeline_mean * double(e.pipeline_points) : 0.0) + p.angle_deg;
        e.pipeline_mean /= double(++e.pipeline_points);
      }
      for (const auto& p : direct.points) {
        const auto& d = b.droplets[std::size_t(nearest_droplet(b, p.position))];
        d_pred.push_back(p.angle_deg);
        d_truth.push_back(d.true_angle);
        auto& e = per[d.id];
        e.direct_mean = (e.direct_points ? e.direct_mean * double(e.direct_points) : 0.0) + p.angle_deg;
        e.direct_mean /= double(++e.direct_points);
      }
      for (auto& [id, e] : per) rep.droplets.push_back(e);
    }
    rep.results.push_back({cv, score(p_pred, p_truth, p_sec), score(d_pred, d_truth, d_sec), skipped});
  }
  return rep;
}

namespace detail {
inline nlohmann::ordered_json num(double v) { return std::isfinite(v) ? nlohmann::ordered_json(v) : nullptr; }

inline nlohmann::ordered_json score_json(const MethodScore& s) {
  return {{"points", s.points}, {"r2", num(s.r2)},           {"r2_defined", s.r2_defined},
          {"mae_deg", num(s.mae)}, {"error_std_deg", num(s.error_std)}, {"angle_std_deg", num(s.angle_std)}};
}
}  // namespace detail

/// Accuracy figures; wall-clock numbers go to a separate "timing" object.
inline nlohmann::ordered_json benchmark_json(const BenchmarkReport& rep) {
  nlohmann::ordered_json j, timing;
  for (const auto& r : rep.results) {
    j["results"][to_string(r.convexity)] = {{"pipeline", detail::score_json(r.pipeline)},
                                            {"direct", detail::score_json(r.direct)},
                                            {"direct_skipped", r.direct_skipped}};
    timing[to_string(r.convexity)] = {{"pipeline_s", r.pipeline.seconds},
                                      {"direct_s", r.direct.seconds},
                                      {"speedup", detail::num(r.direct.seconds / r.pipeline.seconds)}};
  }
  j["timing"] = timing;
  return j;
}

/// CSV with one row per droplet: convexity, true angle, id, per-method point counts, means and errors.
inline void write_droplet_errors(std::ostream& os, const BenchmarkReport& rep) {
  os << "convexity,true_angle_deg,droplet,pipeline_points,pipeline_mean_deg,pipeline_error_deg,direct_points,"
        "direct_mean_deg,direct_error_deg\n";
  char buf[256];
  for (const auto& d : rep.droplets) {
    std::snprintf(buf, sizeof buf, "%s,%.2f,%d,%zu,%.2f,%.2f,%zu,%.2f,%.2f\n", to_string(d.convexity), d.true_angle,
                  d.droplet, d.pipeline_points, d.pipeline_mean, d.pipeline_mean - d.true_angle, d.direct_points,
                  d.direct_mean, d.direct_mean - d.true_angle);
    os << buf;
  }
}

}  // namespace deepangle
