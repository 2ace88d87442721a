/// @file pipeline.hpp
/// @brief Contact-angle prediction on a segmented volume: contact-line
///        detection, random sub-sampling, two-radius inference, spatial
///        correlation and merging, executed chunk-parallel.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "deepangle/common.hpp"
#include "deepangle/nn.hpp"
#include "deepangle/stats.hpp"
#include "deepangle/volume.hpp"

namespace deepangle {

inline constexpr double min_angle_deg = 0.01;
inline constexpr double max_angle_deg = 179.99;

inline double clamp_angle(double a) { return std::clamp(a, min_angle_deg, max_angle_deg); }

struct PredictionPoint {
  Index3 position;
  double angle_deg = 90;
  int radius = 0;
  bool correlated = false;
  bool merged = false;
};

struct PipelineConfig {
  std::size_t max_samples_per_chunk = 5000;
  std::uint64_t seed = 1;
  double merger_radius = 16;  ///< neighborhood of the spatial merger (voxels)
  int chunk_side = 128;
  int halo = 8;
  int small_radius = 4;
  int large_radius = 8;
  unsigned workers = 1;
  std::size_t batch = 64;  ///< fixed inference batch; keeps results independent of chunking
};

inline nlohmann::ordered_json to_json(const PipelineConfig& c) {
  return {{"max_samples_per_chunk", c.max_samples_per_chunk},
          {"seed", c.seed},
          {"merger_radius", c.merger_radius},
          {"chunk_side", c.chunk_side},
          {"halo", c.halo},
          {"small_radius", c.small_radius},
          {"large_radius", c.large_radius},
          {"batch", c.batch}};
}

struct FieldSummary {
  std::size_t count = 0;
  AngleStats stats;
  bool empty = true;
};

struct AngleField {
  std::vector<PredictionPoint> points;
  FieldSummary summary;
  std::string volume_id;
  std::size_t contact_voxels = 0;
  PipelineConfig config;
  std::string model_checksums[2];
};

inline FieldSummary summarize(std::span<const PredictionPoint> points) {
  FieldSummary s;
  s.count = points.size();
  s.empty = points.empty();
  if (!s.empty) {
    std::vector<double> a;
    a.reserve(points.size());
    for (const auto& p : points) a.push_back(p.angle_deg);
    s.stats = angle_stats(a);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Neighbor queries

/// Uniform hash grid over integer voxel positions.
class NeighborGrid {
 public:
  NeighborGrid(std::span<const Index3> pts, double cell) : pts_(pts), cell_(std::max(1.0, cell)) {
    for (std::size_t i = 0; i < pts.size(); ++i) cells_[key(cell_of(pts[i]))].push_back(std::uint32_t(i));
  }

  /// Calls f(j) for every point j with |p - pts[j]| < radius (strict) or <= radius.
  template <typename F>
  void for_each_within(const Index3& p, double radius, bool strict, F&& f) const {
    const double r2 = radius * radius;
    const int reach = int(std::ceil(radius / cell_));
    Index3 c = cell_of(p);
    for (int dz = -reach; dz <= reach; ++dz)
      for (int dy = -reach; dy <= reach; ++dy)
        for (int dx = -reach; dx <= reach; ++dx) {
          auto it = cells_.find(key({c.x + dx, c.y + dy, c.z + dz}));
          if (it == cells_.end()) continue;
          for (auto j : it->second) {
            const Index3& q = pts_[j];
            double ex = q.x - p.x, ey = q.y - p.y, ez = q.z - p.z;
            double d2 = ex * ex + ey * ey + ez * ez;
            if (strict ? d2 < r2 : d2 <= r2) f(std::size_t(j));
          }
        }
  }

 private:
  Index3 cell_of(const Index3& p) const {
    return {int(std::floor(p.x / cell_)), int(std::floor(p.y / cell_)), int(std::floor(p.z / cell_))};
  }
  static std::uint64_t key(const Index3& c) {
    return (std::uint64_t(std::uint32_t(c.x) & 0x1fffff) << 42) | (std::uint64_t(std::uint32_t(c.y) & 0x1fffff) << 21) |
           std::uint64_t(std::uint32_t(c.z) & 0x1fffff);
  }
  std::span<const Index3> pts_;
  double cell_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> cells_;
};

// ---------------------------------------------------------------------------
// Stages

/// Solid voxels touching both fluids within their 26-neighborhood.
inline std::vector<Index3> detect_contact_line(const Volume& vol) {
  const Dims& d = vol.dims();
  return find_contact_voxels(vol, {{0, 0, 0}, {d.nx, d.ny, d.nz}});
}

/// Uniform subset without replacement of size min(max_n, |coords|), returned in z, y, x order.
inline std::vector<Index3> sample_centers(std::vector<Index3> coords, std::size_t max_n, std::uint64_t seed) {
  require(max_n >= 1, "sample budget must be at least 1");
  std::sort(coords.begin(), coords.end());
  if (coords.size() > max_n) {
    std::mt19937_64 rng(derive_seed(seed, 0xce17));
    for (std::size_t i = 0; i < max_n; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, coords.size() - 1);
      std::swap(coords[i], coords[pick(rng)]);
    }
    coords.resize(max_n);
    std::sort(coords.begin(), coords.end());
  }
  return coords;
}

/// Model output * 180 for the sub-sample at each center. Batches always have
/// `batch` columns (zero padded) so every center's result is independent of
/// which other centers share its batch.
inline std::vector<double> infer_angles(const Model& model, const Volume& vol, std::span<const Index3> centers,
                                        std::size_t batch = 64) {
  const int r = model.spec().radius;
  const std::size_t n = model.spec().input_size();
  std::vector<double> out(centers.size());
  Model::Matrix x = Model::Matrix::Zero(Eigen::Index(n), Eigen::Index(batch));
  for (std::size_t b = 0; b < centers.size(); b += batch) {
    x.setZero();
    std::size_t e = std::min(centers.size(), b + batch);
    for (std::size_t j = b; j < e; ++j)
      extract_cube_into(vol, centers[j], r, BinarizeRule::canonical(), x.col(Eigen::Index(j - b)).data());
    auto y = model.infer(x);
    for (std::size_t j = b; j < e; ++j) out[j] = clamp_angle(180.0 * double(y(0, Eigen::Index(j - b))));
  }
  return out;
}

struct PointPredictions {
  std::vector<PredictionPoint> small;  ///< radius-4 model
  std::vector<PredictionPoint> large;  ///< radius-8 model
};

inline void check_models(const Model& small, const Model& large, const PipelineConfig& cfg) {
  if (small.spec().radius != cfg.small_radius || large.spec().radius != cfg.large_radius)
    fail(ErrorKind::data, "model/radius mismatch: expected radii " + std::to_string(cfg.small_radius) + " and " +
                              std::to_string(cfg.large_radius) + ", got " + std::to_string(small.spec().radius) +
                              " and " + std::to_string(large.spec().radius));
}

inline PointPredictions predict_points(const Volume& vol, std::span<const Index3> centers, const Model& small,
                                       const Model& large, const PipelineConfig& cfg = {}) {
  check_models(small, large, cfg);
  PointPredictions p;
  auto a4 = infer_angles(small, vol, centers, cfg.batch);
  auto a8 = infer_angles(large, vol, centers, cfg.batch);
  for (std::size_t i = 0; i < centers.size(); ++i) {
    p.small.push_back({centers[i], a4[i], small.spec().radius});
    p.large.push_back({centers[i], a8[i], large.spec().radius});
  }
  return p;
}

/// Replaces every angle by the mean over same-radius predictions (itself
/// included) whose centers are closer than `threshold`, using original values.
inline std::vector<PredictionPoint> spatial_correlate(std::span<const PredictionPoint> preds, double threshold) {
  std::vector<Index3> pos;
  pos.reserve(preds.size());
  for (const auto& p : preds) pos.push_back(p.position);
  NeighborGrid grid(pos, threshold);
  std::vector<PredictionPoint> out(preds.begin(), preds.end());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    double sum = 0;
    std::size_t n = 0;
    grid.for_each_within(pos[i], threshold, true, [&](std::size_t j) {
      if (preds[j].radius != preds[i].radius) return;
      sum += preds[j].angle_deg;
      ++n;
    });
    out[i].angle_deg = sum / double(n);
    out[i].correlated = n > 1;
  }
  return out;
}

/// Shifts each large-radius angle by (local small-radius mean - local
/// large-radius mean) within `rho`. Falls back to global means when no
/// small-radius point is near, and to no shift when the small set is empty.
inline std::vector<PredictionPoint> spatial_merge(std::span<const PredictionPoint> large,
                                                  std::span<const PredictionPoint> small, double rho) {
  std::vector<PredictionPoint> out(large.begin(), large.end());
  if (small.empty()) return out;
  auto mean_of = [](std::span<const PredictionPoint> v) {
    double s = 0;
    for (const auto& p : v) s += p.angle_deg;
    return s / double(v.size());
  };
  const double global_shift = mean_of(small) - (large.empty() ? 0.0 : mean_of(large));
  std::vector<Index3> pos_l, pos_s;
  for (const auto& p : large) pos_l.push_back(p.position);
  for (const auto& p : small) pos_s.push_back(p.position);
  // A neighborhood spanning the whole point cloud reduces to the global means.
  Index3 lo = small[0].position, hi = lo;
  for (const auto* set : {&pos_l, &pos_s})
    for (const auto& q : *set) {
      lo = {std::min(lo.x, q.x), std::min(lo.y, q.y), std::min(lo.z, q.z)};
      hi = {std::max(hi.x, q.x), std::max(hi.y, q.y), std::max(hi.z, q.z)};
    }
  const bool global = rho >= distance(lo, hi);
  NeighborGrid grid_l(pos_l, global ? 1.0 : rho), grid_s(pos_s, global ? 1.0 : rho);
  for (std::size_t i = 0; i < large.size(); ++i) {
    double shift = global_shift;
    if (!global) {
      double ss = 0, sl = 0;
      std::size_t ns = 0, nl = 0;
      grid_s.for_each_within(large[i].position, rho, false, [&](std::size_t j) { ss += small[j].angle_deg, ++ns; });
      if (ns > 0) {
        grid_l.for_each_within(large[i].position, rho, false, [&](std::size_t j) { sl += large[j].angle_deg, ++nl; });
        shift = ss / double(ns) - sl / double(nl);
      }
    }
    out[i].angle_deg = clamp_angle(large[i].angle_deg + shift);
    out[i].merged = true;
  }
  return out;
}

/// Full prediction on a volume. Output points are sorted by position and are
/// identical for any worker count.
inline AngleField run_pipeline(const Volume& vol, const PipelineConfig& cfg, const Model& small, const Model& large) {
  check_models(small, large, cfg);
  require(cfg.halo >= cfg.large_radius, "halo must be at least the large sub-sample radius");
  require(cfg.small_radius < cfg.large_radius, "small radius must be below the large radius");
  ChunkPlan plan = plan_chunks(vol.dims(), cfg.chunk_side, cfg.halo);
  std::vector<PointPredictions> per_chunk(plan.chunks.size());
  std::vector<std::size_t> contact_counts(plan.chunks.size());
  parallel_for(plan.chunks.size(), cfg.workers, [&](std::size_t k) {
    // Contact voxels are owned by the chunk whose interior holds them; the
    // halo only supplies read context, which the shared volume provides.
    auto contacts = find_contact_voxels(vol, plan.chunks[k].interior);
    contact_counts[k] = contacts.size();
    auto centers = sample_centers(std::move(contacts), cfg.max_samples_per_chunk, derive_seed(cfg.seed, k));
    per_chunk[k] = predict_points(vol, centers, small, large, cfg);
  });
  PointPredictions all;
  AngleField field;
  for (std::size_t k = 0; k < per_chunk.size(); ++k) {
    all.small.insert(all.small.end(), per_chunk[k].small.begin(), per_chunk[k].small.end());
    all.large.insert(all.large.end(), per_chunk[k].large.begin(), per_chunk[k].large.end());
    field.contact_voxels += contact_counts[k];
  }
  auto by_pos = [](const PredictionPoint& a, const PredictionPoint& b) { return a.position < b.position; };
  std::sort(all.small.begin(), all.small.end(), by_pos);
  std::sort(all.large.begin(), all.large.end(), by_pos);
  auto small_c = spatial_correlate(all.small, 2.0 * cfg.small_radius);
  auto large_c = spatial_correlate(all.large, 2.0 * cfg.large_radius);
  field.points = spatial_merge(large_c, small_c, cfg.merger_radius);
  field.summary = summarize(field.points);
  field.volume_id = hex64(vol.checksum());
  field.config = cfg;
  return field;
}

// ---------------------------------------------------------------------------
// Output

/// CSV with header x,y,z,angle_deg,radius,correlated,merged,method.
inline void write_points_table(std::ostream& os, std::span<const PredictionPoint> points,
                               const std::string& method = "deepangle") {
  os << "x,y,z,angle_deg,radius,correlated,merged,method\n";
  char buf[128];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%d,%d,%d,%.2f,%d,%d,%d,", p.position.x, p.position.y, p.position.z, p.angle_deg,
                  p.radius, int(p.correlated), int(p.merged));
    os << buf << method << '\n';
  }
}

inline nlohmann::ordered_json summary_json(const AngleField& f) {
  nlohmann::ordered_json j;
  j["count"] = f.summary.count;
  j["empty"] = f.summary.empty;
  j["mean"] = f.summary.stats.mean;
  j["std"] = f.summary.stats.std;
  j["cv"] = f.summary.stats.cv;
  j["contact_voxels"] = f.contact_voxels;
  j["volume_checksum"] = f.volume_id;
  j["config"] = to_json(f.config);
  j["model_checksums"] = {{"small", f.model_checksums[0]}, {"large", f.model_checksums[1]}};
  return j;
}

}  // namespace deepangle
