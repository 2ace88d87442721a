/// @file direct.hpp
/// @brief Baseline contact-angle measurement from Gaussian-smoothed phase
///        indicators.
///
/// This is a voxel simplification of the classic direct method: the solid
/// normal comes from the smoothed solid indicator, the fluid-fluid normal
/// from a least-squares plane through the nearby voxel interface, and the
/// angle is the arc cosine of their dot product. There is no surface meshing
/// or curvature fitting.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "deepangle/common.hpp"
#include "deepangle/pipeline.hpp"
#include "deepangle/synth.hpp"
#include "deepangle/volume.hpp"

namespace deepangle {

struct DirectConfig {
  double sigma = 1.0;
  double truncate = 3.0;       ///< kernel half-width in units of sigma
  double min_gradient = 1e-6;  ///< points with a weaker solid normal are skipped
  double fit_radius = 4.0;     ///< interface patch used for the fluid-fluid normal
  Phase reference = Phase::reference_fluid;
  unsigned workers = 1;
};

/// Discrete Gaussian exp(-t) I_n(t), t = sigma^2, truncated at
/// ceil(truncate * sigma) and renormalized. Unlike the sampled Gaussian it
/// composes exactly: smoothing with s1 then s2 equals smoothing with
/// sqrt(s1^2 + s2^2).
inline std::vector<double> gaussian_kernel(double sigma, double truncate = 3.0) {
  require(sigma > 0, "sigma must be positive");
  require(truncate > 0, "kernel truncation must be positive");
  const int radius = std::max(1, int(std::ceil(truncate * sigma)));
  const double t = sigma * sigma;
  // Miller backward recurrence I_{n-1} = I_{n+1} + (2n/t) I_n from far above the radius.
  const int top = radius + 32 + int(std::ceil(4 * std::sqrt(t) + t / 8));
  std::vector<double> in(std::size_t(top) + 2, 0.0);
  in[std::size_t(top)] = 1e-280;
  for (int n = top; n >= 1; --n) {
    in[std::size_t(n - 1)] = in[std::size_t(n + 1)] + (2.0 * n / t) * in[std::size_t(n)];
    if (in[std::size_t(n - 1)] > 1e250)
      for (int m = n - 1; m <= top; ++m) in[std::size_t(m)] *= 1e-250;
  }
  std::vector<double> k(std::size_t(2 * radius + 1));
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) sum += k[std::size_t(i + radius)] = in[std::size_t(std::abs(i))];
  for (auto& v : k) v /= sum;
  return k;
}

/// Half-sample symmetric reflection into [0, n).
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

/// Separable Gaussian smoothing of a scalar field in the volume layout with mirror boundaries.
inline std::vector<double> gaussian_smooth(std::span<const double> field, const Dims& d, double sigma,
                                           double truncate = 3.0) {
  require(field.size() == d.size(), "field size does not match dimensions");
  const auto k = gaussian_kernel(sigma, truncate);
  const int radius = int(k.size() / 2);
  std::vector<double> a(field.begin(), field.end()), b(field.size());
  const std::size_t nx = std::size_t(d.nx), plane = nx * std::size_t(d.ny);
  // x
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y) {
      const double* src = &a[std::size_t(z) * plane + std::size_t(y) * nx];
      double* dst = &b[std::size_t(z) * plane + std::size_t(y) * nx];
      for (int x = 0; x < d.nx; ++x) {
        double s = 0;
        for (int t = -radius; t <= radius; ++t) s += k[std::size_t(t + radius)] * src[reflect_index(x + t, d.nx)];
        dst[x] = s;
      }
    }
  // y: whole rows at a time
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y) {
      double* dst = &a[std::size_t(z) * plane + std::size_t(y) * nx];
      std::fill(dst, dst + nx, 0.0);
      for (int t = -radius; t <= radius; ++t) {
        const double w = k[std::size_t(t + radius)];
        const double* src = &b[std::size_t(z) * plane + std::size_t(reflect_index(y + t, d.ny)) * nx];
        for (std::size_t x = 0; x < nx; ++x) dst[x] += w * src[x];
      }
    }
  // z: whole planes at a time
  for (int z = 0; z < d.nz; ++z) {
    double* dst = &b[std::size_t(z) * plane];
    std::fill(dst, dst + plane, 0.0);
    for (int t = -radius; t <= radius; ++t) {
      const double w = k[std::size_t(t + radius)];
      const double* src = &a[std::size_t(reflect_index(z + t, d.nz)) * plane];
      for (std::size_t i = 0; i < plane; ++i) dst[i] += w * src[i];
    }
  }
  return b;
}

inline std::vector<double> indicator(const Volume& vol, Phase p) {
  std::vector<double> f(vol.data().size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = vol.data()[i] == code(p) ? 1.0 : 0.0;
  return f;
}

struct DirectResult {
  std::vector<PredictionPoint> points;
  std::size_t skipped = 0;
};

/// Unit normal of the least-squares plane through the fluid-fluid interface
/// (midpoints of face-adjacent reference/other voxel pairs) within `radius`
/// of `p`, oriented from the reference fluid into the other fluid. Empty
/// when fewer than three interface faces are found or the patch is collinear.
inline std::optional<Eigen::Vector3d> interface_normal(const Volume& vol, const Index3& p, Phase reference,
                                                      double radius) {
  const Dims& d = vol.dims();
  const std::uint8_t ref = code(reference),
                     oth = code(reference == Phase::reference_fluid ? Phase::other_fluid : Phase::reference_fluid);
  const int w = int(std::ceil(radius)) + 1;
  const Eigen::Vector3d c(p.x, p.y, p.z);
  std::vector<Eigen::Vector3d> mids;
  Eigen::Vector3d orient = Eigen::Vector3d::Zero();
  for (int z = std::max(0, p.z - w); z <= std::min(d.nz - 1, p.z + w); ++z)
    for (int y = std::max(0, p.y - w); y <= std::min(d.ny - 1, p.y + w); ++y)
      for (int x = std::max(0, p.x - w); x <= std::min(d.nx - 1, p.x + w); ++x) {
        if (vol.data()[d.linear(x, y, z)] != ref) continue;
        for (int a = 0; a < 3; ++a)
          for (int s : {-1, 1}) {
            Index3 q{x + (a == 0) * s, y + (a == 1) * s, z + (a == 2) * s};
            if (!d.contains(q.x, q.y, q.z) || vol.data()[d.linear(q)] != oth) continue;
            Eigen::Vector3d m(0.5 * (x + q.x), 0.5 * (y + q.y), 0.5 * (z + q.z));
            if ((m - c).norm() > radius) continue;
            mids.push_back(m);
            orient[a] += s;
          }
      }
  if (mids.size() < 3) return std::nullopt;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& m : mids) mean += m;
  mean /= double(mids.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& m : mids) cov += (m - mean) * (m - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  if (es.eigenvalues()[1] <= 1e-12 * es.eigenvalues()[2]) return std::nullopt;
  Eigen::Vector3d n = es.eigenvectors().col(0);
  return n.dot(orient) < 0 ? Eigen::Vector3d(-n) : n;
}

/// Measures the angle through `cfg.reference` at every contact voxel (or at
/// `centers` when given): theta = acos(n_s . n_f), with n_s the smoothed
/// solid normal pointing into the pore and n_f the interface normal pointing
/// out of the reference fluid.
inline DirectResult measure_direct(const Volume& vol, const DirectConfig& cfg,
                                   std::optional<std::span<const Index3>> centers = std::nullopt) {
  require(cfg.sigma > 0, "sigma must be positive");
  require(cfg.fit_radius >= 1, "interface fit radius must be at least one voxel");
  require(cfg.reference == Phase::reference_fluid || cfg.reference == Phase::other_fluid,
          "reference phase must be a fluid");
  const Dims& d = vol.dims();
  std::vector<Index3> detected;
  if (!centers) detected = detect_contact_line(vol);
  std::span<const Index3> pts = centers ? *centers : std::span<const Index3>(detected);
  const auto solid = gaussian_smooth(indicator(vol, Phase::solid), d, cfg.sigma, cfg.truncate);

  auto value = [&](int x, int y, int z) {
    return solid[d.linear(std::clamp(x, 0, d.nx - 1), std::clamp(y, 0, d.ny - 1), std::clamp(z, 0, d.nz - 1))];
  };
  std::vector<double> angles(pts.size());
  std::vector<std::uint8_t> ok(pts.size(), 0);
  parallel_for(pts.size(), cfg.workers, [&](std::size_t i) {
    const Index3& p = pts[i];
    Eigen::Vector3d gs(0.5 * (value(p.x + 1, p.y, p.z) - value(p.x - 1, p.y, p.z)),
                       0.5 * (value(p.x, p.y + 1, p.z) - value(p.x, p.y - 1, p.z)),
                       0.5 * (value(p.x, p.y, p.z + 1) - value(p.x, p.y, p.z - 1)));
    if (gs.norm() < cfg.min_gradient) return;
    auto nf = interface_normal(vol, p, cfg.reference, cfg.fit_radius);
    if (!nf) return;
    const double dot = -gs.normalized().dot(*nf);
    angles[i] = clamp_angle(deg(std::acos(std::clamp(dot, -1.0, 1.0))));
    ok[i] = 1;
  });
  DirectResult res;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (ok[i])
      res.points.push_back({pts[i], angles[i], 0, false, false});
    else
      ++res.skipped;
  }
  return res;
}

}  // namespace deepangle
