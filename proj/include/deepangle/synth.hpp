/// @file synth.hpp
/// @brief Synthetic geometries with analytically known contact angles.
///
/// Droplets are balls of the other fluid resting on (or sunk into) a solid;
/// the remaining pore space is the reference fluid and every angle is
/// reported through the reference fluid. With this convention a ball whose
/// center sits h above a flat solid meets it at 90 deg - asin(h/r).
#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "deepangle/common.hpp"
#include "deepangle/volume.hpp"

namespace deepangle {

constexpr double deg(double rad) { return rad * 180.0 / std::numbers::pi; }
constexpr double rad(double deg) { return deg * std::numbers::pi / 180.0; }

/// Contact angle (degrees) of a sphere of radius r whose center lies h above a flat solid.
inline double angle_flat(double h, double r) {
  require(r > 0, "sphere radius must be positive");
  require(std::abs(h) <= r, "sphere does not intersect the solid plane (|h| > r)");
  return 90.0 - deg(std::asin(h / r));
}

enum class Convexity { convex, concave };

inline const char* to_string(Convexity c) { return c == Convexity::convex ? "convex" : "concave"; }

/// Contact angle (degrees) of a droplet sphere (radius r) meeting a solid
/// sphere (radius R) with center distance d. Convex: droplet outside the
/// solid ball; concave: droplet inside a spherical cavity.
inline double angle_sphere(double R, double r, double d, Convexity c) {
  require(R > 0 && r > 0, "sphere radii must be positive");
  require(d >= std::abs(R - r) && d <= R + r, "spheres do not intersect");
  double cosine = (d * d - R * R - r * r) / (2 * R * r);
  if (c == Convexity::concave) cosine = -cosine;
  return deg(std::acos(std::clamp(cosine, -1.0, 1.0)));
}

/// Center distance that produces `theta_deg` in `angle_sphere`.
inline double sphere_distance(double R, double r, double theta_deg, Convexity c) {
  double cosine = std::cos(rad(theta_deg));
  if (c == Convexity::concave) cosine = -cosine;
  return std::sqrt(R * R + r * r + 2 * R * r * cosine);
}

// ---------------------------------------------------------------------------
// Flat droplets

struct DropletSpec {
  double r = 10;                          ///< sphere radius (voxels)
  double h = 0;                           ///< height of the sphere center above the solid plane
  Rotation rotation;                      ///< applied to the whole geometry about the sphere center
  std::array<double, 3> shift{0, 0, 0};   ///< sub-voxel offset of the sphere center from the domain center
};

/// Voxelizes a droplet: solid half-space, ball of other fluid, reference fluid
/// elsewhere. The rotation is applied to the continuous geometry, so every
/// voxel receives a label from {solid, reference, other}.
inline Volume rasterize_droplet(const DropletSpec& s, const Dims& dims) {
  require(s.r > 0 && std::abs(s.h) <= s.r, "droplet spec requires |h| <= r and r > 0");
  const double c[3] = {0.5 * (dims.nx - 1) + s.shift[0], 0.5 * (dims.ny - 1) + s.shift[1],
                       0.5 * (dims.nz - 1) + s.shift[2]};
  const int n[3] = {dims.nx, dims.ny, dims.nz};
  for (int a = 0; a < 3; ++a)
    if (c[a] - s.r < 0 || c[a] + s.r > n[a] - 1) fail(ErrorKind::precondition, "droplet cap clipped by domain");
  Volume vol(dims);
  const double r2 = s.r * s.r;
  for (int z = 0; z < dims.nz; ++z)
    for (int y = 0; y < dims.ny; ++y)
      for (int x = 0; x < dims.nx; ++x) {
        auto q = s.rotation.apply_inverse(x - c[0], y - c[1], z - c[2]);
        Phase p;
        if (q[2] < -s.h)
          p = Phase::solid;
        else if (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] <= r2)
          p = Phase::other_fluid;
        else
          p = Phase::reference_fluid;
        vol.set(x, y, z, p);
      }
  return vol;
}

/// Training samples of one sub-sample radius stored contiguously.
struct Dataset {
  int radius = 0;
  int side = 0;
  std::vector<std::uint8_t> inputs;  ///< count * side^3 binary voxels
  std::vector<double> targets;       ///< contact angle / 180
  std::vector<DropletSpec> specs;    ///< generating geometry (in memory only)

  std::size_t size() const { return targets.size(); }
  std::size_t input_size() const { return std::size_t(side) * side * side; }
  std::span<const std::uint8_t> input(std::size_t i) const {
    return {inputs.data() + i * input_size(), input_size()};
  }
};

struct FlatDatasetConfig {
  std::size_t count = 10000;
  int radius = 8;
  double theta_min = 5, theta_max = 175;
  double droplet_r_min = 6, droplet_r_max = 16;
  std::uint64_t seed = 1;
  unsigned workers = 1;
  int max_retries = 32;
};

/// Sub-sample of a single randomized droplet; draws from `rng` until a contact voxel exists.
inline void generate_flat_sample(const FlatDatasetConfig& cfg, std::mt19937_64& rng, std::uint8_t* out,
                                 double& target, DropletSpec& spec) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    double theta = cfg.theta_min + (cfg.theta_max - cfg.theta_min) * uni(rng);
    DropletSpec s;
    s.r = cfg.droplet_r_min + (cfg.droplet_r_max - cfg.droplet_r_min) * uni(rng);
    s.h = s.r * std::cos(rad(theta));
    for (auto& v : s.shift) v = uni(rng) - 0.5;
    double qw = normal(rng), qx = normal(rng), qy = normal(rng), qz = normal(rng);
    s.rotation = Rotation::from_quaternion(qw, qx, qy, qz);
    const int half = int(std::ceil(s.r)) + cfg.radius + 4;
    Volume vol = rasterize_droplet(s, {2 * half + 1, 2 * half + 1, 2 * half + 1});
    auto contacts = find_contact_voxels(vol, {{0, 0, 0}, {vol.dims().nx, vol.dims().ny, vol.dims().nz}});
    if (contacts.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, contacts.size() - 1);
    extract_cube_into(vol, contacts[pick(rng)], cfg.radius, BinarizeRule::canonical(), out);
    target = angle_flat(s.h, s.r) / 180.0;
    spec = s;
    return;
  }
  fail(ErrorKind::data, "no contact voxel found after " + std::to_string(cfg.max_retries) + " droplet draws");
}

/// Flat-surface training set; sample i depends only on (seed, i).
inline Dataset generate_flat_dataset(const FlatDatasetConfig& cfg) {
  require(cfg.count >= 1, "dataset needs at least one sample");
  require(cfg.radius >= 2, "sub-sample radius must be at least 2");
  require(cfg.theta_min >= 0 && cfg.theta_max <= 180 && cfg.theta_min < cfg.theta_max, "invalid angle range");
  Dataset ds;
  ds.radius = cfg.radius;
  ds.side = 2 * cfg.radius + 1;
  ds.inputs.resize(cfg.count * ds.input_size());
  ds.targets.resize(cfg.count);
  ds.specs.resize(cfg.count);
  parallel_for(cfg.count, cfg.workers, [&](std::size_t i) {
    std::mt19937_64 rng(derive_seed(cfg.seed, i));
    generate_flat_sample(cfg, rng, ds.inputs.data() + i * ds.input_size(), ds.targets[i], ds.specs[i]);
  });
  return ds;
}

// Dataset file: text header lines, "end_header\n", then per-sample records of
// side^3 input bytes followed by the target as a little-endian float64.

inline void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  static_assert(std::endian::native == std::endian::little, "dataset files are little-endian");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::data, "cannot write " + path.string());
  out << "deepangle-dataset 1\ncount " << ds.size() << "\nradius " << ds.radius << "\nside " << ds.side
      << "\nend_header\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out.write(reinterpret_cast<const char*>(ds.input(i).data()), std::streamsize(ds.input_size()));
    out.write(reinterpret_cast<const char*>(&ds.targets[i]), sizeof(double));
  }
  if (!out) fail(ErrorKind::data, "write failed: " + path.string());
}

inline Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::data, "cannot open dataset " + path.string());
  std::string line, key;
  std::size_t count = 0;
  Dataset ds;
  if (!std::getline(in, line) || line != "deepangle-dataset 1") fail(ErrorKind::data, "not a dataset file: " + path.string());
  while (std::getline(in, line) && line != "end_header") {
    std::istringstream ls(line);
    ls >> key;
    if (key == "count") ls >> count;
    else if (key == "radius") ls >> ds.radius;
    else if (key == "side") ls >> ds.side;
  }
  if (line != "end_header" || ds.side != 2 * ds.radius + 1 || ds.radius < 2)
    fail(ErrorKind::data, "malformed dataset header in " + path.string());
  ds.inputs.resize(count * ds.input_size());
  ds.targets.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    in.read(reinterpret_cast<char*>(ds.inputs.data() + i * ds.input_size()), std::streamsize(ds.input_size()));
    in.read(reinterpret_cast<char*>(&ds.targets[i]), sizeof(double));
    if (!in) fail(ErrorKind::data, "dataset truncated at record " + std::to_string(i));
  }
  return ds;
}

struct Split {
  std::vector<std::size_t> train, val, test;
};

/// Seeded shuffle partitioned by the given fractions (rounded; test takes the remainder).
inline Split split_dataset(std::size_t n, double f_train = 0.8, double f_val = 0.1, double f_test = 0.1,
                           std::uint64_t seed = 1) {
  if (n == 0) fail(ErrorKind::data, "cannot split an empty dataset");
  require(f_train >= 0 && f_val >= 0 && f_test >= 0 && std::abs(f_train + f_val + f_test - 1.0) < 1e-9,
          "split fractions must sum to 1");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(derive_seed(seed, 0x5911));
  std::shuffle(idx.begin(), idx.end(), rng);
  std::size_t n_train = std::size_t(std::llround(f_train * double(n)));
  std::size_t n_val = std::min(n - n_train, std::size_t(std::llround(f_val * double(n))));
  Split s;
  s.train.assign(idx.begin(), idx.begin() + std::ptrdiff_t(n_train));
  s.val.assign(idx.begin() + std::ptrdiff_t(n_train), idx.begin() + std::ptrdiff_t(n_train + n_val));
  s.test.assign(idx.begin() + std::ptrdiff_t(n_train + n_val), idx.end());
  return s;
}

inline Dataset subset(const Dataset& ds, const std::vector<std::size_t>& idx) {
  Dataset out;
  out.radius = ds.radius;
  out.side = ds.side;
  out.inputs.reserve(idx.size() * ds.input_size());
  for (auto i : idx) {
    auto in = ds.input(i);
    out.inputs.insert(out.inputs.end(), in.begin(), in.end());
    out.targets.push_back(ds.targets[i]);
    if (!ds.specs.empty()) out.specs.push_back(ds.specs[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Curved benchmark

/// Golden-spiral (Fibonacci) unit vectors.
inline std::vector<std::array<double, 3>> golden_spiral(int n) {
  std::vector<std::array<double, 3>> v;
  const double golden_angle = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    double z = 1.0 - (2.0 * i + 1.0) / n;
    double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    double phi = golden_angle * i;
    v.push_back({rho * std::cos(phi), rho * std::sin(phi), z});
  }
  return v;
}

struct BenchmarkDroplet {
  int id = 0;
  std::array<double, 3> center{};  ///< droplet sphere center (voxel coordinates)
  double distance = 0;             ///< from the solid sphere center
  double true_angle = 0;
};

struct CurvedBenchmark {
  Volume volume;
  Convexity convexity = Convexity::convex;
  double solid_radius = 0, droplet_radius = 0;
  std::array<double, 3> solid_center{};
  std::vector<BenchmarkDroplet> droplets;
};

inline constexpr int benchmark_droplet_count = 24;

/// 24 droplets of radius r on a solid sphere of radius 5r. `angles` holds one
/// angle (applied to every droplet) or one per droplet. `side` = 0 picks the
/// smallest cubic domain that holds the geometry.
inline CurvedBenchmark generate_curved_benchmark(double r, const std::vector<double>& angles, Convexity convexity,
                                                 std::uint64_t seed, int side = 0) {
  require(r > 0, "droplet radius must be positive");
  require(angles.size() == 1 || angles.size() == std::size_t(benchmark_droplet_count),
          "benchmark needs 1 or 24 target angles");
  for (double a : angles) require(a >= 10 && a <= 170, "benchmark angles must lie in [10, 170] degrees");
  const double R = 5 * r;
  if (side == 0) side = 2 * int(std::ceil(R + 2 * r + 2)) + 1;
  require(side > 2 * (R + 1), "benchmark domain too small for the solid sphere");

  CurvedBenchmark b;
  b.convexity = convexity;
  b.solid_radius = R;
  b.droplet_radius = r;
  std::mt19937_64 rng(derive_seed(seed, 0xbe7c));
  std::uniform_real_distribution<double> uni(-0.5, 0.5);
  std::normal_distribution<double> normal;
  const double mid = 0.5 * (side - 1);
  b.solid_center = {mid + uni(rng), mid + uni(rng), mid + uni(rng)};
  double qw = normal(rng), qx = normal(rng), qy = normal(rng), qz = normal(rng);
  Rotation orient = Rotation::from_quaternion(qw, qx, qy, qz);
  auto dirs = golden_spiral(benchmark_droplet_count);
  for (int k = 0; k < benchmark_droplet_count; ++k) {
    double theta = angles.size() == 1 ? angles[0] : angles[std::size_t(k)];
    double d = sphere_distance(R, r, theta, convexity);
    auto u = orient.apply(dirs[std::size_t(k)][0], dirs[std::size_t(k)][1], dirs[std::size_t(k)][2]);
    BenchmarkDroplet drop{k, {}, d, theta};
    for (int a = 0; a < 3; ++a) drop.center[std::size_t(a)] = b.solid_center[std::size_t(a)] + d * u[std::size_t(a)];
    for (int a = 0; a < 3; ++a)
      if (drop.center[std::size_t(a)] - r < 0 || drop.center[std::size_t(a)] + r > side - 1)
        fail(ErrorKind::precondition, "benchmark droplet clipped by domain; increase side");
    b.droplets.push_back(drop);
  }
  for (std::size_t i = 0; i < b.droplets.size(); ++i)
    for (std::size_t j = i + 1; j < b.droplets.size(); ++j) {
      double s = 0;
      for (int a = 0; a < 3; ++a) {
        double t = b.droplets[i].center[std::size_t(a)] - b.droplets[j].center[std::size_t(a)];
        s += t * t;
      }
      if (std::sqrt(s) < 2 * r + 1) fail(ErrorKind::precondition, "benchmark droplets overlap");
    }

  Volume vol({side, side, side});
  const auto& c0 = b.solid_center;
  for (int z = 0; z < side; ++z)
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) {
        double dx = x - c0[0], dy = y - c0[1], dz = z - c0[2];
        bool inside = dx * dx + dy * dy + dz * dz <= R * R;
        bool solid = convexity == Convexity::convex ? inside : !inside;
        vol.set(x, y, z, solid ? Phase::solid : Phase::reference_fluid);
      }
  for (const auto& drop : b.droplets) {
    const auto& c = drop.center;
    for (int z = int(std::floor(c[2] - r)); z <= int(std::ceil(c[2] + r)); ++z)
      for (int y = int(std::floor(c[1] - r)); y <= int(std::ceil(c[1] + r)); ++y)
        for (int x = int(std::floor(c[0] - r)); x <= int(std::ceil(c[0] + r)); ++x) {
          if (!vol.dims().contains(x, y, z) || vol.at(x, y, z) != Phase::reference_fluid) continue;
          double dx = x - c[0], dy = y - c[1], dz = z - c[2];
          if (dx * dx + dy * dy + dz * dz <= r * r) vol.set(x, y, z, Phase::other_fluid);
        }
  }
  b.volume = std::move(vol);
  return b;
}

/// Index of the droplet whose sphere center is nearest to p.
inline int nearest_droplet(const CurvedBenchmark& b, const Index3& p) {
  int best = -1;
  double best_d = 1e300;
  for (const auto& drop : b.droplets) {
    double dx = p.x - drop.center[0], dy = p.y - drop.center[1], dz = p.z - drop.center[2];
    double d = dx * dx + dy * dy + dz * dz;
    if (d < best_d) best_d = d, best = drop.id;
  }
  return best;
}

/// Ground truth table: id, cx, cy, cz, true_angle_deg.
inline std::string benchmark_truth_table(const CurvedBenchmark& b) {
  std::ostringstream os;
  os << "id,cx,cy,cz,true_angle_deg\n";
  char buf[160];
  for (const auto& d : b.droplets) {
    std::snprintf(buf, sizeof buf, "%d,%.4f,%.4f,%.4f,%.4f\n", d.id, d.center[0], d.center[1], d.center[2],
                  d.true_angle);
    os << buf;
  }
  return os.str();
}

}  // namespace deepangle
