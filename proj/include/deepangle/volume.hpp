/// @file volume.hpp
/// @brief Labeled voxel volumes: RAW+meta I/O, one-voxel dilation, spherical
///        sub-sample extraction, nearest-neighbor rotation and chunk planning.
///
/// Voxels are stored x-fastest, then y, then z. Every voxel holds one of the
/// canonical phase codes in `Phase`; external label conventions are remapped
/// on load through the meta sidecar.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "deepangle/common.hpp"

namespace deepangle {

enum class Phase : std::uint8_t { unused = 0, solid = 1, reference_fluid = 2, other_fluid = 3 };

constexpr std::uint8_t code(Phase p) noexcept { return static_cast<std::uint8_t>(p); }

inline const char* phase_name(Phase p) {
  switch (p) {
    case Phase::unused: return "unused";
    case Phase::solid: return "solid";
    case Phase::reference_fluid: return "reference_fluid";
    case Phase::other_fluid: return "other_fluid";
  }
  return "?";
}

inline Phase phase_from_name(const std::string& name) {
  if (name == "unused") return Phase::unused;
  if (name == "solid") return Phase::solid;
  if (name == "reference_fluid") return Phase::reference_fluid;
  if (name == "other_fluid") return Phase::other_fluid;
  fail(ErrorKind::data, "unknown phase name '" + name + "'");
}

struct Index3 {
  int x = 0, y = 0, z = 0;
  friend bool operator==(const Index3&, const Index3&) = default;
  friend auto operator<=>(const Index3& a, const Index3& b) {
    if (auto c = a.z <=> b.z; c != 0) return c;
    if (auto c = a.y <=> b.y; c != 0) return c;
    return a.x <=> b.x;
  }
  Index3 operator+(const Index3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Index3 operator-(const Index3& o) const { return {x - o.x, y - o.y, z - o.z}; }
};

inline double distance(const Index3& a, const Index3& b) {
  double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

struct Dims {
  int nx = 0, ny = 0, nz = 0;
  friend bool operator==(const Dims&, const Dims&) = default;
  std::size_t size() const { return std::size_t(nx) * std::size_t(ny) * std::size_t(nz); }
  bool contains(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < nx && y < ny && z < nz;
  }
  bool contains(const Index3& p) const { return contains(p.x, p.y, p.z); }
  std::size_t linear(int x, int y, int z) const {
    return (std::size_t(z) * std::size_t(ny) + std::size_t(y)) * std::size_t(nx) + std::size_t(x);
  }
  std::size_t linear(const Index3& p) const { return linear(p.x, p.y, p.z); }
  Index3 coord(std::size_t i) const {
    int x = int(i % std::size_t(nx));
    i /= std::size_t(nx);
    int y = int(i % std::size_t(ny));
    return {x, y, int(i / std::size_t(ny))};
  }
};

/// Immutable-after-construction labeled grid.
class Volume {
 public:
  Volume() = default;
  explicit Volume(Dims dims, Phase fill = Phase::unused) : dims_(dims), data_(dims.size(), code(fill)) {
    require(dims.nx > 0 && dims.ny > 0 && dims.nz > 0, "volume dimensions must be positive");
  }
  Volume(Dims dims, std::vector<std::uint8_t> labels) : dims_(dims), data_(std::move(labels)) {
    require(dims.nx > 0 && dims.ny > 0 && dims.nz > 0, "volume dimensions must be positive");
    if (data_.size() != dims.size()) fail(ErrorKind::data, "label count does not match dimensions");
    for (auto v : data_)
      if (v > 3) fail(ErrorKind::data, "label code " + std::to_string(v) + " is not canonical");
  }

  const Dims& dims() const { return dims_; }
  const std::vector<std::uint8_t>& data() const { return data_; }
  std::vector<std::uint8_t>& data() { return data_; }

  Phase at(int x, int y, int z) const { return Phase(data_[dims_.linear(x, y, z)]); }
  Phase at(const Index3& p) const { return at(p.x, p.y, p.z); }
  /// Out-of-bounds reads return `unused`.
  Phase get(int x, int y, int z) const { return dims_.contains(x, y, z) ? at(x, y, z) : Phase::unused; }
  void set(int x, int y, int z, Phase p) { data_[dims_.linear(x, y, z)] = code(p); }

  std::size_t count(Phase p) const { return std::size_t(std::count(data_.begin(), data_.end(), code(p))); }

  std::uint64_t checksum() const { return fnv1a64(data_.data(), data_.size()); }

 private:
  Dims dims_;
  std::vector<std::uint8_t> data_;
};

/// Per-voxel 0/1 mask sharing the volume layout.
struct Mask {
  Dims dims;
  std::vector<std::uint8_t> bits;
  bool at(int x, int y, int z) const { return bits[dims.linear(x, y, z)] != 0; }
  std::size_t count() const { return std::size_t(std::count(bits.begin(), bits.end(), 1)); }
};

// ---------------------------------------------------------------------------
// RAW + meta sidecar I/O

/// Parsed meta sidecar: `{"shape":[nx,ny,nz],"order":"xyz","labels":{"<byte>":"<phase>"}}`.
struct VolumeMeta {
  Dims dims;
  std::map<int, Phase> labels;
};

inline VolumeMeta parse_meta(const std::string& text) {
  VolumeMeta meta;
  try {
    auto j = nlohmann::json::parse(text);
    auto shape = j.at("shape");
    if (!shape.is_array() || shape.size() != 3) fail(ErrorKind::data, "meta 'shape' must list three integers");
    meta.dims = {shape[0].get<int>(), shape[1].get<int>(), shape[2].get<int>()};
    if (meta.dims.nx <= 0 || meta.dims.ny <= 0 || meta.dims.nz <= 0)
      fail(ErrorKind::data, "meta 'shape' entries must be positive");
    if (j.value("order", std::string("xyz")) != "xyz") fail(ErrorKind::data, "only voxel order 'xyz' is supported");
    for (auto& [key, value] : j.at("labels").items()) {
      int byte = std::stoi(key);
      if (byte < 0 || byte > 255) fail(ErrorKind::data, "label byte out of range: " + key);
      meta.labels[byte] = phase_from_name(value.get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, std::string("unreadable meta: ") + e.what());
  } catch (const std::invalid_argument&) {
    fail(ErrorKind::data, "unreadable meta: label keys must be integers");
  }
  return meta;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::data, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Volume load_volume(const std::filesystem::path& raw_path, const std::filesystem::path& meta_path) {
  VolumeMeta meta = parse_meta(read_text_file(meta_path));
  std::string raw = read_text_file(raw_path);
  if (raw.size() != meta.dims.size())
    fail(ErrorKind::data, "size mismatch: " + raw_path.string() + " has " + std::to_string(raw.size()) +
                              " bytes, meta declares " + std::to_string(meta.dims.size()));
  std::array<int, 256> lut;
  lut.fill(-1);
  for (auto [byte, phase] : meta.labels) lut[std::size_t(byte)] = code(phase);
  std::vector<std::uint8_t> labels(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    int v = lut[static_cast<unsigned char>(raw[i])];
    if (v < 0)
      fail(ErrorKind::data, "unknown label " + std::to_string(static_cast<unsigned char>(raw[i])) + " in " +
                                raw_path.string());
    labels[i] = std::uint8_t(v);
  }
  return Volume(meta.dims, std::move(labels));
}

inline std::string canonical_meta(const Dims& d) {
  nlohmann::ordered_json j;
  j["shape"] = {d.nx, d.ny, d.nz};
  j["order"] = "xyz";
  j["labels"] = {{"0", "unused"}, {"1", "solid"}, {"2", "reference_fluid"}, {"3", "other_fluid"}};
  return j.dump(2) + "\n";
}

inline void write_bytes(const std::filesystem::path& path, const void* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::data, "cannot write " + path.string());
  out.write(static_cast<const char*>(data), std::streamsize(size));
  if (!out) fail(ErrorKind::data, "write failed: " + path.string());
}

/// Writes canonical codes with an identity label mapping.
inline void save_volume(const Volume& vol, const std::filesystem::path& raw_path,
                        const std::filesystem::path& meta_path) {
  write_bytes(raw_path, vol.data().data(), vol.data().size());
  std::string meta = canonical_meta(vol.dims());
  write_bytes(meta_path, meta.data(), meta.size());
}

// ---------------------------------------------------------------------------
// Morphology

/// One-voxel dilation of `label` with the 3x3x3 structuring element, clipped at the faces.
inline Mask dilate(const Volume& vol, Phase label) {
  require(code(label) <= 3, "invalid label code");
  const Dims& d = vol.dims();
  Mask m{d, std::vector<std::uint8_t>(d.size(), 0)};
  for (std::size_t i = 0; i < d.size(); ++i) m.bits[i] = vol.data()[i] == code(label);
  // Separable max filter: x, then y, then z.
  std::vector<std::uint8_t> tmp(d.size());
  auto pass = [&](int axis) {
    const int n = axis == 0 ? d.nx : axis == 1 ? d.ny : d.nz;
    const std::size_t stride = axis == 0 ? 1 : axis == 1 ? std::size_t(d.nx) : std::size_t(d.nx) * d.ny;
    for (std::size_t i = 0; i < d.size(); ++i) {
      Index3 p = d.coord(i);
      int c = axis == 0 ? p.x : axis == 1 ? p.y : p.z;
      std::uint8_t v = m.bits[i];
      if (c > 0) v |= m.bits[i - stride];
      if (c + 1 < n) v |= m.bits[i + stride];
      tmp[i] = v;
    }
    m.bits.swap(tmp);
  };
  pass(0);
  pass(1);
  pass(2);
  return m;
}

// ---------------------------------------------------------------------------
// Spherical sub-samples

/// Maps each canonical phase code to 0 or 1.
struct BinarizeRule {
  std::array<std::uint8_t, 4> value{0, 1, 1, 0};
  /// solid and reference fluid -> 1; other fluid and unused -> 0.
  static BinarizeRule canonical() { return {}; }
  std::uint8_t operator()(Phase p) const { return value[code(p)]; }
};

struct Cube {
  int radius = 0;
  int side = 0;
  Index3 center;
  std::vector<std::uint8_t> values;  // side^3, x-fastest
};

/// Lattice offsets inside the mask of effective radius r + 0.5.
inline bool in_sphere_mask(int dx, int dy, int dz, int r) {
  double lim = r + 0.5;
  return double(dx * dx + dy * dy + dz * dz) <= lim * lim;
}

inline std::size_t sphere_mask_count(int r) {
  std::size_t n = 0;
  for (int z = -r; z <= r; ++z)
    for (int y = -r; y <= r; ++y)
      for (int x = -r; x <= r; ++x) n += in_sphere_mask(x, y, z, r);
  return n;
}

/// Writes the binarized, spherically masked cube around `center` into `out`
/// (length (2r+1)^3). Out-of-bounds voxels read as 0.
template <typename T>
void extract_cube_into(const Volume& vol, const Index3& center, int r, const BinarizeRule& rule, T* out) {
  const Dims& d = vol.dims();
  std::size_t k = 0;
  for (int dz = -r; dz <= r; ++dz)
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx, ++k) {
        int x = center.x + dx, y = center.y + dy, z = center.z + dz;
        out[k] = (in_sphere_mask(dx, dy, dz, r) && d.contains(x, y, z)) ? T(rule(vol.at(x, y, z))) : T(0);
      }
}

inline Cube extract_cube(const Volume& vol, const Index3& center, int r,
                         const BinarizeRule& rule = BinarizeRule::canonical()) {
  require(r >= 2, "sub-sample radius must be at least 2");
  Cube c{r, 2 * r + 1, center, {}};
  c.values.resize(std::size_t(c.side) * c.side * c.side);
  extract_cube_into(vol, center, r, rule, c.values.data());
  return c;
}

// ---------------------------------------------------------------------------
// Rotation

/// Row-major 3x3 rotation matrix.
struct Rotation {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  /// R = Rz(az) * Ry(ay) * Rx(ax); angles in radians.
  static Rotation from_euler(double ax, double ay, double az) {
    double cx = std::cos(ax), sx = std::sin(ax), cy = std::cos(ay), sy = std::sin(ay), cz = std::cos(az),
           sz = std::sin(az);
    return {{cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx,  //
             sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx,  //
             -sy, cy * sx, cy * cx}};
  }
  /// Rotation from a (not necessarily normalized) quaternion (w, x, y, z).
  static Rotation from_quaternion(double w, double x, double y, double z) {
    double n = std::sqrt(w * w + x * x + y * y + z * z);
    w /= n, x /= n, y /= n, z /= n;
    return {{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),  //
             2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),  //
             2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}};
  }
  std::array<double, 3> apply(double x, double y, double z) const {
    return {m[0] * x + m[1] * y + m[2] * z, m[3] * x + m[4] * y + m[5] * z, m[6] * x + m[7] * y + m[8] * z};
  }
  std::array<double, 3> apply_inverse(double x, double y, double z) const {
    return {m[0] * x + m[3] * y + m[6] * z, m[1] * x + m[4] * y + m[7] * z, m[2] * x + m[5] * y + m[8] * z};
  }
};

/// Nearest-neighbor rotation about the volume center; dims are kept and
/// sources falling outside the volume become `unused`.
inline Volume rotate_volume(const Volume& vol, const Rotation& rot) {
  const Dims& d = vol.dims();
  Volume out(d);
  const double cx = 0.5 * (d.nx - 1), cy = 0.5 * (d.ny - 1), cz = 0.5 * (d.nz - 1);
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        auto s = rot.apply_inverse(x - cx, y - cy, z - cz);
        int sx = int(std::lround(s[0] + cx)), sy = int(std::lround(s[1] + cy)), sz = int(std::lround(s[2] + cz));
        out.set(x, y, z, vol.get(sx, sy, sz));
      }
  return out;
}

inline Volume rotate_volume(const Volume& vol, double ax, double ay, double az) {
  return rotate_volume(vol, Rotation::from_euler(ax, ay, az));
}

// ---------------------------------------------------------------------------
// Chunk planning

/// Half-open axis-aligned box [lo, hi).
struct Box {
  Index3 lo, hi;
  bool contains(const Index3& p) const {
    return p.x >= lo.x && p.y >= lo.y && p.z >= lo.z && p.x < hi.x && p.y < hi.y && p.z < hi.z;
  }
  std::size_t volume() const { return std::size_t(hi.x - lo.x) * std::size_t(hi.y - lo.y) * std::size_t(hi.z - lo.z); }
};

struct Chunk {
  Box interior;
  Box context;  // interior grown by the halo, clipped to the volume
};

struct ChunkPlan {
  Dims dims;
  int halo = 0;
  std::vector<Chunk> chunks;
};

inline ChunkPlan plan_chunks(const Dims& d, int chunk_side, int halo) {
  require(halo >= 0, "halo must be non-negative");
  require(chunk_side >= 2 * halo + 1, "chunk side must be at least 2*halo+1");
  ChunkPlan plan{d, halo, {}};
  auto cuts = [&](int n) {
    std::vector<int> c;
    for (int a = 0; a < n; a += chunk_side) c.push_back(a);
    c.push_back(n);
    return c;
  };
  auto cx = cuts(d.nx), cy = cuts(d.ny), cz = cuts(d.nz);
  for (std::size_t k = 0; k + 1 < cz.size(); ++k)
    for (std::size_t j = 0; j + 1 < cy.size(); ++j)
      for (std::size_t i = 0; i + 1 < cx.size(); ++i) {
        Box in{{cx[i], cy[j], cz[k]}, {cx[i + 1], cy[j + 1], cz[k + 1]}};
        Box ctx{{std::max(0, in.lo.x - halo), std::max(0, in.lo.y - halo), std::max(0, in.lo.z - halo)},
                {std::min(d.nx, in.hi.x + halo), std::min(d.ny, in.hi.y + halo), std::min(d.nz, in.hi.z + halo)}};
        plan.chunks.push_back({in, ctx});
      }
  return plan;
}

// ---------------------------------------------------------------------------
// Three-phase contact voxels

/// Solid voxels inside `box` whose 3x3x3 neighborhood holds both a
/// reference-fluid and an other-fluid voxel, i.e. the intersection of the two
/// dilated fluids with the solid. Returned in z, y, x order.
inline std::vector<Index3> find_contact_voxels(const Volume& vol, const Box& box) {
  const Dims& d = vol.dims();
  Box reg{{std::max(0, box.lo.x - 1), std::max(0, box.lo.y - 1), std::max(0, box.lo.z - 1)},
          {std::min(d.nx, box.hi.x + 1), std::min(d.ny, box.hi.y + 1), std::min(d.nz, box.hi.z + 1)}};
  const int rx = reg.hi.x - reg.lo.x, ry = reg.hi.y - reg.lo.y, rz = reg.hi.z - reg.lo.z;
  std::vector<Index3> out;
  if (rx <= 0 || ry <= 0 || rz <= 0) return out;
  const std::size_t sy = std::size_t(rx), sz = std::size_t(rx) * std::size_t(ry);
  std::vector<std::uint8_t> a(sz * std::size_t(rz)), b(a.size());
  // phase presence bits, OR-dilated separably along x, y, z
  for (int z = 0; z < rz; ++z)
    for (int y = 0; y < ry; ++y) {
      const std::uint8_t* src = &vol.data()[d.linear(reg.lo.x, reg.lo.y + y, reg.lo.z + z)];
      std::uint8_t* dst = &a[std::size_t(z) * sz + std::size_t(y) * sy];
      for (int x = 0; x < rx; ++x) dst[x] = std::uint8_t(1u << src[x]);
    }
  for (std::size_t row = 0; row < std::size_t(ry) * std::size_t(rz); ++row) {
    const std::uint8_t* s = &a[row * sy];
    std::uint8_t* t = &b[row * sy];
    for (int x = 0; x < rx; ++x)
      t[x] = std::uint8_t(s[x] | (x > 0 ? s[x - 1] : 0) | (x + 1 < rx ? s[x + 1] : 0));
  }
  for (int z = 0; z < rz; ++z)
    for (int y = 0; y < ry; ++y) {
      std::uint8_t* t = &a[std::size_t(z) * sz + std::size_t(y) * sy];
      const std::uint8_t* s = &b[std::size_t(z) * sz + std::size_t(y) * sy];
      const std::uint8_t* lo = y > 0 ? s - sy : s;
      const std::uint8_t* hi = y + 1 < ry ? s + sy : s;
      for (int x = 0; x < rx; ++x) t[x] = std::uint8_t(s[x] | lo[x] | hi[x]);
    }
  constexpr std::uint8_t both = (1u << code(Phase::reference_fluid)) | (1u << code(Phase::other_fluid));
  for (int z = box.lo.z; z < box.hi.z; ++z) {
    const int lz = z - reg.lo.z;
    const std::uint8_t* s = &a[std::size_t(lz) * sz];
    const std::uint8_t* lo = lz > 0 ? s - sz : s;
    const std::uint8_t* hi = lz + 1 < rz ? s + sz : s;
    for (int y = box.lo.y; y < box.hi.y; ++y) {
      const std::size_t row = std::size_t(y - reg.lo.y) * sy;
      const std::uint8_t* labels = &vol.data()[d.linear(0, y, z)];
      for (int x = box.lo.x; x < box.hi.x; ++x) {
        if (labels[x] != code(Phase::solid)) continue;
        const std::size_t k = row + std::size_t(x - reg.lo.x);
        if (((s[k] | lo[k] | hi[k]) & both) == both) out.push_back({x, y, z});
      }
    }
  }
  return out;
}

}  // namespace deepangle
