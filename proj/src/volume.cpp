#include "sst/volume.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "binio.hpp"
#include "sst/errors.hpp"

namespace sst::volume {

namespace {

constexpr int kCoordBits = 20;
constexpr std::int64_t kCoordBias = std::int64_t{1} << (kCoordBits - 1);
constexpr std::uint64_t kCoordMask = (std::uint64_t{1} << kCoordBits) - 1;

std::uint64_t pack_coord(std::int32_t c) {
  const std::int64_t biased = static_cast<std::int64_t>(c) + kCoordBias;
  if (biased < 0 || biased > static_cast<std::int64_t>(kCoordMask)) {
    throw std::out_of_range("voxel coordinate outside the packable range");
  }
  return static_cast<std::uint64_t>(biased);
}

std::int32_t unpack_coord(std::uint64_t bits) {
  return static_cast<std::int32_t>(static_cast<std::int64_t>(bits & kCoordMask) - kCoordBias);
}

// Floor division for possibly negative numerators.
std::int32_t floor_div2(std::int32_t a) { return a >= 0 ? a / 2 : -((-a + 1) / 2); }

}  // namespace

GridSpec GridSpec::with_finest(double finest, const Vec3& origin) {
  GridSpec spec;
  spec.origin = origin;
  for (int l = kFinestLevel; l >= 0; --l) {
    spec.voxel_size[l] = finest * static_cast<double>(1 << (kFinestLevel - l));
  }
  if (!spec.valid()) throw std::invalid_argument("voxel size must be positive");
  return spec;
}

double GridSpec::size(int level) const {
  if (level < 0 || level >= kLevels) throw std::invalid_argument("grid level out of range");
  return voxel_size[level];
}

bool GridSpec::valid() const noexcept {
  if (!origin.allFinite()) return false;
  for (int l = 0; l < kLevels; ++l) {
    if (!(voxel_size[l] > 0.0)) return false;
    if (l + 1 < kLevels && std::abs(voxel_size[l] - 2.0 * voxel_size[l + 1]) > 1e-12 * voxel_size[l]) {
      return false;
    }
  }
  return true;
}

std::uint64_t VoxelKey::packed() const {
  if (level < 0 || level >= 16) throw std::out_of_range("voxel level outside the packable range");
  return (static_cast<std::uint64_t>(level) << (3 * kCoordBits)) | (pack_coord(ix) << (2 * kCoordBits)) |
         (pack_coord(iy) << kCoordBits) | pack_coord(iz);
}

VoxelKey VoxelKey::unpack(std::uint64_t p) {
  return {unpack_coord(p >> (2 * kCoordBits)), unpack_coord(p >> kCoordBits), unpack_coord(p),
          static_cast<std::int32_t>(p >> (3 * kCoordBits))};
}

VoxelKey VoxelKey::parent() const {
  if (level == 0) throw std::invalid_argument("coarsest level has no parent");
  return {floor_div2(ix), floor_div2(iy), floor_div2(iz), level - 1};
}

std::array<VoxelKey, 8> VoxelKey::children() const {
  if (level >= kFinestLevel) throw std::invalid_argument("finest level has no children");
  std::array<VoxelKey, 8> out;
  int n = 0;
  for (int dx = 0; dx < 2; ++dx)
    for (int dy = 0; dy < 2; ++dy)
      for (int dz = 0; dz < 2; ++dz) out[n++] = {2 * ix + dx, 2 * iy + dy, 2 * iz + dz, level + 1};
  return out;
}

std::size_t VoxelKeyHash::operator()(const VoxelKey& k) const noexcept {
  // splitmix64 finalizer over the raw fields; no range checks on the hot path.
  std::uint64_t x = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.ix)) * 0x9E3779B97F4A7C15ULL) ^
                    (static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.iy)) << 21) ^
                    (static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.iz)) << 42) ^
                    (static_cast<std::uint64_t>(k.level) << 62);
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return static_cast<std::size_t>(x);
}

VoxelKey world_to_key(const GridSpec& spec, int level, const Vec3& point) {
  const double vs = spec.size(level);
  const Vec3 rel = (point - spec.origin) / vs;
  return {static_cast<std::int32_t>(std::floor(rel.x())), static_cast<std::int32_t>(std::floor(rel.y())),
          static_cast<std::int32_t>(std::floor(rel.z())), level};
}

Vec3 key_center(const GridSpec& spec, const VoxelKey& key) {
  const double vs = spec.size(key.level);
  return spec.origin + vs * Vec3(key.ix + 0.5, key.iy + 0.5, key.iz + 0.5);
}

KeyList allocate_fragment_keys(const GridSpec& spec, int level, std::span<const geom::Camera> cameras,
                               double max_depth) {
  if (cameras.empty()) throw std::invalid_argument("allocate_fragment_keys: no cameras");
  if (!(max_depth > 0.0)) return {};
  const double vs = spec.size(level);

  struct Box {
    Eigen::Vector3i lo, hi;
  };
  std::vector<Box> boxes;
  Eigen::Vector3i lo = Eigen::Vector3i::Constant(std::numeric_limits<int>::max());
  Eigen::Vector3i hi = Eigen::Vector3i::Constant(std::numeric_limits<int>::min());
  for (const auto& cam : cameras) {
    Eigen::Vector3d bmin = cam.pose.center(), bmax = cam.pose.center();
    for (const double u : {0.0, static_cast<double>(cam.K.width)}) {
      for (const double v : {0.0, static_cast<double>(cam.K.height)}) {
        const Vec3 p = geom::backproject(cam.K, cam.pose, {u, v}, max_depth);
        bmin = bmin.cwiseMin(p);
        bmax = bmax.cwiseMax(p);
      }
    }
    Box b;
    for (int a = 0; a < 3; ++a) {
      b.lo[a] = static_cast<int>(std::floor((bmin[a] - spec.origin[a]) / vs)) - 1;
      b.hi[a] = static_cast<int>(std::floor((bmax[a] - spec.origin[a]) / vs)) + 1;
    }
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
    boxes.push_back(b);
  }
  // Dense occupancy bitmap over the union box, one cell of padding for dilation.
  lo.array() -= 1;
  hi.array() += 1;
  const Eigen::Vector3i dims = hi - lo + Eigen::Vector3i::Ones();
  const std::size_t cells = static_cast<std::size_t>(dims.x()) * dims.y() * dims.z();
  if (cells > (std::size_t{1} << 31)) throw std::invalid_argument("fragment allocation box too large");
  const auto idx = [&](int x, int y, int z) {
    return (static_cast<std::size_t>(x - lo.x()) * dims.y() + (y - lo.y())) * dims.z() + (z - lo.z());
  };
  std::vector<std::uint8_t> inside(cells, 0);
  for (std::size_t c = 0; c < cameras.size(); ++c) {
    const auto& cam = cameras[c];
    const Box& b = boxes[c];
    for (int x = b.lo.x(); x <= b.hi.x(); ++x)
      for (int y = b.lo.y(); y <= b.hi.y(); ++y)
        for (int z = b.lo.z(); z <= b.hi.z(); ++z) {
          std::uint8_t& cell = inside[idx(x, y, z)];
          if (cell) continue;
          const Vec3 center = spec.origin + vs * Vec3(x + 0.5, y + 0.5, z + 0.5);
          const auto proj = geom::project(cam.K, cam.pose, center);
          if (proj && proj->depth <= max_depth) cell = 1;
        }
  }
  // Separable 3x3x3 dilation.
  std::vector<std::uint8_t> tmp(cells, 0);
  const int strides[3] = {dims.y() * dims.z(), dims.z(), 1};
  const int extent[3] = {dims.x(), dims.y(), dims.z()};
  std::vector<std::uint8_t>* src = &inside;
  std::vector<std::uint8_t>* dst = &tmp;
  for (int axis = 0; axis < 3; ++axis) {
    std::fill(dst->begin(), dst->end(), 0);
    for (int x = 0; x < dims.x(); ++x)
      for (int y = 0; y < dims.y(); ++y)
        for (int z = 0; z < dims.z(); ++z) {
          const int coord[3] = {x, y, z};
          const std::size_t i = (static_cast<std::size_t>(x) * dims.y() + y) * dims.z() + z;
          std::uint8_t v = (*src)[i];
          if (coord[axis] > 0) v |= (*src)[i - strides[axis]];
          if (coord[axis] + 1 < extent[axis]) v |= (*src)[i + strides[axis]];
          (*dst)[i] = v;
        }
    std::swap(src, dst);
  }
  KeyList keys;
  for (int x = 0; x < dims.x(); ++x)
    for (int y = 0; y < dims.y(); ++y)
      for (int z = 0; z < dims.z(); ++z) {
        if ((*src)[(static_cast<std::size_t>(x) * dims.y() + y) * dims.z() + z]) {
          keys.push_back({x + lo.x(), y + lo.y(), z + lo.z(), level});
        }
      }
  // Loop order (x, y, z) already matches packed-key order.
  return keys;
}

KeyList upsample_occupied(const SparseVolume<float>& coarse, double theta) {
  if (coarse.level() >= kFinestLevel) throw std::invalid_argument("upsample_occupied: already at finest level");
  KeyList fine;
  for (const auto& [k, occ] : coarse) {
    if (occ >= theta) {
      for (const auto& c : k.children()) fine.push_back(c);
    }
  }
  std::sort(fine.begin(), fine.end());
  fine.erase(std::unique(fine.begin(), fine.end()), fine.end());
  return fine;
}

Eigen::Index FeatureVolume::find(const VoxelKey& k) const {
  const auto it = std::lower_bound(keys.begin(), keys.end(), k);
  if (it == keys.end() || !(*it == k)) return -1;
  return static_cast<Eigen::Index>(it - keys.begin());
}

TsdfVoxel combine_weighted(const TsdfVoxel& global, const TsdfVoxel& local) {
  const float w = global.weight + local.weight;
  if (w <= 0.0f) return local;
  return {(global.weight * global.tsdf + local.weight * local.tsdf) / w, w};
}

void write_sstv(std::ostream& out, const GridSpec& spec, const SparseVolume<TsdfVoxel>& vol) {
  binio::put_magic(out, "SSTV");
  binio::put<std::uint32_t>(out, kSstvVersion);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(vol.level()));
  binio::put<double>(out, spec.size(vol.level()));
  for (int a = 0; a < 3; ++a) binio::put<double>(out, spec.origin[a]);
  binio::put<std::uint64_t>(out, vol.size());
  for (const auto& k : vol.sorted_keys()) {
    binio::put<std::int32_t>(out, k.ix);
    binio::put<std::int32_t>(out, k.iy);
    binio::put<std::int32_t>(out, k.iz);
    binio::put<float>(out, vol.find(k)->tsdf);
  }
}

void write_sstv(const std::string& path, const GridSpec& spec, const SparseVolume<TsdfVoxel>& vol) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  write_sstv(out, spec, vol);
}

SstvFile read_sstv(std::istream& in) {
  binio::expect_magic(in, "SSTV");
  const auto version = binio::get<std::uint32_t>(in);
  if (version != kSstvVersion) throw InputError("unsupported SSTV version");
  const auto level = binio::get<std::uint32_t>(in);
  if (level >= static_cast<std::uint32_t>(kLevels)) throw InputError("SSTV level out of range");
  SstvFile f{static_cast<int>(level), 0.0, Vec3::Zero(), SparseVolume<TsdfVoxel>(static_cast<int>(level))};
  f.voxel_size = binio::get<double>(in);
  for (int a = 0; a < 3; ++a) f.origin[a] = binio::get<double>(in);
  const auto count = binio::get<std::uint64_t>(in);
  f.volume.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    VoxelKey k;
    k.ix = binio::get<std::int32_t>(in);
    k.iy = binio::get<std::int32_t>(in);
    k.iz = binio::get<std::int32_t>(in);
    k.level = f.level;
    const float t = binio::get<float>(in);
    f.volume.insert_or_assign(k, TsdfVoxel{t, 0.0f});
  }
  return f;
}

SstvFile read_sstv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return read_sstv(in);
}

}  // namespace sst::volume
