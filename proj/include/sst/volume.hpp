#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "sst/geom.hpp"

namespace sst::volume {

inline constexpr int kLevels = 3;
inline constexpr int kFinestLevel = kLevels - 1;

/// World-aligned voxel grid shared by every fragment and the global model.
/// Level 0 is the coarsest; each level halves the voxel size.
struct GridSpec {
  Vec3 origin{Vec3::Zero()};
  std::array<double, kLevels> voxel_size{0.16, 0.08, 0.04};

  static GridSpec with_finest(double finest, const Vec3& origin = Vec3::Zero());
  [[nodiscard]] double size(int level) const;
  [[nodiscard]] bool valid() const noexcept;
};

struct VoxelKey {
  std::int32_t ix{0};
  std::int32_t iy{0};
  std::int32_t iz{0};
  std::int32_t level{0};

  /// (level, ix, iy, iz) packed so that integer order equals lexicographic order.
  [[nodiscard]] std::uint64_t packed() const;
  static VoxelKey unpack(std::uint64_t p);

  [[nodiscard]] VoxelKey offset(int dx, int dy, int dz) const noexcept {
    return {ix + dx, iy + dy, iz + dz, level};
  }
  [[nodiscard]] VoxelKey parent() const;
  [[nodiscard]] std::array<VoxelKey, 8> children() const;

  bool operator==(const VoxelKey&) const = default;
  bool operator<(const VoxelKey& o) const { return packed() < o.packed(); }
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const noexcept;
};

using KeyList = std::vector<VoxelKey>;

[[nodiscard]] VoxelKey world_to_key(const GridSpec& spec, int level, const Vec3& point);
[[nodiscard]] Vec3 key_center(const GridSpec& spec, const VoxelKey& key);

/// Sparse map from voxel keys of a single level to payloads.
template <class V>
class SparseVolume {
 public:
  using Map = std::unordered_map<VoxelKey, V, VoxelKeyHash>;

  explicit SparseVolume(int level = 0) : level_(level) {
    if (level < 0 || level >= kLevels) throw std::invalid_argument("volume level out of range");
  }

  [[nodiscard]] int level() const noexcept { return level_; }
  [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
  [[nodiscard]] bool empty() const noexcept { return entries_.empty(); }
  [[nodiscard]] bool contains(const VoxelKey& k) const { return entries_.count(k) != 0; }

  [[nodiscard]] const V* find(const VoxelKey& k) const {
    const auto it = entries_.find(k);
    return it == entries_.end() ? nullptr : &it->second;
  }
  [[nodiscard]] V* find(const VoxelKey& k) {
    const auto it = entries_.find(k);
    return it == entries_.end() ? nullptr : &it->second;
  }

  void insert_or_assign(const VoxelKey& k, V value) {
    check_level(k);
    entries_.insert_or_assign(k, std::move(value));
  }
  V& operator[](const VoxelKey& k) {
    check_level(k);
    return entries_[k];
  }
  void erase(const VoxelKey& k) { entries_.erase(k); }
  void clear() { entries_.clear(); }
  void reserve(std::size_t n) { entries_.reserve(n); }

  [[nodiscard]] KeyList sorted_keys() const {
    KeyList keys;
    keys.reserve(entries_.size());
    for (const auto& [k, v] : entries_) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    return keys;
  }

  [[nodiscard]] const Map& entries() const noexcept { return entries_; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  void check_level(const VoxelKey& k) const {
    if (k.level != level_) throw std::invalid_argument("voxel key level does not match volume level");
  }

  int level_;
  Map entries_;
};

/// Dense-row feature storage for one level: row i holds the feature of keys[i].
/// Keys are sorted and unique.
struct FeatureVolume {
  using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  int level{0};
  KeyList keys;
  Matrix features;

  [[nodiscard]] std::size_t size() const noexcept { return keys.size(); }
  [[nodiscard]] Eigen::Index channels() const noexcept { return features.cols(); }
  /// Row index of a key, or -1.
  [[nodiscard]] Eigen::Index find(const VoxelKey& k) const;
};

/// Normalized TSDF sample; weight is only accumulated by the classical path.
struct TsdfVoxel {
  float tsdf{1.0f};
  float weight{0.0f};
  bool operator==(const TsdfVoxel&) const = default;
};

/// Keys whose centers fall inside at least one camera frustum cut at
/// max_depth, dilated by one voxel (26-neighborhood). Sorted.
[[nodiscard]] KeyList allocate_fragment_keys(const GridSpec& spec, int level,
                                             std::span<const geom::Camera> cameras, double max_depth);

/// Children at level + 1 of every coarse key with occupancy >= theta. Sorted, unique.
[[nodiscard]] KeyList upsample_occupied(const SparseVolume<float>& coarse, double theta);

/// Keys only in local are inserted, overlapping keys take the local value.
template <class V>
void merge_local_into_global(const SparseVolume<V>& local, SparseVolume<V>& global) {
  if (local.level() != global.level()) throw std::invalid_argument("merge: level mismatch");
  for (const auto& [k, v] : local) global.insert_or_assign(k, v);
}

/// Overlapping keys resolve to combine(global_value, local_value).
template <class V, class Combine>
void merge_local_into_global(const SparseVolume<V>& local, SparseVolume<V>& global, Combine&& combine) {
  if (local.level() != global.level()) throw std::invalid_argument("merge: level mismatch");
  for (const auto& [k, v] : local) {
    if (V* existing = global.find(k)) {
      *existing = combine(static_cast<const V&>(*existing), v);
    } else {
      global.insert_or_assign(k, v);
    }
  }
}

/// Weighted running-average combine used by the classical fusion path.
[[nodiscard]] TsdfVoxel combine_weighted(const TsdfVoxel& global, const TsdfVoxel& local);

// SSTV dump: "SSTV", u32 version, u32 level, f64 voxel_size, f64 origin[3],
// u64 record count, then records of (i32 ix, i32 iy, i32 iz, f32 tsdf) in key order.
inline constexpr std::uint32_t kSstvVersion = 1;

void write_sstv(std::ostream& out, const GridSpec& spec, const SparseVolume<TsdfVoxel>& vol);
void write_sstv(const std::string& path, const GridSpec& spec, const SparseVolume<TsdfVoxel>& vol);

struct SstvFile {
  int level{0};
  double voxel_size{0.0};
  Vec3 origin{Vec3::Zero()};
  SparseVolume<TsdfVoxel> volume;
};
[[nodiscard]] SstvFile read_sstv(std::istream& in);
[[nodiscard]] SstvFile read_sstv(const std::string& path);

}  // namespace sst::volume
