#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "sst/geom.hpp"
#include "sst/image.hpp"
#include "sst/volume.hpp"

namespace sst::surface {

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::int32_t, 3>> triangles;
  std::vector<Vec3> normals;  ///< empty, or one per vertex

  [[nodiscard]] bool empty() const noexcept { return triangles.empty(); }
  [[nodiscard]] double area() const;
  /// V - E + F over the welded mesh.
  [[nodiscard]] long euler_characteristic() const;
  /// Throws std::invalid_argument on out-of-range indices or degenerate faces.
  void validate() const;
};

enum class MissingCorner {
  kOutside,  ///< read as +1 (unobserved / free)
  kSkipCube, ///< cubes touching an unallocated corner emit nothing
};

struct MarchingCubesOptions {
  double iso{0.0};
  MissingCorner missing{MissingCorner::kOutside};
  /// Voxels with weight below this are treated as missing; 0 keeps every voxel.
  float min_weight{0.0f};
};

/// Zero-isosurface of a finest-level TSDF volume. Vertices are welded per
/// lattice edge; degenerate faces are dropped.
[[nodiscard]] Mesh marching_cubes(const volume::SparseVolume<volume::TsdfVoxel>& tsdf, const volume::GridSpec& spec,
                                  const MarchingCubesOptions& opts = {});

/// Area-weighted vertex normals.
void compute_normals(Mesh& mesh);

/// Ray caster over a triangle BVH, built once per mesh.
class Raycaster {
 public:
  explicit Raycaster(const Mesh& mesh);
  ~Raycaster();
  Raycaster(Raycaster&&) noexcept;
  Raycaster& operator=(Raycaster&&) noexcept;

  /// Z-depth of the nearest hit through every pixel center; kMissingDepth on miss.
  [[nodiscard]] DepthMap render_depth(const geom::Intrinsics& K, const geom::Pose& pose, int threads = 1) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

[[nodiscard]] DepthMap render_depth(const Mesh& mesh, const geom::Intrinsics& K, const geom::Pose& pose,
                                    int threads = 1);

/// Binary little-endian PLY: float x y z, uchar-counted int face lists.
void write_ply(std::ostream& out, const Mesh& mesh);
void write_ply(const std::string& path, const Mesh& mesh);
[[nodiscard]] Mesh read_ply(std::istream& in);
[[nodiscard]] Mesh read_ply(const std::string& path);

}  // namespace sst::surface
