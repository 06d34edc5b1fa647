#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sst/geom.hpp"
#include "sst/image.hpp"
#include "sst/surface.hpp"
#include "sst/volume.hpp"
#include "json.hpp"

namespace sst::synth {

enum class PrimitiveType { kBox, kPlane, kSphere };

/// Box: `size` holds full edge lengths. Plane: a rectangle of size.x by size.y
/// in the local xy plane facing local +z, backed by a thin slab for the SDF.
/// Sphere: `radius`. `rotation` is an axis-angle vector (radians).
struct Primitive {
  PrimitiveType type{PrimitiveType::kBox};
  Vec3 center{Vec3::Zero()};
  Vec3 size{Vec3::Ones()};
  double radius{0.5};
  Vec3 rotation{Vec3::Zero()};

  [[nodiscard]] Mat3 rotation_matrix() const;
  [[nodiscard]] double sdf(const Vec3& p) const;
  /// Ray parameter of the nearest hit with t > 0 along o + t d.
  [[nodiscard]] std::optional<double> intersect(const Vec3& o, const Vec3& d) const;
  [[nodiscard]] Eigen::AlignedBox3d bounds() const;
};

inline constexpr double kPlaneSlab = 0.02;  ///< meters

struct Scene {
  std::vector<Primitive> primitives;

  [[nodiscard]] double sdf(const Vec3& p) const;
  [[nodiscard]] Eigen::AlignedBox3d bounds() const;
  /// Scales every length about the origin.
  [[nodiscard]] Scene scaled(double factor) const;
};

/// Three walls, a floor, one box and one sphere; the fourth side is open.
[[nodiscard]] Scene standard_room();

/// JSON list of primitives: {"type", "center", "size" | "radius", "rotation"}.
[[nodiscard]] Scene scene_from_json(const nlohmann::json& j);
[[nodiscard]] nlohmann::json scene_to_json(const Scene& scene);
[[nodiscard]] Scene load_scene(const std::string& path);

struct RaycastResult {
  DepthMap depth;           ///< z-depth, kMissingDepth on miss
  Image<int> primitive_id;  ///< -1 on miss
};

[[nodiscard]] RaycastResult raycast(const Scene& scene, const geom::Intrinsics& K, const geom::Pose& pose,
                                    int threads = 1);
[[nodiscard]] DepthMap raycast_depth(const Scene& scene, const geom::Intrinsics& K, const geom::Pose& pose,
                                     int threads = 1);

/// Normalized truncated SDF on the grid of `level` around the scene. Voxels
/// further than the truncation outside every solid are omitted.
[[nodiscard]] volume::SparseVolume<volume::TsdfVoxel> gt_tsdf(const Scene& scene, const volume::GridSpec& spec,
                                                              int level, double truncation = 0.12);

enum class TrajectoryMode { kOrbit, kWalk };

struct TrajectoryOptions {
  std::optional<Vec3> target;   ///< look-at point; default: scene bounds center at eye level
  std::optional<double> radius; ///< orbit radius; default: 30% of the smaller horizontal extent
  std::optional<double> height; ///< camera height; default: 55% of the scene height
  double max_step_m{0.1};
  double max_step_deg{10.0};
  double fps{30.0};
};

struct Trajectory {
  std::vector<geom::Pose> poses;
  std::vector<double> timestamps;  ///< seconds
};

[[nodiscard]] Trajectory make_trajectory(const Scene& scene, int n_frames, TrajectoryMode mode, std::uint64_t seed,
                                         const TrajectoryOptions& opts = {});

/// 160x120 pinhole used by the synthetic datasets.
[[nodiscard]] geom::Intrinsics default_intrinsics();

/// Procedural grayscale frame in [0, 1]: a pixel gradient, per-primitive
/// shading and a world-anchored pattern so views stay photo-consistent.
[[nodiscard]] Image<float> render_image(const RaycastResult& hit, const geom::Intrinsics& K,
                                        const geom::Pose& pose);

/// Analytic triangulation of the visible surfaces (plane front faces, box
/// faces, tessellated spheres).
[[nodiscard]] surface::Mesh scene_mesh(const Scene& scene, int sphere_segments = 96);

}  // namespace sst::synth
