#include "sst/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include "sst/errors.hpp"
#include "sst/parallel.hpp"

namespace sst::synth {

namespace {

constexpr double kHitEpsilon = 1e-9;

// Axis-angle matrices carry 1e-16 residue where the exact value is 0 or +-1;
// snapping keeps axis-aligned walls exactly axis-aligned.
Mat3 snap(Mat3 m) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double& x = m(i, j);
      if (std::abs(x) < 1e-12) x = 0.0;
      else if (std::abs(std::abs(x) - 1.0) < 1e-12) x = std::copysign(1.0, x);
    }
  return m;
}

double box_sdf(const Vec3& p, const Vec3& half) {
  const Vec3 q = p.cwiseAbs() - half;
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

std::optional<double> box_hit(const Vec3& o, const Vec3& d, const Vec3& half) {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (std::abs(o[a]) > half[a]) return std::nullopt;
      continue;
    }
    double t0 = (-half[a] - o[a]) / d[a];
    double t1 = (half[a] - o[a]) / d[a];
    if (t0 > t1) std::swap(t0, t1);
    lo = std::max(lo, t0);
    hi = std::min(hi, t1);
  }
  if (lo > hi || hi <= kHitEpsilon) return std::nullopt;
  return lo > kHitEpsilon ? lo : hi;
}

Vec3 json_vec3(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 3) throw InputError(std::string("scene: '") + key + "' must be a 3-vector");
  return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

double fract(double x) { return x - std::floor(x); }

}  // namespace

Mat3 Primitive::rotation_matrix() const {
  const double angle = rotation.norm();
  if (angle == 0.0) return Mat3::Identity();
  return snap(Eigen::AngleAxisd(angle, rotation / angle).toRotationMatrix());
}

double Primitive::sdf(const Vec3& p) const {
  const Vec3 local = rotation_matrix().transpose() * (p - center);
  switch (type) {
    case PrimitiveType::kSphere: return local.norm() - radius;
    case PrimitiveType::kBox: return box_sdf(local, 0.5 * size);
    case PrimitiveType::kPlane:
      return box_sdf(local - Vec3(0, 0, -0.5 * kPlaneSlab), Vec3(0.5 * size.x(), 0.5 * size.y(), 0.5 * kPlaneSlab));
  }
  return std::numeric_limits<double>::infinity();
}

std::optional<double> Primitive::intersect(const Vec3& o, const Vec3& d) const {
  if (type == PrimitiveType::kSphere) {
    const Vec3 oc = o - center;
    const double a = d.squaredNorm();
    const double b = oc.dot(d);
    const double c = oc.squaredNorm() - radius * radius;
    const double disc = b * b - a * c;
    if (disc < 0.0) return std::nullopt;
    const double s = std::sqrt(disc);
    const double t0 = (-b - s) / a;
    if (t0 > kHitEpsilon) return t0;
    const double t1 = (-b + s) / a;
    if (t1 > kHitEpsilon) return t1;
    return std::nullopt;
  }
  const Mat3 r = rotation_matrix();
  const Vec3 ol = r.transpose() * (o - center);
  const Vec3 dl = r.transpose() * d;
  if (type == PrimitiveType::kBox) return box_hit(ol, dl, 0.5 * size);
  // Plane rectangles are hit from both sides.
  if (dl.z() == 0.0) return std::nullopt;
  const double t = -ol.z() / dl.z();
  if (!(t > kHitEpsilon)) return std::nullopt;
  const Vec3 p = ol + t * dl;
  if (std::abs(p.x()) > 0.5 * size.x() || std::abs(p.y()) > 0.5 * size.y()) return std::nullopt;
  return t;
}

Eigen::AlignedBox3d Primitive::bounds() const {
  Eigen::AlignedBox3d box;
  if (type == PrimitiveType::kSphere) {
    box.extend(center - Vec3::Constant(radius));
    box.extend(center + Vec3::Constant(radius));
    return box;
  }
  const Mat3 r = rotation_matrix();
  Vec3 half = 0.5 * size;
  Vec3 offset = Vec3::Zero();
  if (type == PrimitiveType::kPlane) {
    half.z() = 0.5 * kPlaneSlab;
    offset.z() = -0.5 * kPlaneSlab;
  }
  for (int i = 0; i < 8; ++i) {
    const Vec3 c((i & 1) ? half.x() : -half.x(), (i & 2) ? half.y() : -half.y(), (i & 4) ? half.z() : -half.z());
    box.extend(center + r * (c + offset));
  }
  return box;
}

double Scene::sdf(const Vec3& p) const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& prim : primitives) best = std::min(best, prim.sdf(p));
  return best;
}

Eigen::AlignedBox3d Scene::bounds() const {
  Eigen::AlignedBox3d box;
  for (const auto& prim : primitives) box.extend(prim.bounds());
  return box;
}

Scene Scene::scaled(double factor) const {
  Scene out = *this;
  for (auto& p : out.primitives) {
    p.center *= factor;
    p.size *= factor;
    p.radius *= factor;
  }
  return out;
}

Scene standard_room() {
  constexpr double kHalf = 2.0;
  constexpr double kHeight = 2.5;
  const double quarter = std::numbers::pi / 2.0;
  Scene s;
  // floor, facing up
  s.primitives.push_back({PrimitiveType::kPlane, Vec3(0, 0, 0), Vec3(2 * kHalf, 2 * kHalf, 0), 0, Vec3::Zero()});
  // back wall at +y facing -y
  s.primitives.push_back(
      {PrimitiveType::kPlane, Vec3(0, kHalf, kHeight / 2), Vec3(2 * kHalf, kHeight, 0), 0, Vec3(quarter, 0, 0)});
  // left wall at -x facing +x
  s.primitives.push_back(
      {PrimitiveType::kPlane, Vec3(-kHalf, 0, kHeight / 2), Vec3(kHeight, 2 * kHalf, 0), 0, Vec3(0, quarter, 0)});
  // right wall at +x facing -x
  s.primitives.push_back(
      {PrimitiveType::kPlane, Vec3(kHalf, 0, kHeight / 2), Vec3(kHeight, 2 * kHalf, 0), 0, Vec3(0, -quarter, 0)});
  s.primitives.push_back({PrimitiveType::kBox, Vec3(0.6, 0.8, 0.3), Vec3(0.7, 0.5, 0.6), 0, Vec3(0, 0, 0.4)});
  s.primitives.push_back({PrimitiveType::kSphere, Vec3(-0.7, 0.6, 0.45), Vec3::Zero(), 0.35, Vec3::Zero()});
  return s;
}

Scene scene_from_json(const nlohmann::json& j) try {
  const nlohmann::json& list = j.is_object() ? j.at("primitives") : j;
  if (!list.is_array() || list.empty()) throw InputError("scene: expected a non-empty list of primitives");
  Scene s;
  for (const auto& item : list) {
    Primitive p;
    const std::string type = item.at("type").get<std::string>();
    if (type == "box") p.type = PrimitiveType::kBox;
    else if (type == "plane") p.type = PrimitiveType::kPlane;
    else if (type == "sphere") p.type = PrimitiveType::kSphere;
    else throw InputError("scene: unknown primitive type '" + type + "'");
    p.center = json_vec3(item, "center");
    if (p.type == PrimitiveType::kSphere) {
      p.radius = item.at("radius").get<double>();
      if (!(p.radius > 0.0)) throw InputError("scene: sphere radius must be positive");
    } else {
      const auto& size = item.at("size");
      if (p.type == PrimitiveType::kPlane && size.is_array() && size.size() == 2) {
        p.size = Vec3(size[0].get<double>(), size[1].get<double>(), 0.0);
      } else {
        p.size = json_vec3(item, "size");
      }
      if (!(p.size.x() > 0.0 && p.size.y() > 0.0) || (p.type == PrimitiveType::kBox && !(p.size.z() > 0.0))) {
        throw InputError("scene: primitive sizes must be positive");
      }
    }
    if (item.contains("rotation")) p.rotation = json_vec3(item, "rotation");
    s.primitives.push_back(p);
  }
  return s;
} catch (const nlohmann::json::exception& e) {
  throw InputError(std::string("scene: ") + e.what());
}

nlohmann::json scene_to_json(const Scene& scene) {
  nlohmann::json list = nlohmann::json::array();
  const auto vec = [](const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); };
  for (const auto& p : scene.primitives) {
    nlohmann::json item;
    item["center"] = vec(p.center);
    item["rotation"] = vec(p.rotation);
    switch (p.type) {
      case PrimitiveType::kBox:
        item["type"] = "box";
        item["size"] = vec(p.size);
        break;
      case PrimitiveType::kPlane:
        item["type"] = "plane";
        item["size"] = nlohmann::json::array({p.size.x(), p.size.y()});
        break;
      case PrimitiveType::kSphere:
        item["type"] = "sphere";
        item["radius"] = p.radius;
        break;
    }
    list.push_back(item);
  }
  return list;
}

Scene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open scene file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("scene file " + path + ": " + e.what());
  }
  try {
    return scene_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("scene file " + path + ": " + e.what());
  }
}

RaycastResult raycast(const Scene& scene, const geom::Intrinsics& K, const geom::Pose& pose, int threads) {
  if (!K.valid()) throw std::invalid_argument("raycast: invalid intrinsics");
  RaycastResult out{DepthMap(K.width, K.height, kMissingDepth), Image<int>(K.width, K.height, -1)};
  parallel_chunks(static_cast<std::size_t>(K.height), 8, threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t yy = b; yy < e; ++yy) {
      const int y = static_cast<int>(yy);
      for (int x = 0; x < K.width; ++x) {
        // Camera-frame direction with unit z: the ray parameter is the z-depth.
        const Vec3 dc((x + 0.5 - K.cx) / K.fx, (y + 0.5 - K.cy) / K.fy, 1.0);
        const Vec3 d = pose.rotation * dc;
        double best = std::numeric_limits<double>::infinity();
        int id = -1;
        for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
          const auto t = scene.primitives[i].intersect(pose.translation, d);
          if (t && *t < best) {
            best = *t;
            id = static_cast<int>(i);
          }
        }
        if (id >= 0) {
          out.depth(x, y) = best;
          out.primitive_id(x, y) = id;
        }
      }
    }
  });
  return out;
}

DepthMap raycast_depth(const Scene& scene, const geom::Intrinsics& K, const geom::Pose& pose, int threads) {
  return raycast(scene, K, pose, threads).depth;
}

volume::SparseVolume<volume::TsdfVoxel> gt_tsdf(const Scene& scene, const volume::GridSpec& spec, int level,
                                                double truncation) {
  if (!(truncation > 0.0)) throw std::invalid_argument("gt_tsdf: truncation must be positive");
  volume::SparseVolume<volume::TsdfVoxel> out(level);
  if (scene.primitives.empty()) return out;
  const Eigen::AlignedBox3d b = scene.bounds();
  const double pad = truncation + spec.size(level);
  const volume::VoxelKey lo = volume::world_to_key(spec, level, b.min() - Vec3::Constant(pad));
  const volume::VoxelKey hi = volume::world_to_key(spec, level, b.max() + Vec3::Constant(pad));
  const auto nx = static_cast<std::size_t>(hi.ix - lo.ix + 1);
  std::vector<std::vector<std::pair<volume::VoxelKey, float>>> slices(nx);
  parallel_chunks(nx, 1, 1, [&](std::size_t s, std::size_t e) {
    for (std::size_t i = s; i < e; ++i) {
      for (int iy = lo.iy; iy <= hi.iy; ++iy)
        for (int iz = lo.iz; iz <= hi.iz; ++iz) {
          const volume::VoxelKey k{lo.ix + static_cast<int>(i), iy, iz, level};
          const double d = scene.sdf(volume::key_center(spec, k));
          if (d >= truncation) continue;
          slices[i].emplace_back(k, static_cast<float>(std::clamp(d / truncation, -1.0, 1.0)));
        }
    }
  });
  for (const auto& slice : slices)
    for (const auto& [k, v] : slice) out.insert_or_assign(k, volume::TsdfVoxel{v, 1.0f});
  return out;
}

Trajectory make_trajectory(const Scene& scene, int n_frames, TrajectoryMode mode, std::uint64_t seed,
                           const TrajectoryOptions& opts) {
  if (n_frames < 1) throw std::invalid_argument("make_trajectory: n_frames must be >= 1");
  if (scene.primitives.empty()) throw std::invalid_argument("make_trajectory: empty scene");
  const Eigen::AlignedBox3d b = scene.bounds();
  const Vec3 extent = b.sizes();
  const Vec3 target =
      opts.target.value_or(Vec3(b.center().x(), b.center().y(), b.min().z() + 0.35 * extent.z()));
  const double radius = opts.radius.value_or(0.3 * std::min(extent.x(), extent.y()));
  const double height = opts.height.value_or(b.min().z() + 0.55 * extent.z());
  if (!(radius > 0.0)) throw std::invalid_argument("make_trajectory: radius must be positive");
  const double max_angle = opts.max_step_deg * std::numbers::pi / 180.0;

  const auto eye_at = [&](double phi) {
    return Vec3(target.x() + radius * std::cos(phi), target.y() + radius * std::sin(phi), height);
  };
  // The arc starts facing +y, i.e. looking into the scene from its -y side.
  const double phi0 = -std::numbers::pi / 2.0;

  Trajectory traj;
  if (mode == TrajectoryMode::kOrbit) {
    // Even spacing on a circle, capped so the chord and the heading change
    // both respect the step limits.
    const double chord_limit = 2.0 * std::asin(std::min(1.0, opts.max_step_m / (2.0 * radius)));
    const double step = std::min({2.0 * std::numbers::pi / n_frames, max_angle, chord_limit});
    for (int i = 0; i < n_frames; ++i) {
      const double phi = phi0 + (i - 0.5 * (n_frames - 1)) * step;
      traj.poses.push_back(geom::Pose::look_at(eye_at(phi), target));
    }
  } else {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Vec3 eye = eye_at(phi0);
    geom::Pose pose = geom::Pose::look_at(eye, target);
    traj.poses.push_back(pose);
    for (int i = 1; i < n_frames; ++i) {
      for (int attempt = 0; attempt < 64; ++attempt) {
        Vec3 dir(normal(rng), normal(rng), 0.3 * normal(rng));
        if (dir.norm() == 0.0) continue;
        const Vec3 cand = eye + dir.normalized() * (opts.max_step_m * unit(rng));
        const double horizontal = Vec2(cand.x() - target.x(), cand.y() - target.y()).norm();
        if (horizontal < 0.5 * radius || horizontal > 1.5 * radius || std::abs(cand.z() - height) > 0.3) continue;
        const geom::Pose next = geom::Pose::look_at(cand, target);
        if (geom::rotation_angle_between(pose, next) > max_angle) continue;
        eye = cand;
        pose = next;
        break;
      }
      traj.poses.push_back(pose);
    }
  }
  for (int i = 0; i < n_frames; ++i) traj.timestamps.push_back(i / opts.fps);
  return traj;
}

geom::Intrinsics default_intrinsics() { return geom::Intrinsics::make(100.0, 100.0, 80.0, 60.0, 160, 120); }

Image<float> render_image(const RaycastResult& hit, const geom::Intrinsics& K,
                          const geom::Pose& pose) {
  Image<float> img(K.width, K.height, 0.0f);
  for (int y = 0; y < K.height; ++y)
    for (int x = 0; x < K.width; ++x) {
      const double gradient = 0.1 * (x + 0.5) / K.width + 0.05 * (y + 0.5) / K.height;
      const int id = hit.primitive_id(x, y);
      if (id < 0) {
        img(x, y) = static_cast<float>(gradient);
        continue;
      }
      const Vec3 p = geom::backproject(K, pose, {x + 0.5, y + 0.5}, hit.depth(x, y));
      const double shade = fract(0.618034 * (id + 1));
      const double pattern = 0.5 + 0.5 * std::sin(9.0 * p.x()) * std::sin(9.0 * p.y() + 1.0) * std::sin(9.0 * p.z() + 2.0);
      const double v = 0.1 + gradient + 0.35 * shade + 0.4 * pattern;
      img(x, y) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  return img;
}

surface::Mesh scene_mesh(const Scene& scene, int sphere_segments) {
  surface::Mesh mesh;
  const auto add_quad = [&](const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
    const auto base = static_cast<std::int32_t>(mesh.vertices.size());
    mesh.vertices.insert(mesh.vertices.end(), {a, b, c, d});
    mesh.triangles.push_back({base, base + 1, base + 2});
    mesh.triangles.push_back({base, base + 2, base + 3});
  };
  for (const auto& p : scene.primitives) {
    const Mat3 r = p.rotation_matrix();
    const auto world = [&](double x, double y, double z) { return Vec3(p.center + r * Vec3(x, y, z)); };
    switch (p.type) {
      case PrimitiveType::kPlane: {
        const double hx = 0.5 * p.size.x(), hy = 0.5 * p.size.y();
        add_quad(world(-hx, -hy, 0), world(hx, -hy, 0), world(hx, hy, 0), world(-hx, hy, 0));
        break;
      }
      case PrimitiveType::kBox: {
        const Vec3 h = 0.5 * p.size;
        for (int axis = 0; axis < 3; ++axis)
          for (const double s : {-1.0, 1.0}) {
            const int u = (axis + 1) % 3, v = (axis + 2) % 3;
            Vec3 c[4];
            const double su[4] = {-1, 1, 1, -1}, sv[4] = {-1, -1, 1, 1};
            for (int k = 0; k < 4; ++k) {
              c[k][axis] = s * h[axis];
              c[k][u] = su[k] * h[u];
              c[k][v] = sv[k] * s * h[v];
            }
            add_quad(world(c[0].x(), c[0].y(), c[0].z()), world(c[1].x(), c[1].y(), c[1].z()),
                     world(c[2].x(), c[2].y(), c[2].z()), world(c[3].x(), c[3].y(), c[3].z()));
          }
        break;
      }
      case PrimitiveType::kSphere: {
        const int n_lon = std::max(sphere_segments, 8);
        const int n_lat = n_lon / 2;
        const auto base = static_cast<std::int32_t>(mesh.vertices.size());
        for (int i = 0; i <= n_lat; ++i) {
          const double theta = std::numbers::pi * i / n_lat;
          for (int j = 0; j < n_lon; ++j) {
            const double phi = 2.0 * std::numbers::pi * j / n_lon;
            mesh.vertices.push_back(p.center + p.radius * Vec3(std::sin(theta) * std::cos(phi),
                                                               std::sin(theta) * std::sin(phi), std::cos(theta)));
          }
        }
        const auto idx = [&](int i, int j) { return base + i * n_lon + (j % n_lon); };
        for (int i = 0; i < n_lat; ++i)
          for (int j = 0; j < n_lon; ++j) {
            if (i > 0) mesh.triangles.push_back({idx(i, j), idx(i + 1, j), idx(i, j + 1)});
            if (i + 1 < n_lat) mesh.triangles.push_back({idx(i, j + 1), idx(i + 1, j), idx(i + 1, j + 1)});
          }
        break;
      }
    }
  }
  return mesh;
}

}  // namespace sst::synth
