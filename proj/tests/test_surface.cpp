#include <sstream>

#include "doctest.h"
#include "sst/surface.hpp"

using namespace sst;
using namespace sst::surface;

namespace {

volume::SparseVolume<volume::TsdfVoxel> sampled(const volume::GridSpec& spec, int n,
                                                const std::function<double(const Vec3&)>& sdf) {
  volume::SparseVolume<volume::TsdfVoxel> v(2);
  for (int x = -n; x < n; ++x)
    for (int y = -n; y < n; ++y)
      for (int z = -n; z < n; ++z) {
        const volume::VoxelKey k{x, y, z, 2};
        v.insert_or_assign(k, {static_cast<float>(std::clamp(sdf(volume::key_center(spec, k)) / 0.12, -1.0, 1.0)),
                               1.0f});
      }
  return v;
}

Mesh square(double z, double half) {
  Mesh m;
  m.vertices = {{-half, -half, z}, {half, -half, z}, {half, half, z}, {-half, half, z}};
  m.triangles = {{0, 1, 2}, {0, 2, 3}};
  return m;
}

}  // namespace

TEST_CASE("marching cubes on a sphere") {
  const volume::GridSpec spec;
  const auto v = sampled(spec, 16, [](const Vec3& p) { return p.norm() - 0.4; });
  const Mesh m = marching_cubes(v, spec);
  REQUIRE_FALSE(m.empty());
  m.validate();
  CHECK(m.euler_characteristic() == 2);
  double err = 0;
  for (const auto& p : m.vertices) err = std::max(err, std::abs(p.norm() - 0.4));
  CHECK(err < 0.02);
  CHECK(m.area() == doctest::Approx(4 * M_PI * 0.16).epsilon(0.03));
}

TEST_CASE("marching cubes edge cases") {
  const volume::GridSpec spec;
  CHECK(marching_cubes(volume::SparseVolume<volume::TsdfVoxel>(2), spec).empty());
  const auto pos = sampled(spec, 4, [](const Vec3&) { return 0.5; });
  CHECK(marching_cubes(pos, spec).empty());
  CHECK_THROWS_AS((void)marching_cubes(volume::SparseVolume<volume::TsdfVoxel>(1), spec), std::invalid_argument);

  // A single negative voxel closes into a small octahedron when missing corners read +1.
  volume::SparseVolume<volume::TsdfVoxel> one(2);
  one.insert_or_assign({0, 0, 0, 2}, {-1.0f, 1.0f});
  const Mesh oct = marching_cubes(one, spec);
  CHECK(oct.triangles.size() == 8);
  CHECK(oct.euler_characteristic() == 2);
  MarchingCubesOptions skip;
  skip.missing = MissingCorner::kSkipCube;
  CHECK(marching_cubes(one, spec, skip).empty());
}

TEST_CASE("marching cubes on a plane is flat and skip mode keeps observed cubes") {
  const volume::GridSpec spec;
  const auto v = sampled(spec, 6, [](const Vec3& p) { return p.z() - 0.05; });
  MarchingCubesOptions skip;
  skip.missing = MissingCorner::kSkipCube;
  const Mesh m = marching_cubes(v, spec, skip);
  REQUIRE_FALSE(m.empty());
  for (const auto& p : m.vertices) CHECK(p.z() == doctest::Approx(0.05).epsilon(1e-5));
  // 11 x 11 interior cells of the 12^3 block, two triangles each.
  CHECK(m.triangles.size() == 2 * 11 * 11);
}

TEST_CASE("normals point out of a sphere") {
  const volume::GridSpec spec;
  Mesh m = marching_cubes(sampled(spec, 12, [](const Vec3& p) { return p.norm() - 0.3; }), spec);
  compute_normals(m);
  REQUIRE(m.normals.size() == m.vertices.size());
  for (std::size_t i = 0; i < m.vertices.size(); ++i) CHECK(m.normals[i].dot(m.vertices[i].normalized()) > 0.9);
}

TEST_CASE("raycast depth") {
  const auto K = geom::Intrinsics::make(50, 50, 20, 15, 40, 30);
  const DepthMap d = render_depth(square(2.0, 5.0), K, geom::Pose::identity());
  for (const double v : d.data) CHECK(v == 2.0);
  const geom::Pose behind = geom::Pose::from_translation(0, 0, 3);
  for (const double v : render_depth(square(2.0, 5.0), K, behind).data) CHECK(v == kMissingDepth);

  Mesh two = square(2.0, 5.0);
  const Mesh near = square(1.0, 0.2);
  for (const auto& p : near.vertices) two.vertices.push_back(p);
  for (const auto& t : near.triangles) two.triangles.push_back({t[0] + 4, t[1] + 4, t[2] + 4});
  const Raycaster rc(two);
  const DepthMap dd = rc.render_depth(K, geom::Pose::identity());
  CHECK(dd(20, 15) == 1.0);
  CHECK(dd(0, 0) == 2.0);
  CHECK(rc.render_depth(K, geom::Pose::identity(), 3) == dd);
}

TEST_CASE("PLY round trip") {
  Mesh m = square(1.5, 0.25);
  compute_normals(m);
  std::stringstream ss;
  write_ply(ss, m);
  const Mesh r = read_ply(ss);
  CHECK(r.triangles == m.triangles);
  REQUIRE(r.vertices.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK((r.vertices[i] - m.vertices[i]).norm() < 1e-7);
  CHECK(r.normals.size() == 4);

  // Double coordinates and a quad face: the reader fans it into two triangles.
  std::stringstream quad_ply;
  quad_ply << "ply\nformat binary_little_endian 1.0\nelement vertex 4\nproperty double x\nproperty double y\n"
              "property double z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n";
  for (const double c : {0., 0., 0., 1., 0., 0., 1., 1., 0., 0., 1., 0.})
    quad_ply.write(reinterpret_cast<const char*>(&c), sizeof c);
  const unsigned char four = 4;
  quad_ply.write(reinterpret_cast<const char*>(&four), 1);
  for (const std::int32_t i : {0, 1, 2, 3}) quad_ply.write(reinterpret_cast<const char*>(&i), sizeof i);
  const Mesh quad = read_ply(quad_ply);
  CHECK(quad.triangles.size() == 2);
  CHECK(quad.area() == doctest::Approx(1.0));
  std::stringstream ascii("ply\nformat ascii 1.0\nend_header\n");
  CHECK_THROWS((void)read_ply(ascii));
  std::stringstream bad("not a ply");
  CHECK_THROWS((void)read_ply(bad));
}
