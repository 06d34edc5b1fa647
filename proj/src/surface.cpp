#include "sst/surface.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "binio.hpp"
#include "mc_tables.hpp"
#include "sst/errors.hpp"
#include "sst/parallel.hpp"

namespace sst::surface {

namespace {

using volume::TsdfVoxel;
using volume::VoxelKey;

constexpr std::array<std::array<int, 3>, 8> kCorner{{
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
}};
constexpr std::array<std::array<int, 2>, 12> kEdge{{
    {0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6}, {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7},
}};

std::uint64_t edge_id(const VoxelKey& lower, int axis) {
  return lower.packed() | (static_cast<std::uint64_t>(axis) << 62);
}

bool degenerate(const Vec3& a, const Vec3& b, const Vec3& c) {
  return (b - a).cross(c - a).squaredNorm() <= 1e-24;
}

// Drops vertices no face references and renumbers the faces.
void compact(Mesh& mesh) {
  std::vector<std::int32_t> remap(mesh.vertices.size(), -1);
  std::vector<Vec3> kept;
  kept.reserve(mesh.vertices.size());
  for (auto& tri : mesh.triangles) {
    for (auto& idx : tri) {
      if (remap[idx] < 0) {
        remap[idx] = static_cast<std::int32_t>(kept.size());
        kept.push_back(mesh.vertices[idx]);
      }
      idx = remap[idx];
    }
  }
  mesh.vertices = std::move(kept);
}

}  // namespace

double Mesh::area() const {
  double a = 0.0;
  for (const auto& t : triangles) {
    a += 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
  }
  return a;
}

long Mesh::euler_characteristic() const {
  std::unordered_set<std::uint64_t> edges;
  for (const auto& t : triangles) {
    for (int i = 0; i < 3; ++i) {
      const auto a = static_cast<std::uint32_t>(std::min(t[i], t[(i + 1) % 3]));
      const auto b = static_cast<std::uint32_t>(std::max(t[i], t[(i + 1) % 3]));
      edges.insert((static_cast<std::uint64_t>(a) << 32) | b);
    }
  }
  return static_cast<long>(vertices.size()) - static_cast<long>(edges.size()) + static_cast<long>(triangles.size());
}

void Mesh::validate() const {
  const auto n = static_cast<std::int32_t>(vertices.size());
  if (!normals.empty() && normals.size() != vertices.size()) throw std::invalid_argument("mesh: normal count");
  for (const auto& t : triangles) {
    for (const auto i : t) {
      if (i < 0 || i >= n) throw std::invalid_argument("mesh: face index out of range");
    }
    if (degenerate(vertices[t[0]], vertices[t[1]], vertices[t[2]])) {
      throw std::invalid_argument("mesh: degenerate face");
    }
  }
}

Mesh marching_cubes(const volume::SparseVolume<TsdfVoxel>& tsdf, const volume::GridSpec& spec,
                    const MarchingCubesOptions& opts) {
  if (tsdf.level() != volume::kFinestLevel) throw std::invalid_argument("marching cubes: expects the finest level");
  Mesh mesh;
  if (tsdf.empty()) return mesh;

  const auto sample = [&](const VoxelKey& k, double& value) {
    const TsdfVoxel* v = tsdf.find(k);
    if (!v || v->weight < opts.min_weight) return false;
    value = v->tsdf;
    return true;
  };

  // Every cube with at least one allocated corner, anchored at corner 0.
  std::vector<std::uint64_t> anchors;
  anchors.reserve(tsdf.size() * 8);
  for (const auto& [k, v] : tsdf) {
    for (const auto& c : kCorner) anchors.push_back(k.offset(-c[0], -c[1], -c[2]).packed());
  }
  std::sort(anchors.begin(), anchors.end());
  anchors.erase(std::unique(anchors.begin(), anchors.end()), anchors.end());

  std::unordered_map<std::uint64_t, std::int32_t> welded;
  std::array<VoxelKey, 8> corner;
  std::array<double, 8> value;
  std::array<std::int32_t, 12> edge_vertex;

  for (const std::uint64_t packed : anchors) {
    const VoxelKey base = VoxelKey::unpack(packed);
    bool complete = true;
    int cube = 0;
    for (int i = 0; i < 8; ++i) {
      corner[i] = base.offset(kCorner[i][0], kCorner[i][1], kCorner[i][2]);
      if (!sample(corner[i], value[i])) {
        complete = false;
        value[i] = 1.0;
      }
      if (value[i] < opts.iso) cube |= 1 << i;
    }
    if (!complete && opts.missing == MissingCorner::kSkipCube) continue;
    const std::uint16_t edges = detail::kEdgeTable[cube];
    if (edges == 0) continue;

    for (int e = 0; e < 12; ++e) {
      if (!(edges & (1u << e))) continue;
      int a = kEdge[e][0];
      int b = kEdge[e][1];
      int axis = 0;
      while (kCorner[a][axis] == kCorner[b][axis]) ++axis;
      if (kCorner[a][axis] > kCorner[b][axis]) std::swap(a, b);
      const std::uint64_t id = edge_id(corner[a], axis);
      const auto [it, inserted] = welded.try_emplace(id, static_cast<std::int32_t>(mesh.vertices.size()));
      if (inserted) {
        const double t = (opts.iso - value[a]) / (value[b] - value[a]);
        const Vec3 pa = volume::key_center(spec, corner[a]);
        const Vec3 pb = volume::key_center(spec, corner[b]);
        mesh.vertices.push_back(pa + t * (pb - pa));
      }
      edge_vertex[e] = it->second;
    }

    const auto& tri = detail::kTriTable[cube];
    for (int i = 0; i < 16 && tri[i] >= 0; i += 3) {
      // The table winds clockwise seen from outside; swap to face positive values.
      const std::array<std::int32_t, 3> f{edge_vertex[tri[i]], edge_vertex[tri[i + 2]], edge_vertex[tri[i + 1]]};
      if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) continue;
      if (degenerate(mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]])) continue;
      mesh.triangles.push_back(f);
    }
  }
  compact(mesh);
  return mesh;
}

void compute_normals(Mesh& mesh) {
  mesh.normals.assign(mesh.vertices.size(), Vec3::Zero());
  for (const auto& t : mesh.triangles) {
    const Vec3 n = (mesh.vertices[t[1]] - mesh.vertices[t[0]]).cross(mesh.vertices[t[2]] - mesh.vertices[t[0]]);
    for (const auto i : t) mesh.normals[i] += n;
  }
  for (auto& n : mesh.normals) {
    const double len = n.norm();
    if (len > 0.0) n /= len;
  }
}

// ---------------------------------------------------------------------------
// BVH ray casting

struct Raycaster::Impl {
  struct Node {
    Eigen::AlignedBox3d box;
    std::int32_t left{-1};  // children are left and left + 1; leaf when -1
    std::int32_t first{0};
    std::int32_t count{0};
  };

  std::vector<Vec3> v0, e1, e2, normal;
  std::vector<std::int32_t> order;
  std::vector<Node> nodes;

  explicit Impl(const Mesh& mesh) {
    const std::size_t n = mesh.triangles.size();
    v0.resize(n);
    e1.resize(n);
    e2.resize(n);
    normal.resize(n);
    std::vector<Eigen::AlignedBox3d> boxes(n);
    std::vector<Vec3> centroid(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& t = mesh.triangles[i];
      const Vec3& a = mesh.vertices[t[0]];
      const Vec3& b = mesh.vertices[t[1]];
      const Vec3& c = mesh.vertices[t[2]];
      v0[i] = a;
      e1[i] = b - a;
      e2[i] = c - a;
      normal[i] = e1[i].cross(e2[i]);
      boxes[i] = Eigen::AlignedBox3d(a);
      boxes[i].extend(b).extend(c);
      centroid[i] = (a + b + c) / 3.0;
    }
    order.resize(n);
    std::iota(order.begin(), order.end(), 0);
    if (n == 0) return;
    nodes.reserve(2 * n);
    nodes.push_back({});
    build(0, 0, static_cast<std::int32_t>(n), boxes, centroid);
  }

  void build(std::size_t node, std::int32_t first, std::int32_t count, const std::vector<Eigen::AlignedBox3d>& boxes,
             const std::vector<Vec3>& centroid) {
    Eigen::AlignedBox3d box;
    Eigen::AlignedBox3d cbox;
    for (std::int32_t i = first; i < first + count; ++i) {
      box.extend(boxes[order[i]]);
      cbox.extend(centroid[order[i]]);
    }
    nodes[node].box = box;
    nodes[node].first = first;
    nodes[node].count = count;
    if (count <= 4) return;
    int axis = 0;
    cbox.sizes().maxCoeff(&axis);
    const std::int32_t mid = first + count / 2;
    std::nth_element(order.begin() + first, order.begin() + mid, order.begin() + first + count,
                     [&](std::int32_t a, std::int32_t b) {
                       if (centroid[a][axis] != centroid[b][axis]) return centroid[a][axis] < centroid[b][axis];
                       return a < b;
                     });
    const auto left = static_cast<std::int32_t>(nodes.size());
    nodes[node].left = left;
    nodes.push_back({});
    nodes.push_back({});
    build(left, first, mid - first, boxes, centroid);
    build(left + 1, mid, first + count - mid, boxes, centroid);
  }

  static bool slab(const Eigen::AlignedBox3d& box, const Vec3& o, const Vec3& inv, double t_max) {
    double lo = 0.0;
    double hi = t_max;
    for (int a = 0; a < 3; ++a) {
      double t0 = (box.min()[a] - o[a]) * inv[a];
      double t1 = (box.max()[a] - o[a]) * inv[a];
      if (t0 > t1) std::swap(t0, t1);
      // NaN from 0 * inf means the ray lies in the slab plane; keep it.
      if (!(t0 <= hi) && !std::isnan(t0)) return false;
      if (t0 > lo) lo = t0;
      if (t1 < hi) hi = t1;
      if (lo > hi) return false;
    }
    return true;
  }

  // Barycentric inside test, then the ray parameter from the triangle plane so
  // planar geometry returns exact depths.
  bool hit(std::int32_t tri, const Vec3& o, const Vec3& d, double& t_best) const {
    constexpr double kEps = 1e-12;
    const Vec3 p = d.cross(e2[tri]);
    const double det = e1[tri].dot(p);
    if (std::abs(det) < 1e-300) return false;
    const double inv_det = 1.0 / det;
    const Vec3 s = o - v0[tri];
    const double u = s.dot(p) * inv_det;
    if (u < -kEps || u > 1.0 + kEps) return false;
    const Vec3 q = s.cross(e1[tri]);
    const double v = d.dot(q) * inv_det;
    if (v < -kEps || u + v > 1.0 + kEps) return false;
    const double t = normal[tri].dot(v0[tri] - o) / normal[tri].dot(d);
    if (!(t > 1e-9) || t >= t_best) return false;
    t_best = t;
    return true;
  }

  double trace(const Vec3& o, const Vec3& d) const {
    double best = std::numeric_limits<double>::infinity();
    if (nodes.empty()) return best;
    const Vec3 inv = d.cwiseInverse();
    std::int32_t stack[128];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
      const Node& node = nodes[stack[--top]];
      if (!slab(node.box, o, inv, best)) continue;
      if (node.left < 0) {
        for (std::int32_t i = node.first; i < node.first + node.count; ++i) hit(order[i], o, d, best);
      } else {
        stack[top++] = node.left;
        stack[top++] = node.left + 1;
      }
    }
    return best;
  }
};

Raycaster::Raycaster(const Mesh& mesh) : impl_(std::make_unique<Impl>(mesh)) {}
Raycaster::~Raycaster() = default;
Raycaster::Raycaster(Raycaster&&) noexcept = default;
Raycaster& Raycaster::operator=(Raycaster&&) noexcept = default;

DepthMap Raycaster::render_depth(const geom::Intrinsics& K, const geom::Pose& pose, int threads) const {
  if (!K.valid()) throw std::invalid_argument("render_depth: invalid intrinsics");
  DepthMap depth(K.width, K.height, kMissingDepth);
  const Vec3 o = pose.translation;
  parallel_chunks(static_cast<std::size_t>(K.height), 8, threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t y = b; y < e; ++y) {
      for (int x = 0; x < K.width; ++x) {
        // Unit z in the camera frame, so the ray parameter is the z-depth.
        const Vec3 dc((x + 0.5 - K.cx) / K.fx, (static_cast<double>(y) + 0.5 - K.cy) / K.fy, 1.0);
        const double t = impl_->trace(o, pose.rotation * dc);
        if (std::isfinite(t)) depth(x, static_cast<int>(y)) = t;
      }
    }
  });
  return depth;
}

DepthMap render_depth(const Mesh& mesh, const geom::Intrinsics& K, const geom::Pose& pose, int threads) {
  return Raycaster(mesh).render_depth(K, pose, threads);
}

// ---------------------------------------------------------------------------
// PLY

void write_ply(std::ostream& out, const Mesh& mesh) {
  const bool with_normals = !mesh.normals.empty() && mesh.normals.size() == mesh.vertices.size();
  out << "ply\nformat binary_little_endian 1.0\n";
  out << "element vertex " << mesh.vertices.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  if (with_normals) out << "property float nx\nproperty float ny\nproperty float nz\n";
  out << "element face " << mesh.triangles.size() << "\n";
  out << "property list uchar int vertex_indices\nend_header\n";
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    for (int a = 0; a < 3; ++a) binio::put(out, static_cast<float>(mesh.vertices[i][a]));
    if (with_normals) {
      for (int a = 0; a < 3; ++a) binio::put(out, static_cast<float>(mesh.normals[i][a]));
    }
  }
  for (const auto& t : mesh.triangles) {
    binio::put<std::uint8_t>(out, 3);
    for (const auto i : t) binio::put<std::int32_t>(out, i);
  }
}

void write_ply(const std::string& path, const Mesh& mesh) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  write_ply(out, mesh);
  if (!out) throw InputError("write failed: " + path);
}

namespace {

enum class PlyType { kI8, kU8, kI16, kU16, kI32, kU32, kF32, kF64 };

PlyType parse_type(const std::string& s) {
  if (s == "char" || s == "int8") return PlyType::kI8;
  if (s == "uchar" || s == "uint8") return PlyType::kU8;
  if (s == "short" || s == "int16") return PlyType::kI16;
  if (s == "ushort" || s == "uint16") return PlyType::kU16;
  if (s == "int" || s == "int32") return PlyType::kI32;
  if (s == "uint" || s == "uint32") return PlyType::kU32;
  if (s == "float" || s == "float32") return PlyType::kF32;
  if (s == "double" || s == "float64") return PlyType::kF64;
  throw InputError("ply: unknown property type " + s);
}

double read_value(std::istream& in, PlyType t) {
  switch (t) {
    case PlyType::kI8: return binio::get<std::int8_t>(in);
    case PlyType::kU8: return binio::get<std::uint8_t>(in);
    case PlyType::kI16: return binio::get<std::int16_t>(in);
    case PlyType::kU16: return binio::get<std::uint16_t>(in);
    case PlyType::kI32: return binio::get<std::int32_t>(in);
    case PlyType::kU32: return binio::get<std::uint32_t>(in);
    case PlyType::kF32: return binio::get<float>(in);
    case PlyType::kF64: return binio::get<double>(in);
  }
  return 0.0;
}

struct PlyProperty {
  std::string name;
  PlyType type{PlyType::kF32};
  bool list{false};
  PlyType count_type{PlyType::kU8};
};

struct PlyElement {
  std::string name;
  std::size_t count{0};
  std::vector<PlyProperty> props;
};

}  // namespace

Mesh read_ply(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "ply") throw InputError("ply: missing magic");
  std::vector<PlyElement> elements;
  bool format_ok = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "end_header") break;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      format_ok = fmt == "binary_little_endian";
    } else if (word == "element") {
      PlyElement e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (word == "property") {
      if (elements.empty()) throw InputError("ply: property before element");
      PlyProperty p;
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string ct, it;
        ls >> ct >> it;
        p.list = true;
        p.count_type = parse_type(ct);
        p.type = parse_type(it);
      } else {
        p.type = parse_type(type);
      }
      ls >> p.name;
      elements.back().props.push_back(p);
    }
  }
  if (!format_ok) throw InputError("ply: only binary_little_endian is supported");

  Mesh mesh;
  for (const auto& e : elements) {
    if (e.name == "vertex") {
      mesh.vertices.resize(e.count);
      bool has_normals = false;
      for (const auto& p : e.props) has_normals = has_normals || p.name == "nx";
      if (has_normals) mesh.normals.resize(e.count, Vec3::Zero());
      for (std::size_t i = 0; i < e.count; ++i) {
        for (const auto& p : e.props) {
          if (p.list) throw InputError("ply: list property on vertex");
          const double v = read_value(in, p.type);
          if (p.name == "x") mesh.vertices[i].x() = v;
          else if (p.name == "y") mesh.vertices[i].y() = v;
          else if (p.name == "z") mesh.vertices[i].z() = v;
          else if (p.name == "nx") mesh.normals[i].x() = v;
          else if (p.name == "ny") mesh.normals[i].y() = v;
          else if (p.name == "nz") mesh.normals[i].z() = v;
        }
      }
    } else {
      for (std::size_t i = 0; i < e.count; ++i) {
        for (const auto& p : e.props) {
          if (!p.list) {
            read_value(in, p.type);
            continue;
          }
          const auto n = static_cast<std::size_t>(read_value(in, p.count_type));
          std::vector<std::int32_t> idx(n);
          for (auto& x : idx) x = static_cast<std::int32_t>(read_value(in, p.type));
          if (e.name != "face" || p.name != "vertex_indices") continue;
          for (std::size_t k = 1; k + 1 < n; ++k) mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
        }
      }
    }
  }
  const auto nv = static_cast<std::int32_t>(mesh.vertices.size());
  for (const auto& t : mesh.triangles) {
    for (const auto i : t) {
      if (i < 0 || i >= nv) throw InputError("ply: face index out of range");
    }
  }
  return mesh;
}

Mesh read_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return read_ply(in);
}

}  // namespace sst::surface
