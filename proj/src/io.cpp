#include "sst/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "sst/errors.hpp"

namespace fs = std::filesystem;

namespace sst::io {

namespace {

std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw InputError("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw InputError("cannot write " + path);
  return out;
}

// Next header token of a PNM file, skipping '#' comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(c);
  }
  if (tok.empty()) throw InputError("pgm: truncated header");
  return tok;
}

struct PgmRaw {
  int width{0};
  int height{0};
  int maxval{0};
  std::vector<int> values;
};

PgmRaw read_pgm_raw(const std::string& path) {
  std::ifstream in = open_in(path, true);
  if (pnm_token(in) != "P5") throw InputError(path + ": not a binary PGM");
  PgmRaw raw;
  try {
    raw.width = std::stoi(pnm_token(in));
    raw.height = std::stoi(pnm_token(in));
    raw.maxval = std::stoi(pnm_token(in));
  } catch (const std::logic_error&) {
    throw InputError(path + ": malformed PGM header");
  }
  if (raw.width <= 0 || raw.height <= 0 || raw.maxval <= 0 || raw.maxval > 65535) {
    throw InputError(path + ": unsupported PGM dimensions");
  }
  const std::size_t n = static_cast<std::size_t>(raw.width) * raw.height;
  const std::size_t bytes = raw.maxval > 255 ? 2 : 1;
  std::vector<unsigned char> buf(n * bytes);
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
    throw InputError(path + ": truncated PGM data");
  }
  raw.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    raw.values[i] = bytes == 2 ? (buf[2 * i] << 8) | buf[2 * i + 1] : buf[i];
  }
  return raw;
}

void write_pgm_raw(const std::string& path, int width, int height, int maxval, const std::vector<int>& values) {
  std::ofstream out = open_out(path, true);
  out << "P5\n" << width << " " << height << "\n" << maxval << "\n";
  for (const int v : values) {
    if (maxval > 255) out.put(static_cast<char>((v >> 8) & 0xff));
    out.put(static_cast<char>(v & 0xff));
  }
  if (!out) throw InputError("write failed: " + path);
}

}  // namespace

geom::Intrinsics read_intrinsics(const std::string& path) {
  std::ifstream in = open_in(path);
  double fx, fy, cx, cy;
  int w, h;
  if (!(in >> fx >> fy >> cx >> cy >> w >> h)) throw InputError(path + ": expected 'fx fy cx cy width height'");
  try {
    return geom::Intrinsics::make(fx, fy, cx, cy, w, h);
  } catch (const std::invalid_argument& e) {
    throw InputError(path + ": " + e.what());
  }
}

void write_intrinsics(const std::string& path, const geom::Intrinsics& K) {
  std::ofstream out = open_out(path);
  out << std::setprecision(17) << K.fx << " " << K.fy << " " << K.cx << " " << K.cy << " " << K.width << " "
      << K.height << "\n";
}

std::vector<geom::Pose> read_poses(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<geom::Pose> poses;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[line.find_first_not_of(" \t")] == '#') continue;
    std::istringstream ls(line);
    double v[12];
    for (double& x : v) {
      if (!(ls >> x)) throw InputError(path + ":" + std::to_string(line_no) + ": expected 12 numbers");
    }
    geom::Pose p;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) p.rotation(r, c) = v[r * 4 + c];
      p.translation[r] = v[r * 4 + 3];
    }
    if (!p.valid(1e-6)) throw InputError(path + ":" + std::to_string(line_no) + ": rotation is not orthonormal");
    poses.push_back(p);
  }
  return poses;
}

void write_poses(const std::string& path, const std::vector<geom::Pose>& poses) {
  std::ofstream out = open_out(path);
  out << std::setprecision(17);
  for (const auto& p : poses) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) out << p.rotation(r, c) << " ";
      out << p.translation[r] << (r == 2 ? "\n" : " ");
    }
  }
}

Image<float> read_pgm(const std::string& path) {
  const PgmRaw raw = read_pgm_raw(path);
  Image<float> img(raw.width, raw.height);
  for (std::size_t i = 0; i < raw.values.size(); ++i) {
    img.data[i] = static_cast<float>(raw.values[i]) / static_cast<float>(raw.maxval);
  }
  return img;
}

void write_pgm(const std::string& path, const Image<float>& image) {
  std::vector<int> values(image.data.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = static_cast<int>(std::lround(std::clamp(image.data[i], 0.0f, 1.0f) * 255.0f));
  }
  write_pgm_raw(path, image.width, image.height, 255, values);
}

DepthMap read_depth_pgm(const std::string& path) {
  const PgmRaw raw = read_pgm_raw(path);
  DepthMap d(raw.width, raw.height, kMissingDepth);
  for (std::size_t i = 0; i < raw.values.size(); ++i) {
    if (raw.values[i] > 0) d.data[i] = raw.values[i] / 1000.0;
  }
  return d;
}

void write_depth_pgm(const std::string& path, const DepthMap& depth) {
  std::vector<int> values(depth.data.size(), 0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (has_depth(depth.data[i])) values[i] = static_cast<int>(std::min(65535L, std::lround(depth.data[i] * 1000.0)));
  }
  write_pgm_raw(path, depth.width, depth.height, 65535, values);
}

std::string frame_name(int index, const char* extension) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d.%s", index, extension);
  return buf;
}

Dataset make_synthetic_dataset(const synth::Scene& scene, const SyntheticOptions& opts) {
  Dataset ds;
  ds.K = opts.K;
  ds.scene = scene;
  const synth::Trajectory traj =
      synth::make_trajectory(scene, opts.n_frames, opts.trajectory, opts.seed, opts.trajectory_options);
  for (std::size_t i = 0; i < traj.poses.size(); ++i) {
    Frame f;
    f.pose = traj.poses[i];
    const synth::RaycastResult hit = synth::raycast(scene, ds.K, f.pose, opts.threads);
    f.depth = hit.depth;
    f.image = synth::render_image(hit, ds.K, f.pose);
    priors::SimulationOptions sim = opts.prior;
    sim.seed = opts.prior.seed + 7919 * static_cast<std::uint64_t>(i) + opts.seed;
    std::tie(f.sparse_depth, f.error) = priors::simulate_slam_priors(f.depth, sim);
    ds.frames.push_back(std::move(f));
  }
  return ds;
}

Dataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw InputError("dataset directory not found: " + dir);
  Dataset ds;
  ds.K = read_intrinsics((root / "intrinsics.txt").string());
  const std::vector<geom::Pose> poses = read_poses((root / "poses.txt").string());
  const fs::path frames = root / "frames";
  if (!fs::is_directory(frames)) throw InputError("missing frames/ directory in " + dir);
  std::size_t frame_files = 0;
  for (const auto& entry : fs::directory_iterator(frames)) {
    if (entry.path().extension() == ".pgm") ++frame_files;
  }
  if (frame_files != poses.size()) {
    throw InputError("pose/frame count mismatch: " + std::to_string(poses.size()) + " poses, " +
                     std::to_string(frame_files) + " frames");
  }
  const bool has_depth_dir = fs::is_directory(root / "depth");
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const int idx = static_cast<int>(i);
    try {
      Frame f;
      f.pose = poses[i];
      f.image = read_pgm((frames / frame_name(idx, "pgm")).string());
      std::tie(f.sparse_depth, f.error) = priors::read_prior_file((root / "priors" / frame_name(idx, "txt")).string());
      if (has_depth_dir) f.depth = read_depth_pgm((root / "depth" / frame_name(idx, "pgm")).string());
      if (f.image.width != ds.K.width || f.image.height != ds.K.height || f.sparse_depth.width != ds.K.width ||
          f.sparse_depth.height != ds.K.height ||
          (has_depth_dir && (f.depth.width != ds.K.width || f.depth.height != ds.K.height))) {
        throw InputError("image size does not match intrinsics");
      }
      ds.frames.push_back(std::move(f));
    } catch (const std::exception& e) {
      throw InputError("frame " + std::to_string(idx) + ": " + e.what());
    }
  }
  if (fs::exists(root / "scene.json")) ds.scene = synth::load_scene((root / "scene.json").string());
  return ds;
}

void save_dataset(const std::string& dir, const Dataset& ds) {
  const fs::path root(dir);
  fs::create_directories(root / "frames");
  fs::create_directories(root / "priors");
  const bool with_depth = std::any_of(ds.frames.begin(), ds.frames.end(), [](const Frame& f) { return f.depth.width > 0; });
  if (with_depth) fs::create_directories(root / "depth");
  write_intrinsics((root / "intrinsics.txt").string(), ds.K);
  std::vector<geom::Pose> poses;
  for (std::size_t i = 0; i < ds.frames.size(); ++i) {
    const Frame& f = ds.frames[i];
    const int idx = static_cast<int>(i);
    poses.push_back(f.pose);
    write_pgm((root / "frames" / frame_name(idx, "pgm")).string(), f.image);
    priors::write_prior_file((root / "priors" / frame_name(idx, "txt")).string(), f.sparse_depth, f.error);
    if (with_depth) write_depth_pgm((root / "depth" / frame_name(idx, "pgm")).string(), f.depth);
  }
  write_poses((root / "poses.txt").string(), poses);
  if (ds.scene) {
    std::ofstream out = open_out((root / "scene.json").string());
    out << synth::scene_to_json(*ds.scene).dump(2) << "\n";
  }
}

}  // namespace sst::io
