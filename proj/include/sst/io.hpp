#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sst/geom.hpp"
#include "sst/image.hpp"
#include "sst/priors.hpp"
#include "sst/synth.hpp"

namespace sst::io {

// Intrinsics: one line "fx fy cx cy width height".
[[nodiscard]] geom::Intrinsics read_intrinsics(const std::string& path);
void write_intrinsics(const std::string& path, const geom::Intrinsics& K);

// Poses: one world-from-camera pose per line, row-major 3x4 [R|t].
[[nodiscard]] std::vector<geom::Pose> read_poses(const std::string& path);
void write_poses(const std::string& path, const std::vector<geom::Pose>& poses);

/// 8-bit binary PGM, intensities mapped to [0, 1].
[[nodiscard]] Image<float> read_pgm(const std::string& path);
void write_pgm(const std::string& path, const Image<float>& image);

/// 16-bit binary PGM holding millimeters; 0 reads back as missing.
[[nodiscard]] DepthMap read_depth_pgm(const std::string& path);
void write_depth_pgm(const std::string& path, const DepthMap& depth);

struct Frame {
  Image<float> image;
  geom::Pose pose;
  priors::SparseDepthMap sparse_depth;
  priors::ErrorMap error;
  DepthMap depth;  ///< dense depth when available (synthetic or depth/ folder), else empty
};

struct Dataset {
  geom::Intrinsics K;
  std::vector<Frame> frames;
  std::optional<synth::Scene> scene;  ///< analytic ground truth when known
};

struct SyntheticOptions {
  int n_frames{27};
  synth::TrajectoryMode trajectory{synth::TrajectoryMode::kOrbit};
  synth::TrajectoryOptions trajectory_options;
  geom::Intrinsics K{synth::default_intrinsics()};
  priors::SimulationOptions prior;  ///< seed is offset by the frame index
  std::uint64_t seed{0};
  int threads{1};
};

[[nodiscard]] Dataset make_synthetic_dataset(const synth::Scene& scene, const SyntheticOptions& opts);

/// Directory layout: intrinsics.txt, poses.txt, frames/%06d.pgm,
/// priors/%06d.txt, optional depth/%06d.pgm and scene.json.
/// Throws InputError naming the offending frame index.
[[nodiscard]] Dataset load_dataset(const std::string& dir);
void save_dataset(const std::string& dir, const Dataset& ds);

[[nodiscard]] std::string frame_name(int index, const char* extension);

}  // namespace sst::io
