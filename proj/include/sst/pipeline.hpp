#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sst/eval.hpp"
#include "sst/gstf.hpp"
#include "sst/io.hpp"
#include "sst/lstf.hpp"
#include "sst/nn.hpp"
#include "sst/surface.hpp"
#include "sst/volume.hpp"
#include "json.hpp"

namespace sst::pipeline {

enum class Mode {
  kLearned,    ///< attention fusion + recurrent global fusion
  kAveraging,  ///< same network with view averaging instead of attention
  kClassical,  ///< weighted TSDF integration of depth (oracle path)
};

enum class DepthSource {
  kDense,   ///< dense depth maps (exact raycast for synthetic data)
  kSparse,  ///< only the sparse SLAM prior depths
};

[[nodiscard]] Mode parse_mode(const std::string& s);
[[nodiscard]] std::string mode_name(Mode m);

struct RunConfig {
  std::string dataset;  ///< dataset directory; empty means synthetic generation
  std::string scene;    ///< scene JSON for synthetic generation; empty means the built-in room
  int n_frames{27};
  std::string trajectory{"orbit"};
  int image_downsample{1};  ///< synthetic frames only: divides the default 160x120 resolution

  int fragment_size{9};
  volume::GridSpec grid;
  double truncation{0.12};
  double theta{0.5};
  double lambda_conf{1.0};
  lstf::ExplicitWeightParams explicit_weight;
  double max_depth{3.0};
  Mode mode{Mode::kLearned};
  DepthSource depth_source{DepthSource::kDense};
  std::string weights;  ///< optional SSTW file; random init from seed otherwise
  std::uint64_t seed{0};
  std::string out_dir;
  int threads{1};

  priors::SimulationOptions prior;  ///< synthetic prior simulation
  double scene_scale{1.0};          ///< synthetic only: similarity scale of scene, trajectory and max depth

  /// Throws InputError when an invariant fails.
  void validate() const;
};

[[nodiscard]] RunConfig config_from_json(const nlohmann::json& j, RunConfig base = {});
[[nodiscard]] nlohmann::json config_to_json(const RunConfig& c);

/// Consecutive [begin, end) frame ranges of `fragment_size`; the last one may
/// be shorter. Throws InputError("empty sequence") for zero frames.
[[nodiscard]] std::vector<std::pair<int, int>> schedule_fragments(int n_frames, int fragment_size);

struct StageTiming {
  double encode_ms{0.0};
  double backproject_ms{0.0};
  double lstf_ms{0.0};
  double gstf_ms{0.0};
  double surface_ms{0.0};
};

struct TimingReport {
  std::vector<StageTiming> fragments;
  double surface_ms{0.0};
  double wall_ms{0.0};
  int frames{0};

  [[nodiscard]] double fps() const { return wall_ms > 0.0 ? frames / (wall_ms / 1000.0) : 0.0; }
  [[nodiscard]] StageTiming total() const;
};

[[nodiscard]] nlohmann::json to_json(const TimingReport& t);

struct RunResult {
  surface::Mesh mesh;
  std::array<volume::SparseVolume<volume::TsdfVoxel>, volume::kLevels> tsdf{
      volume::SparseVolume<volume::TsdfVoxel>(0), volume::SparseVolume<volume::TsdfVoxel>(1),
      volume::SparseVolume<volume::TsdfVoxel>(2)};
  std::vector<std::pair<int, int>> fragments;
  std::vector<gstf::FragmentReport> fragment_reports;  ///< learned and averaging modes
  TimingReport timing;
  std::size_t active_voxels{0};  ///< voxels processed by the global fusion stage, summed over fragments
};

/// Synthetic dataset described by the config (scene, trajectory, priors).
[[nodiscard]] io::Dataset synthetic_dataset(const RunConfig& cfg);

/// Builds or loads the network weights for the config.
[[nodiscard]] nn::WeightStore load_or_init_weights(const RunConfig& cfg);

[[nodiscard]] RunResult run(const io::Dataset& ds, const RunConfig& cfg);
[[nodiscard]] RunResult run(const io::Dataset& ds, const RunConfig& cfg, const nn::WeightStore& weights);

/// Loads or synthesizes the dataset, runs, and writes mesh.ply,
/// volume_l{0,1,2}.sstv and timing.json when out_dir is set.
RunResult run_pipeline(const RunConfig& cfg);

void write_outputs(const std::string& dir, const RunConfig& cfg, const RunResult& r);

struct EvalOptions {
  double tau{0.05};
  double density{1e4};  ///< samples per square meter
  std::uint64_t seed{0};
  double max_depth{3.0};
  /// A sample counts as observed when some view sees it no deeper than the
  /// rendered depth plus this margin.
  double visibility_margin{0.05};
  bool filter_visible{true};
  int threads{1};
};

struct EvalReport {
  eval::MetricsReport3D metrics_3d;
  std::vector<eval::MetricsReport2D> per_view;
  eval::MetricsReport2D mean_2d;
  std::size_t pred_points{0};
  std::size_t gt_points{0};
};

/// Keeps points seen by at least one view: in frustum, depth <= max_depth and
/// not behind the view's depth map by more than margin.
[[nodiscard]] std::vector<Vec3> filter_observed(std::span<const Vec3> points, std::span<const geom::Camera> cameras,
                                                std::span<const DepthMap> depths, double max_depth, double margin);

/// 3D metrics between sampled meshes plus 2D metrics of the predicted mesh
/// rendered into every view against that view's depth. Throws on empty meshes.
[[nodiscard]] EvalReport evaluate(const surface::Mesh& pred, const surface::Mesh& gt,
                                  std::span<const geom::Camera> cameras, std::span<const DepthMap> gt_depths,
                                  const EvalOptions& opts);

[[nodiscard]] nlohmann::json to_json(const EvalReport& r);

struct BenchRow {
  double scale{1.0};
  std::size_t active_voxels{0};
  StageTiming stages;       ///< minimum over repeats per stage
  double gstf_ms{0.0};      ///< minimum over repeats
};

struct BenchReport {
  std::vector<BenchRow> rows;
  double voxel_ratio{0.0};  ///< last / first
  double gstf_ratio{0.0};   ///< last / first
  bool within_bound{false}; ///< gstf_ratio <= 2.5
};

/// Runs the config at every scale (>= 2 sizes) `repeats` times.
[[nodiscard]] BenchReport bench(const RunConfig& cfg, const std::vector<double>& scales, int repeats = 3);
[[nodiscard]] nlohmann::json to_json(const BenchReport& b);

}  // namespace sst::pipeline
