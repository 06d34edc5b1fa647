#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "sst/encode.hpp"
#include "sst/geom.hpp"
#include "sst/image.hpp"
#include "sst/nn.hpp"
#include "sst/volume.hpp"

namespace sst::gstf {

using Matrix = volume::FeatureVolume::Matrix;
using volume::FeatureVolume;
using volume::KeyList;
using volume::VoxelKey;

inline constexpr int kKernelTaps = 27;
inline constexpr int kCenterTap = 13;

/// Tap index of neighbor offset (dx, dy, dz), each in {-1, 0, 1}.
[[nodiscard]] constexpr int tap_index(int dx, int dy, int dz) noexcept {
  return (dx + 1) * 9 + (dy + 1) * 3 + (dz + 1);
}

/// Neighbor table over a sorted active key set: neighbors[i][tap] is the row
/// of the active neighbor at that offset, or -1.
struct Rulebook {
  KeyList keys;
  std::vector<std::array<std::int32_t, kKernelTaps>> neighbors;

  static Rulebook build(std::span<const VoxelKey> sorted_keys);
  [[nodiscard]] std::size_t size() const noexcept { return keys.size(); }
};

/// 3x3x3 kernel, weight shape [27, c_in, c_out], plus bias [c_out].
struct SparseConvKernel {
  const nn::Tensor* weight{nullptr};
  const nn::Tensor* bias{nullptr};
  int c_in{0};
  int c_out{0};

  static SparseConvKernel bind(const nn::WeightStore& store, const std::string& name, int c_in, int c_out);
};

/// Submanifold convolution: output rows align with the rulebook's active set;
/// only active neighbors contribute.
[[nodiscard]] Matrix sparse_conv3d(const Rulebook& rules, const Matrix& in, const SparseConvKernel& kernel,
                                   int threads = 1);
[[nodiscard]] FeatureVolume sparse_conv3d(const FeatureVolume& in, const SparseConvKernel& kernel, int threads = 1);

/// Gate activations recorded by gru_update for inspection.
struct GateTrace {
  Matrix update;     ///< z
  Matrix reset;      ///< r
  Matrix candidate;  ///< H~
};

struct Predictions {
  Eigen::VectorXf occupancy;  ///< in (0, 1)
  Eigen::VectorXf tsdf;       ///< in (-1, 1)
};

/// Recurrent fusion unit and prediction heads of one pyramid level.
class LevelFusion {
 public:
  /// Keeps pointers into `store`, which must outlive this object.
  LevelFusion(const nn::WeightStore& store, int level, int channels);
  LevelFusion(nn::WeightStore&&, int, int) = delete;

  [[nodiscard]] int channels() const noexcept { return channels_; }

  /// Two sparse-conv blocks (conv -> leaky-ReLU) on the fragment features.
  [[nodiscard]] Matrix extract_surface_feature(const Rulebook& rules, const Matrix& fragment, int threads = 1) const;
  /// z = sig(Conv_z[H;S]), r = sig(Conv_r[H;S]), H~ = tanh(Conv_h[r*H;S]),
  /// H' = (1 - z) * H + z * H~.
  [[nodiscard]] Matrix gru_update(const Rulebook& rules, const Matrix& hidden, const Matrix& surface,
                                  int threads = 1, GateTrace* trace = nullptr) const;
  [[nodiscard]] Predictions predict(const Matrix& hidden) const;

 private:
  int channels_;
  SparseConvKernel in1_, in2_, conv_z_, conv_r_, conv_h_;
  nn::Linear occ1_, occ2_, tsdf1_, tsdf2_;
};

void init_gstf_weights(nn::WeightStore& store, const encode::ChannelPlan& plan, std::uint64_t seed);

/// Persistent world-frame model, one volume per level.
struct GlobalModel {
  std::array<volume::SparseVolume<Eigen::VectorXf>, volume::kLevels> hidden{
      volume::SparseVolume<Eigen::VectorXf>(0), volume::SparseVolume<Eigen::VectorXf>(1),
      volume::SparseVolume<Eigen::VectorXf>(2)};
  std::array<volume::SparseVolume<float>, volume::kLevels> occupancy{
      volume::SparseVolume<float>(0), volume::SparseVolume<float>(1), volume::SparseVolume<float>(2)};
  std::array<volume::SparseVolume<volume::TsdfVoxel>, volume::kLevels> tsdf{
      volume::SparseVolume<volume::TsdfVoxel>(0), volume::SparseVolume<volume::TsdfVoxel>(1),
      volume::SparseVolume<volume::TsdfVoxel>(2)};
};

/// Produces the fragment feature volume for the candidate keys of a level.
using FragmentFeatureProvider = std::function<FeatureVolume(int level, const KeyList& candidates)>;

struct FragmentLevelReport {
  KeyList candidates;  ///< keys offered to the level (allocation or upsampled)
  KeyList active;      ///< keys that carried features and were fused
  KeyList occupied;    ///< active keys with occupancy >= theta
};

struct FragmentReport {
  std::array<FragmentLevelReport, volume::kLevels> levels;
};

/// Coarse-to-fine global fusion of one fragment. Level 0 uses `coarse_keys`;
/// finer levels use the children of this fragment's keys with occupancy >= theta.
FragmentReport fuse_fragment_global(const KeyList& coarse_keys, const FragmentFeatureProvider& provider,
                                    std::span<const LevelFusion> levels, GlobalModel& model, double theta,
                                    int threads = 1);

/// Same, with precomputed fragment volumes for every level; finer levels are
/// restricted to the upsampled candidates.
FragmentReport fuse_fragment_global(const std::array<FeatureVolume, volume::kLevels>& fragment,
                                    std::span<const LevelFusion> levels, GlobalModel& model, double theta,
                                    int threads = 1);

struct DepthView {
  geom::Camera camera;
  DepthMap depth;
};

struct ClassicalFusionOptions {
  double truncation{0.12};  ///< meters
  double max_depth{3.0};    ///< frustum cut for allocation
  int threads{1};
};

/// Weighted running-average TSDF integration of a fragment's depth maps into
/// the finest-level volume, through fragment allocation and a local volume
/// merged into `global`. Returns the number of voxels updated.
std::size_t classical_fusion_step(std::span<const DepthView> views, volume::SparseVolume<volume::TsdfVoxel>& global,
                                  const volume::GridSpec& spec, const ClassicalFusionOptions& opts);

}  // namespace sst::gstf
