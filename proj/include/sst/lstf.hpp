#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "sst/encode.hpp"
#include "sst/geom.hpp"
#include "sst/nn.hpp"
#include "sst/priors.hpp"
#include "sst/volume.hpp"

namespace sst::lstf {

/// Width of the Gaussian on the sparse-depth gap: sigma = sigma_base * (1 + E / error_ref).
struct ExplicitWeightParams {
  double sigma_base{0.04};  ///< meters
  double error_ref{2.0};    ///< pixels
};

/// Per-view explicit spatial weight of a voxel seen at pixel p with projected
/// depth d. Returns exactly 1 when the nearest pixel carries no sparse depth.
[[nodiscard]] double explicit_weight(const priors::SparseDepthMap& depth, const priors::ErrorMap& error,
                                     geom::PixelCoord p, double d, const ExplicitWeightParams& params);

/// All N views of one voxel.
struct ViewStack {
  Eigen::MatrixXd features;                ///< N x C, rows of invisible views are zero
  std::vector<std::uint8_t> visible;       ///< N flags
  Eigen::VectorXd explicit_weights;        ///< N weights in [0, 1]

  [[nodiscard]] int views() const noexcept { return static_cast<int>(visible.size()); }
  [[nodiscard]] int visible_count() const noexcept;
};

enum class FusionMode {
  kAttention,  ///< sparse cross-modal attention
  kAveraging,  ///< plain mean of visible views (ablation baseline)
};

/// Attention parameters of one pyramid level: W_q, W_k, W_v (C x C) and a
/// leaky-ReLU feed-forward layer C -> C_out.
class CrossModalAttention {
 public:
  CrossModalAttention(const nn::WeightStore& store, int level, int channels_in, int channels_out);

  [[nodiscard]] int channels_in() const noexcept { return static_cast<int>(wq_.rows()); }
  [[nodiscard]] int channels_out() const noexcept { return static_cast<int>(ff_w_.rows()); }

  /// Fused voxel feature before the feed-forward layer. When `attention` is
  /// given it receives the N x N implicit weights (zero rows/columns for
  /// masked views). Throws when no view is visible.
  [[nodiscard]] Eigen::VectorXd pre_feed_forward(const ViewStack& stack, FusionMode mode,
                                                 Eigen::MatrixXd* attention = nullptr) const;
  [[nodiscard]] Eigen::VectorXd feed_forward(const Eigen::VectorXd& x) const;
  [[nodiscard]] Eigen::VectorXd fuse(const ViewStack& stack, FusionMode mode) const {
    return feed_forward(pre_feed_forward(stack, mode));
  }

  [[nodiscard]] const Eigen::MatrixXd& wq() const noexcept { return wq_; }
  [[nodiscard]] const Eigen::MatrixXd& wk() const noexcept { return wk_; }
  [[nodiscard]] const Eigen::MatrixXd& wv() const noexcept { return wv_; }

 private:
  Eigen::MatrixXd wq_, wk_, wv_, ff_w_;
  Eigen::VectorXd ff_b_;
};

void init_lstf_weights(nn::WeightStore& store, const encode::ChannelPlan& plan, std::uint64_t seed);

/// keys x N matrix of explicit weights; invisible views get 0.
[[nodiscard]] Eigen::MatrixXd explicit_weights_for_fragment(std::span<const volume::VoxelKey> keys,
                                                            std::span<const priors::GeometryPrior> priors,
                                                            std::span<const geom::Camera> cameras,
                                                            const volume::GridSpec& spec,
                                                            const ExplicitWeightParams& params);

/// Fuses the N back-projected views (each aligned with `keys`) into the
/// fragment feature volume. Keys without any visible view are dropped.
[[nodiscard]] volume::FeatureVolume fuse_fragment(std::span<const volume::VoxelKey> keys,
                                                  std::span<const encode::BackprojectedView> views,
                                                  const Eigen::MatrixXd& explicit_weights,
                                                  const CrossModalAttention& attention, FusionMode mode,
                                                  int threads = 1);

}  // namespace sst::lstf
