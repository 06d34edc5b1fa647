#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "sst/geom.hpp"
#include "sst/image.hpp"
#include "sst/nn.hpp"
#include "sst/priors.hpp"
#include "sst/volume.hpp"

namespace sst::encode {

using nn::FeatureMap;

/// Channel counts per pyramid level (index 0 = coarsest).
struct ChannelPlan {
  std::array<int, volume::kLevels> color{80, 40, 24};
  int geometry{8};

  [[nodiscard]] int fused(int level) const { return color.at(level) + geometry; }
};

/// Spatial stride of each level's feature map relative to the input image.
inline constexpr std::array<int, volume::kLevels> kStrides{4, 2, 1};

using FeaturePyramid = std::array<FeatureMap, volume::kLevels>;

/// Adds both encoders' layers to `store` (seeded uniform init).
void init_encoder_weights(nn::WeightStore& store, const ChannelPlan& plan, std::uint64_t seed);

/// Grayscale image encoder: a stride-1 stem followed by two stride-2 blocks.
/// Output level l has plan.color[l] channels at stride kStrides[l].
class ImageEncoder {
 public:
  /// Keeps pointers into `store`, which must outlive the encoder.
  ImageEncoder(const nn::WeightStore& store, const ChannelPlan& plan);
  ImageEncoder(nn::WeightStore&&, const ChannelPlan&) = delete;
  /// Intensities in [0, 1]. Throws when the size is not divisible by 4.
  [[nodiscard]] FeaturePyramid encode(const Image<float>& image, int threads = 1) const;

 private:
  nn::Conv2d stem_, down1_, down2_;
};

/// Geometry prior encoder: three stride-preserving blocks at full resolution,
/// average pooling to each level, then a shared fourth block.
class PriorEncoder {
 public:
  PriorEncoder(const nn::WeightStore& store, const ChannelPlan& plan);
  PriorEncoder(nn::WeightStore&&, const ChannelPlan&) = delete;
  /// Depth enters normalized by max_depth; missing pixels enter as (0, 0).
  [[nodiscard]] FeaturePyramid encode(const priors::GeometryPrior& prior, double max_depth = priors::kDefaultMaxDepth,
                                      int threads = 1) const;

 private:
  nn::Conv2d block1_, block2_, block3_, block4_;
};

struct ViewSample {
  std::vector<float> feature;
  geom::PixelCoord pixel;
  double depth{0.0};
  bool visible{false};
};

/// One view's samples for a list of keys, stored row-per-key.
struct BackprojectedView {
  nn::RowMatrixXf features;  ///< keys x (color + geometry) channels, zero rows when invisible
  std::vector<geom::PixelCoord> pixels;
  std::vector<double> depths;
  std::vector<std::uint8_t> visible;

  [[nodiscard]] std::size_t size() const noexcept { return visible.size(); }
  [[nodiscard]] ViewSample sample(std::size_t i) const;
};

/// Bilinear lookup at a continuous full-resolution pixel of a map with the
/// given stride; edges clamp.
void sample_bilinear(const FeatureMap& map, int stride, geom::PixelCoord px, float* out);

/// Projects each key center into the view and samples color then geometry
/// features at the matching level. Throws on scale/level mismatch.
[[nodiscard]] BackprojectedView backproject_features(const FeatureMap& color, const FeatureMap& geometry,
                                                     const geom::Intrinsics& K, const geom::Pose& pose,
                                                     std::span<const volume::VoxelKey> keys,
                                                     const volume::GridSpec& spec);

}  // namespace sst::encode
