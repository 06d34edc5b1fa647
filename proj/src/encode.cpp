#include "sst/encode.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sst::encode {

namespace {

// Restores the activation variance lost to uniform(-k, k) initialization.
const float kGain = std::sqrt(3.0f);
constexpr int kImageChannels = 1;
constexpr int kPriorChannels = 2;

void add_conv(nn::WeightStore& store, const std::string& name, int c_in, int c_out, std::uint64_t seed) {
  const int fan_in = 9 * c_in;
  store.add_uniform(name + ".weight", {3, 3, c_in, c_out}, fan_in, seed);
  store.add_uniform(name + ".bias", {c_out}, fan_in, seed);
}

void check_divisible(int width, int height) {
  const int coarse = kStrides.front();
  if (width <= 0 || height <= 0 || width % coarse != 0 || height % coarse != 0) {
    throw std::invalid_argument("encoder input size must be a positive multiple of " + std::to_string(coarse));
  }
}

}  // namespace

void init_encoder_weights(nn::WeightStore& store, const ChannelPlan& plan, std::uint64_t seed) {
  add_conv(store, "color.stem", kImageChannels, plan.color[2], seed);
  add_conv(store, "color.down1", plan.color[2], plan.color[1], seed);
  add_conv(store, "color.down2", plan.color[1], plan.color[0], seed);
  add_conv(store, "geo.block1", kPriorChannels, plan.geometry, seed);
  add_conv(store, "geo.block2", plan.geometry, plan.geometry, seed);
  add_conv(store, "geo.block3", plan.geometry, plan.geometry, seed);
  add_conv(store, "geo.block4", plan.geometry, plan.geometry, seed);
}

ImageEncoder::ImageEncoder(const nn::WeightStore& store, const ChannelPlan& plan)
    : stem_(nn::Conv2d::bind(store, "color.stem", kImageChannels, plan.color[2], 1)),
      down1_(nn::Conv2d::bind(store, "color.down1", plan.color[2], plan.color[1], 2)),
      down2_(nn::Conv2d::bind(store, "color.down2", plan.color[1], plan.color[0], 2)) {}

FeaturePyramid ImageEncoder::encode(const Image<float>& image, int threads) const {
  check_divisible(image.width, image.height);
  FeatureMap in(image.height, image.width, kImageChannels, 2);
  std::copy(image.data.begin(), image.data.end(), in.data.begin());
  FeaturePyramid out;
  out[2] = stem_.forward(in, kGain, threads);
  out[1] = down1_.forward(out[2], kGain, threads);
  out[0] = down2_.forward(out[1], kGain, threads);
  for (int l = 0; l < volume::kLevels; ++l) out[l].scale = l;
  return out;
}

PriorEncoder::PriorEncoder(const nn::WeightStore& store, const ChannelPlan& plan)
    : block1_(nn::Conv2d::bind(store, "geo.block1", kPriorChannels, plan.geometry, 1)),
      block2_(nn::Conv2d::bind(store, "geo.block2", plan.geometry, plan.geometry, 1)),
      block3_(nn::Conv2d::bind(store, "geo.block3", plan.geometry, plan.geometry, 1)),
      block4_(nn::Conv2d::bind(store, "geo.block4", plan.geometry, plan.geometry, 1)) {}

FeaturePyramid PriorEncoder::encode(const priors::GeometryPrior& prior, double max_depth, int threads) const {
  check_divisible(prior.width(), prior.height());
  if (!(max_depth > 0.0)) throw std::invalid_argument("prior encoder: max_depth must be positive");
  FeatureMap in(prior.height(), prior.width(), kPriorChannels, 2);
  for (int y = 0; y < prior.height(); ++y)
    for (int x = 0; x < prior.width(); ++x) {
      const double d = prior.depth(x, y);
      float* p = in.pixel(x, y);
      if (has_depth(d)) {
        p[0] = static_cast<float>(d / max_depth);
        p[1] = static_cast<float>(prior.confidence(x, y));
      }
    }
  FeatureMap x = block1_.forward(in, kGain, threads);
  x = block2_.forward(x, kGain, threads);
  x = block3_.forward(x, kGain, threads);
  FeaturePyramid out;
  for (int l = 0; l < volume::kLevels; ++l) {
    out[l] = block4_.forward(nn::avg_pool(x, kStrides[l]), kGain, threads);
    out[l].scale = l;
  }
  return out;
}

ViewSample BackprojectedView::sample(std::size_t i) const {
  ViewSample s;
  s.feature.assign(features.row(static_cast<Eigen::Index>(i)).data(),
                   features.row(static_cast<Eigen::Index>(i)).data() + features.cols());
  s.pixel = pixels.at(i);
  s.depth = depths.at(i);
  s.visible = visible.at(i) != 0;
  return s;
}

void sample_bilinear(const FeatureMap& map, int stride, geom::PixelCoord px, float* out) {
  // Feature (i, j) at this stride is centered on full-resolution pixel
  // coordinate (stride * (i + 0.5), stride * (j + 0.5)).
  const double fx = std::clamp(px.u / stride - 0.5, 0.0, static_cast<double>(map.width - 1));
  const double fy = std::clamp(px.v / stride - 0.5, 0.0, static_cast<double>(map.height - 1));
  const int x0 = static_cast<int>(std::floor(fx));
  const int y0 = static_cast<int>(std::floor(fy));
  const int x1 = std::min(x0 + 1, map.width - 1);
  const int y1 = std::min(y0 + 1, map.height - 1);
  const float ax = static_cast<float>(fx - x0);
  const float ay = static_cast<float>(fy - y0);
  const float w00 = (1 - ax) * (1 - ay), w10 = ax * (1 - ay), w01 = (1 - ax) * ay, w11 = ax * ay;
  const float* p00 = map.pixel(x0, y0);
  const float* p10 = map.pixel(x1, y0);
  const float* p01 = map.pixel(x0, y1);
  const float* p11 = map.pixel(x1, y1);
  for (int c = 0; c < map.channels; ++c) {
    out[c] = w00 * p00[c] + w10 * p10[c] + w01 * p01[c] + w11 * p11[c];
  }
}

BackprojectedView backproject_features(const FeatureMap& color, const FeatureMap& geometry,
                                       const geom::Intrinsics& K, const geom::Pose& pose,
                                       std::span<const volume::VoxelKey> keys, const volume::GridSpec& spec) {
  if (color.scale != geometry.scale) throw std::invalid_argument("backproject: color/geometry scale mismatch");
  const int level = color.scale;
  const int stride = kStrides.at(level);
  if (color.width * stride != K.width || color.height * stride != K.height ||
      geometry.width != color.width || geometry.height != color.height) {
    throw std::invalid_argument("backproject: feature map size does not match the level stride");
  }
  const int channels = color.channels + geometry.channels;
  BackprojectedView view;
  view.features = nn::RowMatrixXf::Zero(static_cast<Eigen::Index>(keys.size()), channels);
  view.pixels.assign(keys.size(), {});
  view.depths.assign(keys.size(), 0.0);
  view.visible.assign(keys.size(), 0);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (keys[i].level != level) throw std::invalid_argument("backproject: key level does not match feature scale");
    const auto proj = geom::project(K, pose, volume::key_center(spec, keys[i]));
    if (!proj) continue;
    float* row = view.features.row(static_cast<Eigen::Index>(i)).data();
    sample_bilinear(color, stride, proj->pixel, row);
    sample_bilinear(geometry, stride, proj->pixel, row + color.channels);
    view.pixels[i] = proj->pixel;
    view.depths[i] = proj->depth;
    view.visible[i] = 1;
  }
  return view;
}

}  // namespace sst::encode
