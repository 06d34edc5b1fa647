#include <random>
#include <sstream>

#include "doctest.h"
#include "sst/encode.hpp"
#include "sst/nn.hpp"

using namespace sst;
using namespace sst::encode;

namespace {

nn::WeightStore encoder_store(std::uint64_t seed, bool zero_bias = false) {
  nn::WeightStore s;
  init_encoder_weights(s, ChannelPlan{}, seed);
  if (zero_bias) s.fill_biases(0.0f);
  return s;
}

Image<float> noise_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image<float> img(w, h);
  for (auto& v : img.data) v = u(rng);
  return img;
}

}  // namespace

TEST_CASE("conv2d matches a direct loop") {
  nn::WeightStore s;
  s.add_uniform("c.weight", {3, 3, 2, 3}, 18, 1);
  s.add_uniform("c.bias", {3}, 18, 1);
  const auto conv = nn::Conv2d::bind(s, "c", 2, 3, 2);
  nn::FeatureMap in(6, 8, 2);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(-1, 1);
  for (auto& v : in.data) v = u(rng);
  const nn::FeatureMap out = conv.forward(in, 1.5f, 1);
  REQUIRE(out.width == 4);
  REQUIRE(out.height == 3);
  const auto& w = s.find("c.weight")->data;
  for (int oy = 0; oy < 3; ++oy)
    for (int ox = 0; ox < 4; ++ox)
      for (int co = 0; co < 3; ++co) {
        double acc = s.find("c.bias")->data[co];
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const int iy = 2 * oy + ky - 1, ix = 2 * ox + kx - 1;
            if (iy < 0 || ix < 0 || iy >= 6 || ix >= 8) continue;
            for (int ci = 0; ci < 2; ++ci) acc += w[((ky * 3 + kx) * 2 + ci) * 3 + co] * in.pixel(ix, iy)[ci];
          }
        const double y = 1.5 * acc;
        CHECK(out.pixel(ox, oy)[co] == doctest::Approx(y > 0 ? y : 0.01 * y).epsilon(1e-5));
      }
}

TEST_CASE("weight store init is stable per name and SSTW round trips") {
  const nn::WeightStore a = encoder_store(3);
  nn::WeightStore b;
  b.add_uniform("geo.block2.weight", {3, 3, 8, 8}, 72, 3);
  CHECK(b.find("geo.block2.weight")->data == a.find("geo.block2.weight")->data);
  const float k = 1.0f / std::sqrt(72.0f);
  for (const float v : b.find("geo.block2.weight")->data) CHECK(std::abs(v) <= k);
  std::stringstream ss;
  nn::write_sstw(ss, a);
  CHECK(nn::read_sstw(ss) == a);
  CHECK_THROWS_AS((void)a.get("geo.block2.weight", {3, 3, 8, 9}), std::invalid_argument);
  CHECK_THROWS_AS((void)a.get("missing", {1}), std::invalid_argument);
}

TEST_CASE("image encoder pyramid shapes and determinism") {
  const nn::WeightStore s = encoder_store(1);
  const ImageEncoder enc(s, ChannelPlan{});
  const Image<float> img = noise_image(64, 64, 2);
  const FeaturePyramid p = enc.encode(img);
  CHECK(p[0].width == 16);
  CHECK(p[0].channels == 80);
  CHECK(p[1].width == 32);
  CHECK(p[1].channels == 40);
  CHECK(p[2].width == 64);
  CHECK(p[2].channels == 24);
  CHECK(enc.encode(img) == p);
  CHECK(enc.encode(img, 3) == p);
  CHECK_THROWS_AS((void)enc.encode(noise_image(62, 64, 1)), std::invalid_argument);

  const nn::WeightStore zb = encoder_store(1, true);
  const ImageEncoder zero(zb, ChannelPlan{});
  for (const auto& m : zero.encode(Image<float>(64, 64, 0.0f)))
    CHECK(std::all_of(m.data.begin(), m.data.end(), [](float v) { return v == 0.0f; }));
}

TEST_CASE("prior encoder") {
  const nn::WeightStore zb = encoder_store(5, true);
  const PriorEncoder enc(zb, ChannelPlan{});
  const auto empty = priors::GeometryPrior::empty(64, 64);
  const FeaturePyramid p = enc.encode(empty);
  for (int l = 0; l < 3; ++l) {
    CHECK(p[l].channels == 8);
    CHECK(p[l].width == 64 / kStrides[l]);
    CHECK(std::all_of(p[l].data.begin(), p[l].data.end(), [](float v) { return v == 0.0f; }));
  }
  auto prior = priors::GeometryPrior::empty(64, 64);
  prior.depth(10, 10) = 1.5;
  prior.error(10, 10) = 0.5;
  prior.confidence(10, 10) = std::exp(-0.5);
  const nn::WeightStore ws = encoder_store(5);
  const PriorEncoder seeded(ws, ChannelPlan{});
  CHECK(seeded.encode(prior) == seeded.encode(prior));
  CHECK_FALSE(enc.encode(prior)[2] == p[2]);
}

TEST_CASE("bilinear sampling") {
  nn::FeatureMap m(2, 4, 1, 1);
  for (int x = 0; x < 4; ++x) {
    m.pixel(x, 0)[0] = static_cast<float>(x);
    m.pixel(x, 1)[0] = static_cast<float>(10 + x);
  }
  float v = 0;
  // Stride 2: feature (1, 0) sits on full-res (3, 1).
  sample_bilinear(m, 2, {3.0, 1.0}, &v);
  CHECK(v == 1.0f);
  sample_bilinear(m, 2, {4.0, 1.0}, &v);
  CHECK(v == 1.5f);
  sample_bilinear(m, 2, {3.0, 2.0}, &v);
  CHECK(v == 6.0f);
  sample_bilinear(m, 2, {-5.0, -5.0}, &v);
  CHECK(v == 0.0f);
}

TEST_CASE("feature back-projection") {
  const volume::GridSpec spec;
  const auto K = geom::Intrinsics::make(40, 40, 8, 8, 16, 16);
  nn::FeatureMap color(16, 16, 2, 2), geo(16, 16, 1, 2);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      color.pixel(x, y)[0] = static_cast<float>(x);
      color.pixel(x, y)[1] = static_cast<float>(y);
      geo.pixel(x, y)[0] = 1.0f;
    }
  // Center (0.02, 0.02, 1.02): u = 40 * 0.02 / 1.02 + 8.
  const std::vector<volume::VoxelKey> keys{{0, 0, 25, 2}, {0, 0, -5, 2}};
  const BackprojectedView v = backproject_features(color, geo, K, geom::Pose::identity(), keys, spec);
  CHECK(v.visible[0] == 1);
  CHECK(v.visible[1] == 0);
  CHECK(v.features.row(1).isZero());
  const double u = 40 * 0.02 / 1.02 + 8;
  CHECK(v.features(0, 0) == doctest::Approx(u - 0.5).epsilon(1e-6));
  CHECK(v.features(0, 2) == 1.0f);
  CHECK(v.depths[0] == doctest::Approx(1.02));
  CHECK_THROWS_AS((void)backproject_features(color, geo, K, geom::Pose::identity(),
                                             std::vector<volume::VoxelKey>{{0, 0, 1, 1}}, spec),
                  std::invalid_argument);
}
