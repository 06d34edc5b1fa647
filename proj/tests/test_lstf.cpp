#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "sst/lstf.hpp"

using namespace sst;
using namespace sst::lstf;

namespace {

struct Fixture {
  encode::ChannelPlan plan;
  nn::WeightStore store;
  Fixture() {
    plan.color = {8, 8, 8};
    plan.geometry = 4;
    init_lstf_weights(store, plan, 11);
  }
  CrossModalAttention attention() const { return CrossModalAttention(store, 1, 12, 8); }
};

ViewStack random_stack(std::mt19937_64& rng, int n, int c) {
  std::uniform_real_distribution<double> u(-1, 1);
  ViewStack s;
  s.features = Eigen::MatrixXd::Zero(n, c);
  s.visible.assign(n, 1);
  s.explicit_weights = Eigen::VectorXd::Ones(n);
  for (Eigen::Index i = 0; i < s.features.size(); ++i) s.features.data()[i] = u(rng);
  return s;
}

}  // namespace

TEST_CASE("explicit weight branches") {
  const ExplicitWeightParams p;
  priors::SparseDepthMap d(4, 4, kMissingDepth);
  priors::ErrorMap e(4, 4, priors::kMissingError);
  CHECK(explicit_weight(d, e, {2.5, 2.5}, 1.0, p) == 1.0);
  d(2, 2) = 1.0;
  e(2, 2) = 0.0;
  CHECK(explicit_weight(d, e, {2.5, 2.5}, 1.0, p) == 1.0);
  CHECK(explicit_weight(d, e, {2.5, 2.5}, 1.0 + p.sigma_base, p) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  // Nearest pixel is the floor of the continuous coordinate.
  CHECK(explicit_weight(d, e, {2.99, 2.01}, 1.5, p) < 1.0);
  CHECK(explicit_weight(d, e, {3.01, 2.01}, 1.5, p) == 1.0);
  CHECK(explicit_weight(d, e, {2.5, 2.5}, 50.0, p) > 0.0);
}

TEST_CASE("single view reduces to the feed-forward of W_v f") {
  const Fixture f;
  const auto att = f.attention();
  std::mt19937_64 rng(1);
  ViewStack s = random_stack(rng, 1, 12);
  const Eigen::VectorXd expect = att.feed_forward(att.wv() * s.features.row(0).transpose());
  CHECK((att.fuse(s, FusionMode::kAttention) - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("identical views fuse like one view") {
  const Fixture f;
  const auto att = f.attention();
  std::mt19937_64 rng(2);
  const ViewStack one = random_stack(rng, 1, 12);
  ViewStack many = random_stack(rng, 9, 12);
  for (int t = 0; t < 9; ++t) many.features.row(t) = one.features.row(0);
  CHECK((att.fuse(many, FusionMode::kAttention) - att.fuse(one, FusionMode::kAttention)).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("masked views are ignored and uniform weights scale the output") {
  const Fixture f;
  const auto att = f.attention();
  std::mt19937_64 rng(3);
  ViewStack s = random_stack(rng, 5, 12);
  s.visible = {1, 0, 1, 1, 0};
  s.features.row(1).setZero();
  s.features.row(4).setZero();
  Eigen::MatrixXd a;
  const Eigen::VectorXd base = att.pre_feed_forward(s, FusionMode::kAttention, &a);
  CHECK(a.row(1).isZero());
  CHECK(a.col(4).isZero());
  CHECK((base - oracle::masked_attention(s.features, s.visible, att.wq(), att.wk(), att.wv())).norm() < 1e-12);
  ViewStack scaled = s;
  scaled.explicit_weights *= 0.3;
  CHECK((att.pre_feed_forward(scaled, FusionMode::kAttention) - 0.3 * base).cwiseAbs().maxCoeff() < 1e-12);
  ViewStack garbage = s;
  garbage.features(1, 0) = 1e6;
  CHECK((att.pre_feed_forward(garbage, FusionMode::kAttention) - base).norm() == 0.0);

  const Eigen::VectorXd mean = att.pre_feed_forward(s, FusionMode::kAveraging);
  CHECK((mean - (s.features.row(0) + s.features.row(2) + s.features.row(3)).transpose() / 3).norm() < 1e-12);

  s.visible.assign(5, 0);
  CHECK_THROWS_AS((void)att.pre_feed_forward(s, FusionMode::kAttention), std::invalid_argument);
}

TEST_CASE("fragment fusion drops keys no view sees") {
  const Fixture f;
  const auto att = f.attention();
  const volume::GridSpec spec;
  const std::vector<volume::VoxelKey> keys{{0, 0, 0, 1}, {0, 0, 1, 1}, {0, 0, 2, 1}};
  std::vector<encode::BackprojectedView> views(3);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> u(-1, 1);
  for (auto& v : views) {
    v.features = nn::RowMatrixXf(3, 12);
    for (Eigen::Index i = 0; i < v.features.size(); ++i) v.features.data()[i] = u(rng);
    v.pixels.assign(3, {});
    v.depths.assign(3, 1.0);
    v.visible = {1, 0, 1};
  }
  views[2].visible = {0, 0, 1};
  const Eigen::MatrixXd w = Eigen::MatrixXd::Ones(3, 3);
  const volume::FeatureVolume out = fuse_fragment(keys, views, w, att, FusionMode::kAttention);
  REQUIRE(out.keys.size() == 2);
  CHECK(out.keys[0] == keys[0]);
  CHECK(out.keys[1] == keys[2]);
  CHECK(out.channels() == 8);
  CHECK(fuse_fragment(keys, views, w, att, FusionMode::kAttention, 3).features == out.features);
  CHECK_THROWS_AS((void)fuse_fragment(keys, views, Eigen::MatrixXd::Ones(3, 2), att, FusionMode::kAttention),
                  std::invalid_argument);
}

TEST_CASE("explicit weights for a fragment") {
  const volume::GridSpec spec;
  const auto K = geom::Intrinsics::make(20, 20, 8, 8, 16, 16);
  const std::vector<geom::Camera> cams{{K, geom::Pose::identity()}};
  const std::vector<volume::VoxelKey> keys{{0, 0, 24, 2}, {0, 0, -3, 2}};
  std::vector<priors::GeometryPrior> empty{priors::GeometryPrior::empty(16, 16)};
  Eigen::MatrixXd w = explicit_weights_for_fragment(keys, empty, cams, spec, {});
  CHECK(w(0, 0) == 1.0);
  CHECK(w(1, 0) == 0.0);
  // Sparse point exactly at the voxel's projected depth.
  const auto proj = geom::project(K, geom::Pose::identity(), volume::key_center(spec, keys[0]));
  REQUIRE(proj);
  auto& p = empty[0];
  p.depth(static_cast<int>(proj->pixel.u), static_cast<int>(proj->pixel.v)) = proj->depth;
  p.error(static_cast<int>(proj->pixel.u), static_cast<int>(proj->pixel.v)) = 1.0;
  w = explicit_weights_for_fragment(keys, empty, cams, spec, {});
  CHECK(w(0, 0) == 1.0);
}
