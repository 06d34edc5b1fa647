#include "sst/lstf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "sst/parallel.hpp"

namespace sst::lstf {

namespace {

std::string layer(int level, const char* name) { return "lstf.l" + std::to_string(level) + "." + name; }

Eigen::MatrixXd load_matrix(const nn::WeightStore& store, const std::string& name, int rows, int cols) {
  const nn::Tensor& t = store.get(name, {rows, cols});
  return Eigen::Map<const nn::RowMatrixXf>(t.data.data(), rows, cols).cast<double>();
}

}  // namespace

double explicit_weight(const priors::SparseDepthMap& depth, const priors::ErrorMap& error, geom::PixelCoord p,
                       double d, const ExplicitWeightParams& params) {
  const int x = static_cast<int>(std::floor(p.u));
  const int y = static_cast<int>(std::floor(p.v));
  if (!depth.in_bounds(x, y)) return 1.0;
  const double sd = depth(x, y);
  if (!(sd >= 0.0)) return 1.0;
  const double e = std::max(error(x, y), 0.0);
  const double sigma = params.sigma_base * (1.0 + e / params.error_ref);
  const double gap = std::abs(sd - d);
  const double w = std::exp(-(gap * gap) / (2.0 * sigma * sigma));
  // Keep the weight strictly positive even when the exponential underflows.
  return std::max(w, std::numeric_limits<double>::min());
}

int ViewStack::visible_count() const noexcept {
  return static_cast<int>(std::count(visible.begin(), visible.end(), std::uint8_t{1}));
}

CrossModalAttention::CrossModalAttention(const nn::WeightStore& store, int level, int channels_in,
                                         int channels_out)
    : wq_(load_matrix(store, layer(level, "wq"), channels_in, channels_in)),
      wk_(load_matrix(store, layer(level, "wk"), channels_in, channels_in)),
      wv_(load_matrix(store, layer(level, "wv"), channels_in, channels_in)),
      ff_w_(load_matrix(store, layer(level, "ff.weight"), channels_out, channels_in)) {
  const nn::Tensor& b = store.get(layer(level, "ff.bias"), {channels_out});
  ff_b_ = Eigen::Map<const Eigen::VectorXf>(b.data.data(), channels_out).cast<double>();
}

Eigen::VectorXd CrossModalAttention::pre_feed_forward(const ViewStack& stack, FusionMode mode,
                                                      Eigen::MatrixXd* attention) const {
  const int n = stack.views();
  if (stack.features.rows() != n || stack.explicit_weights.size() != n) {
    throw std::invalid_argument("view stack: inconsistent view count");
  }
  if (stack.features.cols() != channels_in()) throw std::invalid_argument("view stack: channel mismatch");
  std::vector<int> vis;
  for (int t = 0; t < n; ++t) {
    if (stack.visible[t]) vis.push_back(t);
  }
  if (vis.empty()) throw std::invalid_argument("cross-modal attention: no visible view");
  const int m = static_cast<int>(vis.size());

  Eigen::MatrixXd a(m, channels_in());
  for (int i = 0; i < m; ++i) a.row(i) = stack.features.row(vis[i]);

  if (mode == FusionMode::kAveraging) {
    if (attention) {
      *attention = Eigen::MatrixXd::Zero(n, n);
      for (const int i : vis)
        for (const int j : vis) (*attention)(i, j) = 1.0 / m;
    }
    return a.colwise().mean().transpose();
  }

  // Tokens are rows, so W A_in becomes A W^T.
  const Eigen::MatrixXd q = a * wq_.transpose();
  const Eigen::MatrixXd k = a * wk_.transpose();
  Eigen::MatrixXd v = a * wv_.transpose();
  Eigen::MatrixXd scores = (q * k.transpose()) / std::sqrt(static_cast<double>(channels_in()));
  for (int i = 0; i < m; ++i) {
    const double mx = scores.row(i).maxCoeff();
    scores.row(i) = (scores.row(i).array() - mx).exp();
    scores.row(i) /= scores.row(i).sum();
  }
  for (int i = 0; i < m; ++i) v.row(i) *= stack.explicit_weights[vis[i]];
  if (attention) {
    *attention = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) (*attention)(vis[i], vis[j]) = scores(i, j);
  }
  // Masked mean of the output tokens: mean_i (w_im w_ex V)_i.
  const Eigen::RowVectorXd token_weights = scores.colwise().sum() / static_cast<double>(m);
  return (token_weights * v).transpose();
}

Eigen::VectorXd CrossModalAttention::feed_forward(const Eigen::VectorXd& x) const {
  Eigen::VectorXd y = ff_w_ * x + ff_b_;
  for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = y[i] > 0.0 ? y[i] : nn::kLeakySlope * y[i];
  return y;
}

void init_lstf_weights(nn::WeightStore& store, const encode::ChannelPlan& plan, std::uint64_t seed) {
  for (int l = 0; l < volume::kLevels; ++l) {
    const int c = plan.fused(l);
    const int c_out = plan.color[l];
    store.add_uniform(layer(l, "wq"), {c, c}, c, seed);
    store.add_uniform(layer(l, "wk"), {c, c}, c, seed);
    store.add_uniform(layer(l, "wv"), {c, c}, c, seed);
    store.add_uniform(layer(l, "ff.weight"), {c_out, c}, c, seed);
    store.add_uniform(layer(l, "ff.bias"), {c_out}, c, seed);
  }
}

Eigen::MatrixXd explicit_weights_for_fragment(std::span<const volume::VoxelKey> keys,
                                              std::span<const priors::GeometryPrior> priors,
                                              std::span<const geom::Camera> cameras, const volume::GridSpec& spec,
                                              const ExplicitWeightParams& params) {
  if (priors.size() != cameras.size()) throw std::invalid_argument("explicit weights: priors/cameras mismatch");
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(keys.size()),
                                            static_cast<Eigen::Index>(cameras.size()));
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const Vec3 c = volume::key_center(spec, keys[i]);
    for (std::size_t t = 0; t < cameras.size(); ++t) {
      const auto proj = geom::project(cameras[t].K, cameras[t].pose, c);
      if (!proj) continue;
      w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) =
          explicit_weight(priors[t].depth, priors[t].error, proj->pixel, proj->depth, params);
    }
  }
  return w;
}

volume::FeatureVolume fuse_fragment(std::span<const volume::VoxelKey> keys,
                                    std::span<const encode::BackprojectedView> views,
                                    const Eigen::MatrixXd& explicit_weights, const CrossModalAttention& attention,
                                    FusionMode mode, int threads) {
  if (views.empty()) throw std::invalid_argument("fuse_fragment: empty fragment");
  const int n = static_cast<int>(views.size());
  for (const auto& v : views) {
    if (v.size() != keys.size()) throw std::invalid_argument("fuse_fragment: view not aligned with keys");
  }
  if (explicit_weights.rows() != static_cast<Eigen::Index>(keys.size()) || explicit_weights.cols() != n) {
    throw std::invalid_argument("fuse_fragment: explicit weight shape mismatch");
  }
  const int c_in = attention.channels_in();
  const int c_out = attention.channels_out();
  volume::FeatureVolume::Matrix fused(static_cast<Eigen::Index>(keys.size()), c_out);
  std::vector<std::uint8_t> keep(keys.size(), 0);

  parallel_chunks(keys.size(), 256, threads, [&](std::size_t b, std::size_t e) {
    ViewStack stack;
    stack.features.resize(n, c_in);
    stack.visible.resize(n);
    stack.explicit_weights.resize(n);
    for (std::size_t i = b; i < e; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      bool any = false;
      for (int t = 0; t < n; ++t) {
        stack.features.row(t) = views[t].features.row(row).cast<double>();
        stack.visible[t] = views[t].visible[i];
        stack.explicit_weights[t] = views[t].visible[i] ? explicit_weights(row, t) : 0.0;
        any = any || views[t].visible[i];
      }
      if (!any) continue;
      fused.row(row) = attention.fuse(stack, mode).cast<float>().transpose();
      keep[i] = 1;
    }
  });

  volume::FeatureVolume out;
  out.level = keys.empty() ? 0 : keys.front().level;
  const auto kept = static_cast<Eigen::Index>(std::count(keep.begin(), keep.end(), std::uint8_t{1}));
  out.features.resize(kept, c_out);
  out.keys.reserve(static_cast<std::size_t>(kept));
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (!keep[i]) continue;
    out.features.row(static_cast<Eigen::Index>(out.keys.size())) = fused.row(static_cast<Eigen::Index>(i));
    out.keys.push_back(keys[i]);
  }
  return out;
}

}  // namespace sst::lstf
