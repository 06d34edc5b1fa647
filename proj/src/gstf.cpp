#include "sst/gstf.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "sst/parallel.hpp"

namespace sst::gstf {

namespace {

constexpr std::size_t kRowChunk = 128;
// Largest float strictly below 1; keeps gates and states inside open intervals.
constexpr float kOpenUpper = 1.0f - 5.9604645e-8f;
constexpr float kOpenLower = 5.9604645e-8f;

std::string layer(int level, const std::string& name) { return "gstf.l" + std::to_string(level) + "." + name; }

float open_sigmoid(float x) { return std::clamp(nn::sigmoid(x), kOpenLower, kOpenUpper); }
float open_tanh(float x) { return std::clamp(std::tanh(x), -kOpenUpper, kOpenUpper); }

Matrix concat_cols(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out.leftCols(a.cols()) = a;
  out.rightCols(b.cols()) = b;
  return out;
}

void add_sparse_conv(nn::WeightStore& store, const std::string& name, int c_in, int c_out, std::uint64_t seed) {
  const int fan_in = kKernelTaps * c_in;
  store.add_uniform(name + ".weight", {kKernelTaps, c_in, c_out}, fan_in, seed);
  store.add_uniform(name + ".bias", {c_out}, fan_in, seed);
}

void add_linear(nn::WeightStore& store, const std::string& name, int in, int out, std::uint64_t seed) {
  store.add_uniform(name + ".weight", {out, in}, in, seed);
  store.add_uniform(name + ".bias", {out}, in, seed);
}

}  // namespace

Rulebook Rulebook::build(std::span<const VoxelKey> sorted_keys) {
  Rulebook rb;
  rb.keys.assign(sorted_keys.begin(), sorted_keys.end());
  if (!std::is_sorted(rb.keys.begin(), rb.keys.end()) ||
      std::adjacent_find(rb.keys.begin(), rb.keys.end()) != rb.keys.end()) {
    throw std::invalid_argument("rulebook: keys must be sorted and unique");
  }
  std::unordered_map<VoxelKey, std::int32_t, volume::VoxelKeyHash> index;
  index.reserve(rb.keys.size());
  for (std::size_t i = 0; i < rb.keys.size(); ++i) index.emplace(rb.keys[i], static_cast<std::int32_t>(i));
  rb.neighbors.resize(rb.keys.size());
  for (std::size_t i = 0; i < rb.keys.size(); ++i) {
    auto& nb = rb.neighbors[i];
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          const auto it = index.find(rb.keys[i].offset(dx, dy, dz));
          nb[tap_index(dx, dy, dz)] = it == index.end() ? -1 : it->second;
        }
  }
  return rb;
}

SparseConvKernel SparseConvKernel::bind(const nn::WeightStore& store, const std::string& name, int c_in,
                                        int c_out) {
  SparseConvKernel k;
  k.weight = &store.get(name + ".weight", {kKernelTaps, c_in, c_out});
  k.bias = &store.get(name + ".bias", {c_out});
  k.c_in = c_in;
  k.c_out = c_out;
  return k;
}

Matrix sparse_conv3d(const Rulebook& rules, const Matrix& in, const SparseConvKernel& kernel, int threads) {
  if (in.cols() != kernel.c_in) throw std::invalid_argument("sparse_conv3d: channel mismatch");
  if (static_cast<std::size_t>(in.rows()) != rules.size()) {
    throw std::invalid_argument("sparse_conv3d: input rows do not match the active set");
  }
  Matrix out(in.rows(), kernel.c_out);
  const Eigen::Map<const Eigen::RowVectorXf> bias(kernel.bias->data.data(), kernel.c_out);
  const float* w = kernel.weight->data.data();
  const std::size_t tap_size = static_cast<std::size_t>(kernel.c_in) * kernel.c_out;
  // One gather-GEMM-scatter per tap and fixed row chunk.
  parallel_chunks(rules.size(), kRowChunk, threads, [&](std::size_t b, std::size_t e) {
    const auto n = static_cast<Eigen::Index>(e - b);
    Matrix acc = bias.replicate(n, 1);
    Matrix gathered(n, kernel.c_in);
    Matrix product(n, kernel.c_out);
    std::vector<Eigen::Index> rows;
    rows.reserve(e - b);
    for (int tap = 0; tap < kKernelTaps; ++tap) {
      rows.clear();
      for (std::size_t i = b; i < e; ++i) {
        const std::int32_t src = rules.neighbors[i][tap];
        if (src < 0) continue;
        gathered.row(static_cast<Eigen::Index>(rows.size())) = in.row(src);
        rows.push_back(static_cast<Eigen::Index>(i - b));
      }
      if (rows.empty()) continue;
      const auto k = static_cast<Eigen::Index>(rows.size());
      const Eigen::Map<const nn::RowMatrixXf> wt(w + tap * tap_size, kernel.c_in, kernel.c_out);
      product.topRows(k).noalias() = gathered.topRows(k) * wt;
      for (Eigen::Index r = 0; r < k; ++r) acc.row(rows[r]) += product.row(r);
    }
    out.middleRows(static_cast<Eigen::Index>(b), n) = acc;
  });
  return out;
}

FeatureVolume sparse_conv3d(const FeatureVolume& in, const SparseConvKernel& kernel, int threads) {
  const Rulebook rules = Rulebook::build(in.keys);
  FeatureVolume out;
  out.level = in.level;
  out.keys = in.keys;
  out.features = sparse_conv3d(rules, in.features, kernel, threads);
  return out;
}

LevelFusion::LevelFusion(const nn::WeightStore& store, int level, int channels)
    : channels_(channels),
      in1_(SparseConvKernel::bind(store, layer(level, "in1"), channels, channels)),
      in2_(SparseConvKernel::bind(store, layer(level, "in2"), channels, channels)),
      conv_z_(SparseConvKernel::bind(store, layer(level, "conv_z"), 2 * channels, channels)),
      conv_r_(SparseConvKernel::bind(store, layer(level, "conv_r"), 2 * channels, channels)),
      conv_h_(SparseConvKernel::bind(store, layer(level, "conv_h"), 2 * channels, channels)),
      occ1_(nn::Linear::bind(store, layer(level, "occ.fc1"), channels, std::max(channels / 2, 1))),
      occ2_(nn::Linear::bind(store, layer(level, "occ.fc2"), std::max(channels / 2, 1), 1)),
      tsdf1_(nn::Linear::bind(store, layer(level, "tsdf.fc1"), channels, std::max(channels / 2, 1))),
      tsdf2_(nn::Linear::bind(store, layer(level, "tsdf.fc2"), std::max(channels / 2, 1), 1)) {}

Matrix LevelFusion::extract_surface_feature(const Rulebook& rules, const Matrix& fragment, int threads) const {
  Matrix x = sparse_conv3d(rules, fragment, in1_, threads);
  x = x.unaryExpr([](float v) { return nn::leaky_relu(v); });
  x = sparse_conv3d(rules, x, in2_, threads);
  return x.unaryExpr([](float v) { return nn::leaky_relu(v); });
}

Matrix LevelFusion::gru_update(const Rulebook& rules, const Matrix& hidden, const Matrix& surface, int threads,
                               GateTrace* trace) const {
  if (hidden.rows() != surface.rows() || hidden.cols() != channels_ || surface.cols() != channels_) {
    throw std::invalid_argument("gru_update: hidden/surface shape mismatch");
  }
  const Matrix hs = concat_cols(hidden, surface);
  const Matrix z = sparse_conv3d(rules, hs, conv_z_, threads).unaryExpr(&open_sigmoid);
  const Matrix r = sparse_conv3d(rules, hs, conv_r_, threads).unaryExpr(&open_sigmoid);
  const Matrix rhs = concat_cols(r.cwiseProduct(hidden), surface);
  const Matrix cand = sparse_conv3d(rules, rhs, conv_h_, threads).unaryExpr(&open_tanh);
  // The convex combination can round onto +-1 in float; keep it inside.
  Matrix out = ((Matrix::Ones(z.rows(), z.cols()) - z).cwiseProduct(hidden) + z.cwiseProduct(cand))
                   .unaryExpr([](float v) { return std::clamp(v, -kOpenUpper, kOpenUpper); });
  if (trace) *trace = GateTrace{z, r, cand};
  return out;
}

Predictions LevelFusion::predict(const Matrix& hidden) const {
  if (hidden.cols() != channels_) throw std::invalid_argument("predict: channel mismatch");
  Predictions p;
  p.occupancy.resize(hidden.rows());
  p.tsdf.resize(hidden.rows());
  for (Eigen::Index i = 0; i < hidden.rows(); ++i) {
    const Eigen::VectorXf h = hidden.row(i).transpose();
    const Eigen::VectorXf o1 = occ1_.forward(h).unaryExpr([](float v) { return nn::leaky_relu(v); });
    const Eigen::VectorXf t1 = tsdf1_.forward(h).unaryExpr([](float v) { return nn::leaky_relu(v); });
    p.occupancy[i] = open_sigmoid(occ2_.forward(o1)[0]);
    p.tsdf[i] = open_tanh(tsdf2_.forward(t1)[0]);
  }
  return p;
}

void init_gstf_weights(nn::WeightStore& store, const encode::ChannelPlan& plan, std::uint64_t seed) {
  for (int l = 0; l < volume::kLevels; ++l) {
    const int c = plan.color[l];
    const int hidden = std::max(c / 2, 1);
    add_sparse_conv(store, layer(l, "in1"), c, c, seed);
    add_sparse_conv(store, layer(l, "in2"), c, c, seed);
    add_sparse_conv(store, layer(l, "conv_z"), 2 * c, c, seed);
    add_sparse_conv(store, layer(l, "conv_r"), 2 * c, c, seed);
    add_sparse_conv(store, layer(l, "conv_h"), 2 * c, c, seed);
    add_linear(store, layer(l, "occ.fc1"), c, hidden, seed);
    add_linear(store, layer(l, "occ.fc2"), hidden, 1, seed);
    add_linear(store, layer(l, "tsdf.fc1"), c, hidden, seed);
    add_linear(store, layer(l, "tsdf.fc2"), hidden, 1, seed);
  }
}

FragmentReport fuse_fragment_global(const KeyList& coarse_keys, const FragmentFeatureProvider& provider,
                                    std::span<const LevelFusion> levels, GlobalModel& model, double theta,
                                    int threads) {
  if (levels.size() != static_cast<std::size_t>(volume::kLevels)) {
    throw std::invalid_argument("fuse_fragment_global: need one fusion unit per level");
  }
  FragmentReport report;
  volume::SparseVolume<float> fragment_occ(0);
  for (int l = 0; l < volume::kLevels; ++l) {
    auto& lr = report.levels[l];
    lr.candidates = l == 0 ? coarse_keys : volume::upsample_occupied(fragment_occ, theta);
    if (lr.candidates.empty()) continue;
    FeatureVolume fv = provider(l, lr.candidates);
    if (fv.size() == 0) continue;
    if (fv.level != l || fv.channels() != levels[l].channels()) {
      throw std::invalid_argument("fuse_fragment_global: fragment volume does not match level");
    }
    lr.active = fv.keys;
    const Rulebook rules = Rulebook::build(fv.keys);
    const Matrix surface = levels[l].extract_surface_feature(rules, fv.features, threads);

    Matrix hidden = Matrix::Zero(fv.features.rows(), levels[l].channels());
    for (std::size_t i = 0; i < fv.keys.size(); ++i) {
      if (const Eigen::VectorXf* h = model.hidden[l].find(fv.keys[i])) {
        hidden.row(static_cast<Eigen::Index>(i)) = h->transpose();
      }
    }
    hidden = levels[l].gru_update(rules, hidden, surface, threads);
    const Predictions pred = levels[l].predict(hidden);

    volume::SparseVolume<Eigen::VectorXf> local_hidden(l);
    volume::SparseVolume<float> local_occ(l);
    volume::SparseVolume<volume::TsdfVoxel> local_tsdf(l);
    local_hidden.reserve(fv.size());
    local_occ.reserve(fv.size());
    local_tsdf.reserve(fv.size());
    for (std::size_t i = 0; i < fv.keys.size(); ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      local_hidden.insert_or_assign(fv.keys[i], hidden.row(row).transpose());
      local_occ.insert_or_assign(fv.keys[i], pred.occupancy[row]);
      local_tsdf.insert_or_assign(fv.keys[i], volume::TsdfVoxel{pred.tsdf[row], 0.0f});
      if (pred.occupancy[row] >= theta) lr.occupied.push_back(fv.keys[i]);
    }
    volume::merge_local_into_global(local_hidden, model.hidden[l]);
    volume::merge_local_into_global(local_occ, model.occupancy[l]);
    volume::merge_local_into_global(local_tsdf, model.tsdf[l]);
    fragment_occ = std::move(local_occ);
  }
  return report;
}

FragmentReport fuse_fragment_global(const std::array<FeatureVolume, volume::kLevels>& fragment,
                                    std::span<const LevelFusion> levels, GlobalModel& model, double theta,
                                    int threads) {
  const FragmentFeatureProvider restrict_to = [&](int level, const KeyList& candidates) {
    const FeatureVolume& src = fragment[level];
    FeatureVolume out;
    out.level = level;
    std::vector<Eigen::Index> rows;
    for (const auto& k : candidates) {
      const Eigen::Index r = src.find(k);
      if (r >= 0) {
        rows.push_back(r);
        out.keys.push_back(k);
      }
    }
    out.features.resize(static_cast<Eigen::Index>(rows.size()), src.channels());
    for (std::size_t i = 0; i < rows.size(); ++i) out.features.row(static_cast<Eigen::Index>(i)) = src.features.row(rows[i]);
    return out;
  };
  return fuse_fragment_global(fragment[0].keys, restrict_to, levels, model, theta, threads);
}

std::size_t classical_fusion_step(std::span<const DepthView> views, volume::SparseVolume<volume::TsdfVoxel>& global,
                                  const volume::GridSpec& spec, const ClassicalFusionOptions& opts) {
  if (views.empty()) return 0;
  if (!(opts.truncation > 0.0)) throw std::invalid_argument("classical fusion: truncation must be positive");
  const int level = global.level();
  std::vector<geom::Camera> cameras;
  cameras.reserve(views.size());
  for (const auto& v : views) cameras.push_back(v.camera);
  const KeyList keys = volume::allocate_fragment_keys(spec, level, cameras, opts.max_depth);

  std::vector<volume::TsdfVoxel> fused(keys.size());
  parallel_chunks(keys.size(), 4096, opts.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const Vec3 center = volume::key_center(spec, keys[i]);
      volume::TsdfVoxel acc{0.0f, 0.0f};
      for (const auto& view : views) {
        const auto proj = geom::project(view.camera.K, view.camera.pose, center);
        if (!proj) continue;
        const int x = static_cast<int>(std::floor(proj->pixel.u));
        const int y = static_cast<int>(std::floor(proj->pixel.v));
        if (!view.depth.in_bounds(x, y)) continue;
        const double depth = view.depth(x, y);
        if (!has_depth(depth)) continue;
        const double sdf = depth - proj->depth;
        if (sdf < -opts.truncation) continue;
        const double obs = std::min(1.0, sdf / opts.truncation);
        acc.tsdf = static_cast<float>((acc.weight * acc.tsdf + obs) / (acc.weight + 1.0f));
        acc.weight += 1.0f;
      }
      fused[i] = acc;
    }
  });

  volume::SparseVolume<volume::TsdfVoxel> local(level);
  std::size_t updated = 0;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (fused[i].weight > 0.0f) {
      local.insert_or_assign(keys[i], fused[i]);
      ++updated;
    }
  }
  volume::merge_local_into_global(local, global, &volume::combine_weighted);
  return updated;
}

}  // namespace sst::gstf
