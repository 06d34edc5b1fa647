#include "sst/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "sst/parallel.hpp"

namespace sst::eval {

namespace {

constexpr std::int32_t kLeafSize = 8;

double fscore(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

KdTree::KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
  if (points_.empty()) return;
  nodes_.reserve(2 * points_.size() / kLeafSize + 2);
  nodes_.push_back({});
  build(0, 0, static_cast<std::int32_t>(points_.size()));
}

void KdTree::build(std::int32_t node, std::int32_t begin, std::int32_t end) {
  nodes_[node].begin = begin;
  nodes_[node].end = end;
  if (end - begin <= kLeafSize) return;
  Eigen::AlignedBox3d box;
  for (std::int32_t i = begin; i < end; ++i) box.extend(points_[i]);
  int axis = 0;
  box.sizes().maxCoeff(&axis);
  const std::int32_t mid = begin + (end - begin) / 2;
  std::nth_element(points_.begin() + begin, points_.begin() + mid, points_.begin() + end,
                   [axis](const Vec3& a, const Vec3& b) { return a[axis] < b[axis]; });
  const auto left = static_cast<std::int32_t>(nodes_.size());
  nodes_[node].axis = axis;
  nodes_[node].split = points_[mid][axis];
  nodes_[node].left = left;
  nodes_.push_back({});
  nodes_.push_back({});
  // Left holds coordinates <= split, right holds >= split.
  build(left, begin, mid);
  build(left + 1, mid, end);
}

void KdTree::search(std::int32_t node_index, const Vec3& q, double& best_sq) const {
  const Node& node = nodes_[node_index];
  if (node.left < 0) {
    for (std::int32_t i = node.begin; i < node.end; ++i) best_sq = std::min(best_sq, (points_[i] - q).squaredNorm());
    return;
  }
  const double diff = q[node.axis] - node.split;
  const std::int32_t near = diff <= 0.0 ? node.left : node.left + 1;
  const std::int32_t far = diff <= 0.0 ? node.left + 1 : node.left;
  search(near, q, best_sq);
  if (diff * diff <= best_sq) search(far, q, best_sq);
}

double KdTree::nearest_distance(const Vec3& q) const {
  if (nodes_.empty()) throw std::logic_error("nearest_distance on an empty tree");
  double best_sq = std::numeric_limits<double>::infinity();
  search(0, q, best_sq);
  return std::sqrt(best_sq);
}

std::vector<double> nearest_distances(std::span<const Vec3> queries, std::span<const Vec3> reference, int threads) {
  if (reference.empty()) throw std::invalid_argument("nearest_distances: empty reference set");
  const KdTree tree(reference);
  std::vector<double> out(queries.size());
  parallel_chunks(queries.size(), 4096, threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) out[i] = tree.nearest_distance(queries[i]);
  });
  return out;
}

MetricsReport3D metrics_3d(std::span<const Vec3> pred, std::span<const Vec3> gt, double tau, int threads) {
  if (pred.empty() || gt.empty()) throw std::invalid_argument("metrics_3d: empty point set");
  const std::vector<double> d_pred = nearest_distances(pred, gt, threads);
  const std::vector<double> d_gt = nearest_distances(gt, pred, threads);
  MetricsReport3D r;
  r.tau = tau;
  double sum = 0.0;
  std::size_t hits = 0;
  for (const double d : d_pred) {
    sum += d;
    hits += d < tau ? 1 : 0;
  }
  r.acc = sum / static_cast<double>(d_pred.size());
  r.prec = static_cast<double>(hits) / static_cast<double>(d_pred.size());
  sum = 0.0;
  hits = 0;
  for (const double d : d_gt) {
    sum += d;
    hits += d < tau ? 1 : 0;
  }
  r.comp = sum / static_cast<double>(d_gt.size());
  r.recall = static_cast<double>(hits) / static_cast<double>(d_gt.size());
  r.fscore = fscore(r.prec, r.recall);
  return r;
}

MetricsReport2D metrics_2d(const DepthMap& pred, const DepthMap& gt, const Image<std::uint8_t>* mask) {
  if (!pred.same_shape(gt)) throw std::invalid_argument("metrics_2d: shape mismatch");
  if (mask && (mask->width != gt.width || mask->height != gt.height)) {
    throw std::invalid_argument("metrics_2d: mask shape mismatch");
  }
  std::size_t valid = 0;
  std::size_t covered = 0;
  std::size_t good = 0;
  double abs_rel = 0.0, abs_diff = 0.0, sq_rel = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < gt.data.size(); ++i) {
    const double g = gt.data[i];
    if (!(g > 0.0) || (mask && mask->data[i] == 0)) continue;
    ++valid;
    const double p = pred.data[i];
    if (!(p > 0.0)) continue;
    ++covered;
    const double diff = p - g;
    abs_rel += std::abs(diff) / g;
    abs_diff += std::abs(diff);
    sq_rel += diff * diff / g;
    sq += diff * diff;
    if (std::max(p / g, g / p) < 1.25) ++good;
  }
  if (valid == 0) throw std::invalid_argument("metrics_2d: no valid pixels");
  MetricsReport2D r;
  r.valid_pixels = valid;
  r.coverage = static_cast<double>(covered) / static_cast<double>(valid);
  r.delta_125 = static_cast<double>(good) / static_cast<double>(valid);
  if (covered > 0) {
    const auto n = static_cast<double>(covered);
    r.abs_rel = abs_rel / n;
    r.abs_diff = abs_diff / n;
    r.sq_rel = sq_rel / n;
    r.rmse = std::sqrt(sq / n);
  }
  return r;
}

MetricsReport2D average(std::span<const MetricsReport2D> views) {
  MetricsReport2D r;
  if (views.empty()) return r;
  std::size_t with_error = 0;
  for (const auto& v : views) {
    r.delta_125 += v.delta_125;
    r.coverage += v.coverage;
    r.valid_pixels += v.valid_pixels;
    if (v.coverage > 0.0) {
      ++with_error;
      r.abs_rel += v.abs_rel;
      r.abs_diff += v.abs_diff;
      r.sq_rel += v.sq_rel;
      r.rmse += v.rmse;
    }
  }
  const auto n = static_cast<double>(views.size());
  r.delta_125 /= n;
  r.coverage /= n;
  if (with_error > 0) {
    const auto m = static_cast<double>(with_error);
    r.abs_rel /= m;
    r.abs_diff /= m;
    r.sq_rel /= m;
    r.rmse /= m;
  }
  return r;
}

LossValue loss_occupancy(const Eigen::VectorXd& pred, const Eigen::VectorXd& gt) {
  if (pred.size() != gt.size() || pred.size() == 0) throw std::invalid_argument("loss_occupancy: size mismatch");
  const auto n = static_cast<double>(pred.size());
  LossValue out;
  out.gradient.resize(pred.size());
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const double p = pred[i];
    const double g = gt[i];
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("loss_occupancy: prediction must lie in (0, 1)");
    out.value -= g * std::log(p) + (1.0 - g) * std::log1p(-p);
    out.gradient[i] = (p - g) / (p * (1.0 - p)) / n;
  }
  out.value /= n;
  return out;
}

double log_transform(double t) noexcept { return std::copysign(std::log1p(std::abs(t)), t); }

double log_transform_derivative(double t) noexcept { return 1.0 / (1.0 + std::abs(t)); }

LossValue loss_tsdf(const Eigen::VectorXd& pred, const Eigen::VectorXd& gt) {
  if (pred.size() != gt.size() || pred.size() == 0) throw std::invalid_argument("loss_tsdf: size mismatch");
  const auto n = static_cast<double>(pred.size());
  LossValue out;
  out.gradient.resize(pred.size());
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const double diff = log_transform(pred[i]) - log_transform(gt[i]);
    out.value += std::abs(diff);
    const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    out.gradient[i] = sign * log_transform_derivative(pred[i]) / n;
  }
  out.value /= n;
  return out;
}

double grad_check(const ScalarFn& f, const GradientFn& grad, const Eigen::VectorXd& x, double h) {
  const Eigen::VectorXd analytic = grad(x);
  double worst = 0.0;
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    const double numeric = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-12});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / scale);
  }
  return worst;
}

std::vector<Vec3> sample_points(const surface::Mesh& mesh, double density, std::uint64_t seed) {
  if (!(density > 0.0)) throw std::invalid_argument("sample_points: density must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(mesh.area() * density) + mesh.triangles.size());
  for (const auto& t : mesh.triangles) {
    const Vec3& a = mesh.vertices[t[0]];
    const Vec3& b = mesh.vertices[t[1]];
    const Vec3& c = mesh.vertices[t[2]];
    const double expected = 0.5 * (b - a).cross(c - a).norm() * density;
    // Stochastic rounding keeps the expected count exact on small triangles.
    auto count = static_cast<std::size_t>(expected);
    if (unit(rng) < expected - static_cast<double>(count)) ++count;
    for (std::size_t k = 0; k < count; ++k) {
      const double r1 = std::sqrt(unit(rng));
      const double r2 = unit(rng);
      out.push_back((1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c);
    }
  }
  return out;
}

nlohmann::json to_json(const MetricsReport3D& r) {
  return {{"acc_m", r.acc}, {"comp_m", r.comp}, {"prec", r.prec},
          {"recall", r.recall},          {"fscore", r.fscore},            {"tau_m", r.tau}};
}

nlohmann::json to_json(const MetricsReport2D& r) {
  return {{"abs_rel", r.abs_rel}, {"abs_diff_m", r.abs_diff}, {"sq_rel_m", r.sq_rel}, {"rmse_m", r.rmse},
          {"delta_125", r.delta_125}, {"coverage", r.coverage}, {"valid_pixels", r.valid_pixels}};
}

}  // namespace sst::eval
