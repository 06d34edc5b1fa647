#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "sst/geom.hpp"
#include "sst/image.hpp"
#include "sst/surface.hpp"
#include "json.hpp"

namespace sst::eval {

struct MetricsReport3D {
  double acc{0.0};   ///< mean pred -> gt distance, meters
  double comp{0.0};  ///< mean gt -> pred distance, meters
  double prec{0.0};
  double recall{0.0};
  double fscore{0.0};
  double tau{0.05};
};

struct MetricsReport2D {
  double abs_rel{0.0};
  double abs_diff{0.0};
  double sq_rel{0.0};
  double rmse{0.0};
  double delta_125{0.0};
  double coverage{0.0};  ///< fraction of valid pixels with a prediction
  std::size_t valid_pixels{0};
};

/// Exact nearest-neighbor index over a fixed point set.
class KdTree {
 public:
  explicit KdTree(std::span<const Vec3> points);
  /// Euclidean distance to the nearest stored point. The tree must be non-empty.
  [[nodiscard]] double nearest_distance(const Vec3& q) const;
  [[nodiscard]] std::size_t size() const noexcept { return points_.size(); }

 private:
  struct Node {
    std::int32_t begin{0};
    std::int32_t end{0};
    std::int32_t left{-1};
    int axis{0};
    double split{0.0};
  };
  void build(std::int32_t node, std::int32_t begin, std::int32_t end);
  void search(std::int32_t node, const Vec3& q, double& best_sq) const;

  std::vector<Vec3> points_;
  std::vector<Node> nodes_;
};

/// Distance from every query to its nearest reference point.
[[nodiscard]] std::vector<double> nearest_distances(std::span<const Vec3> queries, std::span<const Vec3> reference,
                                                    int threads = 1);

/// Throws std::invalid_argument when either set is empty.
[[nodiscard]] MetricsReport3D metrics_3d(std::span<const Vec3> pred, std::span<const Vec3> gt, double tau = 0.05,
                                         int threads = 1);

/// Valid pixels have gt > 0 and a non-zero mask entry (no mask: all). Pixels
/// without a prediction fail delta and are excluded from the error means.
/// Throws std::invalid_argument when nothing is valid.
[[nodiscard]] MetricsReport2D metrics_2d(const DepthMap& pred, const DepthMap& gt,
                                         const Image<std::uint8_t>* mask = nullptr);

/// Mean of per-view reports (views with no covered pixel contribute only to
/// delta and coverage).
[[nodiscard]] MetricsReport2D average(std::span<const MetricsReport2D> views);

struct LossValue {
  double value{0.0};
  Eigen::VectorXd gradient;  ///< d value / d pred
};

/// Mean binary cross-entropy. Throws std::invalid_argument unless every
/// prediction lies strictly inside (0, 1) and sizes match.
[[nodiscard]] LossValue loss_occupancy(const Eigen::VectorXd& pred, const Eigen::VectorXd& gt);

/// phi(t) = sign(t) ln(1 + |t|).
[[nodiscard]] double log_transform(double t) noexcept;
[[nodiscard]] double log_transform_derivative(double t) noexcept;

/// Mean |phi(pred) - phi(gt)|; subgradient 0 at ties.
[[nodiscard]] LossValue loss_tsdf(const Eigen::VectorXd& pred, const Eigen::VectorXd& gt);

using ScalarFn = std::function<double(const Eigen::VectorXd&)>;
using GradientFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Largest per-coordinate relative error between the analytic gradient and
/// central finite differences with step h.
[[nodiscard]] double grad_check(const ScalarFn& f, const GradientFn& grad, const Eigen::VectorXd& x,
                                double h = 1e-5);

/// Uniform area-weighted surface samples, `density` points per square meter.
[[nodiscard]] std::vector<Vec3> sample_points(const surface::Mesh& mesh, double density, std::uint64_t seed);

[[nodiscard]] nlohmann::json to_json(const MetricsReport3D& r);
[[nodiscard]] nlohmann::json to_json(const MetricsReport2D& r);

}  // namespace sst::eval
