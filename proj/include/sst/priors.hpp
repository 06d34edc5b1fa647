#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>

#include "sst/image.hpp"

namespace sst::priors {

/// Sparse SLAM depth; kMissingDepth where no map point projects.
using SparseDepthMap = DepthMap;
/// Reprojection error in pixels; kMissingError where no depth.
using ErrorMap = Image<double>;
/// Per-pixel confidence in (0, 1], exactly 0 where depth is missing.
using ConfidenceMap = Image<double>;

inline constexpr double kMissingError = -1.0;
inline constexpr double kDefaultMaxDepth = 3.0;

/// Two-channel geometry prior (depth, confidence). The reprojection error is
/// kept alongside because the explicit spatial weight needs it.
struct GeometryPrior {
  SparseDepthMap depth;
  ConfidenceMap confidence;
  ErrorMap error;

  [[nodiscard]] int width() const noexcept { return depth.width; }
  [[nodiscard]] int height() const noexcept { return depth.height; }
  [[nodiscard]] std::size_t support_size() const;
  static GeometryPrior empty(int width, int height);
};

/// CO = exp(-lambda * E) where E is present, 0 elsewhere. Throws for lambda <= 0.
[[nodiscard]] ConfidenceMap confidence_from_error(const ErrorMap& error, double lambda_conf);

/// Drops depths beyond max_depth and assembles the prior. Throws when depth and
/// error maps disagree in shape or support.
[[nodiscard]] GeometryPrior make_prior(const SparseDepthMap& depth, const ErrorMap& error, double lambda_conf,
                                       double max_depth = kDefaultMaxDepth);

struct SimulationOptions {
  int n_points{200};
  double depth_noise_sigma{0.01};  ///< meters
  double error_scale{1.0};         ///< pixels
  std::uint64_t seed{0};
};

/// Samples n_points pixels with valid ground truth (without replacement), adds
/// Gaussian depth noise and draws reprojection errors whose ranks follow the
/// magnitude of the injected depth error. Throws when too few valid pixels.
[[nodiscard]] std::pair<SparseDepthMap, ErrorMap> simulate_slam_priors(const DepthMap& gt_depth,
                                                                       const SimulationOptions& opts);

// Text format: "# width height" header, then one "u v depth error" record per line.
void write_prior_file(std::ostream& out, const SparseDepthMap& depth, const ErrorMap& error);
void write_prior_file(const std::string& path, const SparseDepthMap& depth, const ErrorMap& error);
[[nodiscard]] std::pair<SparseDepthMap, ErrorMap> read_prior_file(std::istream& in);
[[nodiscard]] std::pair<SparseDepthMap, ErrorMap> read_prior_file(const std::string& path);

}  // namespace sst::priors
