#include "sst/priors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "sst/errors.hpp"

namespace sst::priors {

std::size_t GeometryPrior::support_size() const {
  return static_cast<std::size_t>(std::count_if(depth.data.begin(), depth.data.end(), has_depth));
}

GeometryPrior GeometryPrior::empty(int width, int height) {
  return {SparseDepthMap(width, height, kMissingDepth), ConfidenceMap(width, height, 0.0),
          ErrorMap(width, height, kMissingError)};
}

ConfidenceMap confidence_from_error(const ErrorMap& error, double lambda_conf) {
  if (!(lambda_conf > 0.0)) throw std::invalid_argument("confidence lambda must be positive");
  ConfidenceMap co(error.width, error.height, 0.0);
  for (std::size_t i = 0; i < error.data.size(); ++i) {
    const double e = error.data[i];
    if (e >= 0.0) co.data[i] = std::exp(-lambda_conf * e);
  }
  return co;
}

GeometryPrior make_prior(const SparseDepthMap& depth, const ErrorMap& error, double lambda_conf,
                         double max_depth) {
  if (!depth.same_shape(error)) throw std::invalid_argument("make_prior: depth and error maps differ in size");
  GeometryPrior prior = GeometryPrior::empty(depth.width, depth.height);
  for (std::size_t i = 0; i < depth.data.size(); ++i) {
    const bool d_present = has_depth(depth.data[i]);
    const bool e_present = error.data[i] >= 0.0;
    if (d_present != e_present) throw std::invalid_argument("make_prior: depth and error support differ");
    if (d_present && depth.data[i] <= max_depth) {
      prior.depth.data[i] = depth.data[i];
      prior.error.data[i] = error.data[i];
    }
  }
  prior.confidence = confidence_from_error(prior.error, lambda_conf);
  return prior;
}

std::pair<SparseDepthMap, ErrorMap> simulate_slam_priors(const DepthMap& gt_depth, const SimulationOptions& opts) {
  if (opts.n_points < 0) throw std::invalid_argument("n_points must be non-negative");
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < gt_depth.data.size(); ++i) {
    if (has_depth(gt_depth.data[i])) valid.push_back(i);
  }
  if (static_cast<std::size_t>(opts.n_points) > valid.size()) {
    throw std::invalid_argument("simulate_slam_priors: more points requested than valid depth pixels");
  }
  SparseDepthMap sd(gt_depth.width, gt_depth.height, kMissingDepth);
  ErrorMap err(gt_depth.width, gt_depth.height, kMissingError);
  if (opts.n_points == 0) return {sd, err};

  std::mt19937_64 rng(opts.seed);
  std::vector<std::size_t> picked;
  picked.reserve(opts.n_points);
  std::sample(valid.begin(), valid.end(), std::back_inserter(picked), opts.n_points, rng);

  std::normal_distribution<double> depth_noise(0.0, 1.0);
  std::vector<double> noise(picked.size());
  for (auto& n : noise) n = opts.depth_noise_sigma * depth_noise(rng);
  std::normal_distribution<double> error_draw(0.0, 1.0);
  std::vector<double> errors(picked.size());
  for (auto& e : errors) e = std::abs(opts.error_scale * error_draw(rng));
  std::sort(errors.begin(), errors.end());

  // The k-th smallest |noise| receives the k-th smallest error.
  std::vector<std::size_t> order(picked.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(noise[a]) < std::abs(noise[b]); });
  constexpr double kMinDepth = 1e-3;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const std::size_t j = order[rank];
    const std::size_t pix = picked[j];
    sd.data[pix] = std::max(gt_depth.data[pix] + noise[j], kMinDepth);
    err.data[pix] = errors[rank];
  }
  return {sd, err};
}

void write_prior_file(std::ostream& out, const SparseDepthMap& depth, const ErrorMap& error) {
  if (!depth.same_shape(error)) throw std::invalid_argument("prior file: map sizes differ");
  out << "# " << depth.width << ' ' << depth.height << '\n';
  out << std::setprecision(17);
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      if (has_depth(depth(x, y))) out << x << ' ' << y << ' ' << depth(x, y) << ' ' << error(x, y) << '\n';
    }
  }
}

void write_prior_file(const std::string& path, const SparseDepthMap& depth, const ErrorMap& error) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  write_prior_file(out, depth, error);
}

std::pair<SparseDepthMap, ErrorMap> read_prior_file(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InputError("prior file: missing header");
  std::istringstream header(line);
  char hash = 0;
  int w = 0, h = 0;
  if (!(header >> hash >> w >> h) || hash != '#' || w <= 0 || h <= 0) {
    throw InputError("prior file: bad header '" + line + "'");
  }
  SparseDepthMap sd(w, h, kMissingDepth);
  ErrorMap err(w, h, kMissingError);
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream rec(line);
    double u = 0, v = 0, d = 0, e = 0;
    if (!(rec >> u >> v >> d >> e)) throw InputError("prior file: bad record at line " + std::to_string(lineno));
    const int x = static_cast<int>(std::floor(u));
    const int y = static_cast<int>(std::floor(v));
    if (!sd.in_bounds(x, y) || !(d > 0.0) || e < 0.0) {
      throw InputError("prior file: invalid record at line " + std::to_string(lineno));
    }
    sd(x, y) = d;
    err(x, y) = e;
  }
  return {sd, err};
}

std::pair<SparseDepthMap, ErrorMap> read_prior_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return read_prior_file(in);
}

}  // namespace sst::priors
