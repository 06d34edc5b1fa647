#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace sst::nn {

using RowMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VectorXf = Eigen::VectorXf;

inline constexpr float kLeakySlope = 0.01f;

inline float leaky_relu(float x) noexcept { return x > 0.0f ? x : kLeakySlope * x; }
inline float sigmoid(float x) noexcept { return 1.0f / (1.0f + std::exp(-x)); }

struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s);
  [[nodiscard]] std::size_t numel() const noexcept { return data.size(); }
  bool operator==(const Tensor&) const = default;
};

/// Named parameter tensors. Every model component reads its layers from here,
/// so one SSTW file holds the whole network.
class WeightStore {
 public:
  /// Throws std::invalid_argument when absent or shaped differently.
  [[nodiscard]] const Tensor& get(const std::string& name, const std::vector<int>& shape) const;
  [[nodiscard]] const Tensor* find(const std::string& name) const;
  Tensor& mutable_tensor(const std::string& name);
  void set(const std::string& name, Tensor t) { layers_[name] = std::move(t); }
  [[nodiscard]] bool contains(const std::string& name) const { return layers_.count(name) != 0; }
  [[nodiscard]] std::size_t size() const noexcept { return layers_.size(); }
  [[nodiscard]] const std::map<std::string, Tensor>& layers() const noexcept { return layers_; }

  /// Adds a tensor drawn from uniform(-k, k), k = 1/sqrt(fan_in). The stream is
  /// derived from (seed, name), so adding layers never perturbs other layers.
  void add_uniform(const std::string& name, std::vector<int> shape, int fan_in, std::uint64_t seed);
  /// Sets every tensor whose name ends with "bias" to `value`.
  void fill_biases(float value);

  bool operator==(const WeightStore&) const = default;

 private:
  std::map<std::string, Tensor> layers_;
};

// SSTW: "SSTW", u32 version, u32 layer count, then per layer
// u32 name length + bytes, u32 rank + i32 dims, f32 data.
inline constexpr std::uint32_t kSstwVersion = 1;
void write_sstw(std::ostream& out, const WeightStore& store);
void write_sstw(const std::string& path, const WeightStore& store);
[[nodiscard]] WeightStore read_sstw(std::istream& in);
[[nodiscard]] WeightStore read_sstw(const std::string& path);

/// Dense HWC feature map.
struct FeatureMap {
  int height{0};
  int width{0};
  int channels{0};
  int scale{0};  ///< pyramid level this map feeds
  std::vector<float> data;

  FeatureMap() = default;
  FeatureMap(int h, int w, int c, int level = 0)
      : height(h), width(w), channels(c), scale(level), data(static_cast<std::size_t>(h) * w * c, 0.0f) {}

  [[nodiscard]] float* pixel(int x, int y) noexcept {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * channels;
  }
  [[nodiscard]] const float* pixel(int x, int y) const noexcept {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * channels;
  }
  bool operator==(const FeatureMap&) const = default;
};

/// 3x3 convolution, zero padding 1. Weight shape [3, 3, c_in, c_out].
struct Conv2d {
  const Tensor* weight{nullptr};
  const Tensor* bias{nullptr};
  int c_in{0};
  int c_out{0};
  int stride{1};

  static Conv2d bind(const WeightStore& store, const std::string& name, int c_in, int c_out, int stride);
  [[nodiscard]] FeatureMap forward(const FeatureMap& in, float gain, int threads) const;
};

/// y = W x + b, weight shape [out, in].
struct Linear {
  const Tensor* weight{nullptr};
  const Tensor* bias{nullptr};
  int in{0};
  int out{0};

  static Linear bind(const WeightStore& store, const std::string& name, int in, int out);
  [[nodiscard]] Eigen::Map<const RowMatrixXf> w() const { return {weight->data.data(), out, in}; }
  [[nodiscard]] Eigen::Map<const VectorXf> b() const { return {bias->data.data(), out}; }
  [[nodiscard]] VectorXf forward(const Eigen::Ref<const VectorXf>& x) const { return w() * x + b(); }
};

/// Average pooling by an integer factor.
[[nodiscard]] FeatureMap avg_pool(const FeatureMap& in, int factor);

}  // namespace sst::nn
