#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace sst {

/// Row-major single-channel image.
template <class T>
struct Image {
  int width{0};
  int height{0};
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, T fill = T{}) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {
    if (w < 0 || h < 0) throw std::invalid_argument("negative image size");
  }

  [[nodiscard]] std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * width + x;
  }
  T& operator()(int x, int y) noexcept { return data[index(x, y)]; }
  const T& operator()(int x, int y) const noexcept { return data[index(x, y)]; }
  [[nodiscard]] bool in_bounds(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width && y < height;
  }
  [[nodiscard]] bool same_shape(const Image& o) const noexcept {
    return width == o.width && height == o.height;
  }
  bool operator==(const Image&) const = default;
};

/// Depth in meters; kMissingDepth marks pixels without a measurement.
using DepthMap = Image<double>;
inline constexpr double kMissingDepth = -1.0;

[[nodiscard]] inline bool has_depth(double d) noexcept { return d > 0.0; }

}  // namespace sst
