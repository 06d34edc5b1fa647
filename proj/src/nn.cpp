#include "sst/nn.hpp"

#include <fstream>
#include <functional>
#include <random>
#include <stdexcept>

#include "binio.hpp"
#include "sst/errors.hpp"
#include "sst/parallel.hpp"

namespace sst::nn {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
  std::size_t n = 1;
  for (const int d : shape) {
    if (d < 0) throw std::invalid_argument("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  data.assign(n, 0.0f);
}

const Tensor& WeightStore::get(const std::string& name, const std::vector<int>& shape) const {
  const Tensor* t = find(name);
  if (!t) throw std::invalid_argument("missing weight tensor '" + name + "'");
  if (t->shape != shape) {
    throw std::invalid_argument("weight tensor '" + name + "' has shape " + shape_str(t->shape) + ", expected " +
                                shape_str(shape));
  }
  return *t;
}

const Tensor* WeightStore::find(const std::string& name) const {
  const auto it = layers_.find(name);
  return it == layers_.end() ? nullptr : &it->second;
}

Tensor& WeightStore::mutable_tensor(const std::string& name) {
  const auto it = layers_.find(name);
  if (it == layers_.end()) throw std::invalid_argument("missing weight tensor '" + name + "'");
  return it->second;
}

void WeightStore::add_uniform(const std::string& name, std::vector<int> shape, int fan_in, std::uint64_t seed) {
  Tensor t(std::move(shape));
  std::mt19937_64 rng(seed ^ fnv1a(name));
  const float k = 1.0f / std::sqrt(static_cast<float>(std::max(fan_in, 1)));
  std::uniform_real_distribution<float> dist(-k, k);
  for (auto& v : t.data) v = dist(rng);
  layers_[name] = std::move(t);
}

void WeightStore::fill_biases(float value) {
  for (auto& [name, t] : layers_) {
    if (ends_with(name, "bias")) std::fill(t.data.begin(), t.data.end(), value);
  }
}

void write_sstw(std::ostream& out, const WeightStore& store) {
  binio::put_magic(out, "SSTW");
  binio::put<std::uint32_t>(out, kSstwVersion);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, t] : store.layers()) {
    binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (const int d : t.shape) binio::put<std::int32_t>(out, d);
    for (const float v : t.data) binio::put<float>(out, v);
  }
}

void write_sstw(const std::string& path, const WeightStore& store) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  write_sstw(out, store);
}

WeightStore read_sstw(std::istream& in) {
  binio::expect_magic(in, "SSTW");
  if (binio::get<std::uint32_t>(in) != kSstwVersion) throw InputError("unsupported SSTW version");
  const auto count = binio::get<std::uint32_t>(in);
  WeightStore store;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = binio::get<std::uint32_t>(in);
    if (len > 4096) throw InputError("SSTW layer name too long");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw InputError("unexpected end of SSTW stream");
    const auto rank = binio::get<std::uint32_t>(in);
    if (rank > 8) throw InputError("SSTW tensor rank too large");
    std::vector<int> shape(rank);
    for (auto& d : shape) {
      d = binio::get<std::int32_t>(in);
      if (d < 0) throw InputError("SSTW negative dimension");
    }
    Tensor t(shape);
    for (auto& v : t.data) v = binio::get<float>(in);
    store.set(name, std::move(t));
  }
  return store;
}

WeightStore read_sstw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return read_sstw(in);
}

Conv2d Conv2d::bind(const WeightStore& store, const std::string& name, int c_in, int c_out, int stride) {
  Conv2d c;
  c.weight = &store.get(name + ".weight", {3, 3, c_in, c_out});
  c.bias = &store.get(name + ".bias", {c_out});
  c.c_in = c_in;
  c.c_out = c_out;
  c.stride = stride;
  return c;
}

FeatureMap Conv2d::forward(const FeatureMap& in, float gain, int threads) const {
  if (in.channels != c_in) throw std::invalid_argument("conv2d: channel mismatch");
  if (in.width % stride != 0 || in.height % stride != 0) {
    throw std::invalid_argument("conv2d: input size not divisible by stride");
  }
  FeatureMap out(in.height / stride, in.width / stride, c_out, in.scale);
  const Eigen::Map<const VectorXf> b(bias->data.data(), c_out);
  parallel_chunks(static_cast<std::size_t>(out.height), 4, threads, [&](std::size_t y0, std::size_t y1) {
    Eigen::VectorXf acc(c_out);
    for (int oy = static_cast<int>(y0); oy < static_cast<int>(y1); ++oy) {
      for (int ox = 0; ox < out.width; ++ox) {
        acc.setZero();
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= in.height) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * stride + kx - 1;
            if (ix < 0 || ix >= in.width) continue;
            const Eigen::Map<const RowMatrixXf> w(weight->data.data() + (ky * 3 + kx) * c_in * c_out, c_in,
                                                  c_out);
            const Eigen::Map<const Eigen::RowVectorXf> x(in.pixel(ix, iy), c_in);
            acc.transpose().noalias() += x * w;
          }
        }
        float* o = out.pixel(ox, oy);
        for (int c = 0; c < c_out; ++c) o[c] = leaky_relu(gain * (acc[c] + b[c]));
      }
    }
  });
  return out;
}

Linear Linear::bind(const WeightStore& store, const std::string& name, int in, int out) {
  Linear l;
  l.weight = &store.get(name + ".weight", {out, in});
  l.bias = &store.get(name + ".bias", {out});
  l.in = in;
  l.out = out;
  return l;
}

FeatureMap avg_pool(const FeatureMap& in, int factor) {
  if (factor <= 0 || in.width % factor != 0 || in.height % factor != 0) {
    throw std::invalid_argument("avg_pool: size not divisible by factor");
  }
  if (factor == 1) return in;
  FeatureMap out(in.height / factor, in.width / factor, in.channels, in.scale);
  const float inv = 1.0f / static_cast<float>(factor * factor);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      float* o = out.pixel(x, y);
      for (int dy = 0; dy < factor; ++dy)
        for (int dx = 0; dx < factor; ++dx) {
          const float* p = in.pixel(x * factor + dx, y * factor + dy);
          for (int c = 0; c < in.channels; ++c) o[c] += p[c];
        }
      for (int c = 0; c < in.channels; ++c) o[c] *= inv;
    }
  return out;
}

}  // namespace sst::nn
