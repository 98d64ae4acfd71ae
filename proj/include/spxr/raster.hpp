#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spxr/error.hpp"

namespace spxr {

/// Axis-aligned pixel rectangle; [x, x+w) x [y, y+h).
struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  bool empty() const { return w <= 0 || h <= 0; }
  int x_end() const { return x + w; }
  int y_end() const { return y + h; }
  long long area() const { return empty() ? 0 : static_cast<long long>(w) * h; }
  bool contains(int px, int py) const { return px >= x && px < x + w && py >= y && py < y + h; }

  friend bool operator==(const Rect&, const Rect&) = default;
};

inline Rect intersect(const Rect& a, const Rect& b) {
  const int x0 = std::max(a.x, b.x);
  const int y0 = std::max(a.y, b.y);
  const int x1 = std::min(a.x_end(), b.x_end());
  const int y1 = std::min(a.y_end(), b.y_end());
  if (x1 <= x0 || y1 <= y0) return Rect{x0, y0, 0, 0};
  return Rect{x0, y0, x1 - x0, y1 - y0};
}

/// Smallest rectangle covering both; an empty operand is ignored.
inline Rect unite(const Rect& a, const Rect& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  const int x0 = std::min(a.x, b.x);
  const int y0 = std::min(a.y, b.y);
  return Rect{x0, y0, std::max(a.x_end(), b.x_end()) - x0, std::max(a.y_end(), b.y_end()) - y0};
}

/// RGB image with channels in [0,1], row-major, channel-fastest.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  RgbImage() = default;
  RgbImage(int w, int h, float fill = 0.0f)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  float* pixel(std::size_t i) { return data.data() + 3 * i; }
  const float* pixel(std::size_t i) const { return data.data() + 3 * i; }
  float* pixel(int x, int y) { return pixel(static_cast<std::size_t>(y) * width + x); }
  const float* pixel(int x, int y) const { return pixel(static_cast<std::size_t>(y) * width + x); }

  void validate() const {
    require(width >= 0 && height >= 0 && data.size() == pixel_count() * 3, Errc::dimension_mismatch,
            "rgb image: data length does not match dimensions");
    for (float v : data)
      require(v >= 0.0f && v <= 1.0f, Errc::invalid_argument, "rgb image: channel outside [0,1]");
  }
};

/// Per-pixel D-dimensional feature vectors, row-major, channel-fastest.
struct FeatureMap {
  int width = 0;
  int height = 0;
  int dim = 1;
  std::vector<float> data;

  FeatureMap() = default;
  FeatureMap(int w, int h, int d, float fill = 0.0f)
      : width(w), height(h), dim(d), data(static_cast<std::size_t>(w) * h * d, fill) {}

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  std::span<float> at(std::size_t i) { return {data.data() + i * dim, static_cast<std::size_t>(dim)}; }
  std::span<const float> at(std::size_t i) const {
    return {data.data() + i * dim, static_cast<std::size_t>(dim)};
  }

  void validate() const {
    require(dim >= 1, Errc::invalid_argument, "feature map: dim must be >= 1");
    require(data.size() == pixel_count() * dim, Errc::dimension_mismatch,
            "feature map: data length does not match dimensions");
    for (float v : data) require(std::isfinite(v), Errc::invalid_argument, "feature map: non-finite value");
  }
};

/// Dense partition of the lattice into superpixels with ids in [0, count).
struct LabelMap {
  int width = 0;
  int height = 0;
  std::uint32_t count = 0;
  std::vector<std::uint32_t> labels;

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  std::uint32_t operator()(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }

  bool is_valid() const {
    if (labels.size() != pixel_count()) return false;
    if (pixel_count() == 0) return count == 0;
    if (count == 0 || count > labels.size()) return false;
    std::vector<char> seen(count, 0);
    for (auto l : labels) {
      if (l >= count) return false;
      seen[l] = 1;
    }
    return std::all_of(seen.begin(), seen.end(), [](char s) { return s != 0; });
  }

  void validate() const { require(is_valid(), Errc::invalid_label_map, "invalid label map"); }

  /// Renumbers arbitrary ids in row-major first-occurrence order.
  static LabelMap from_raw(int w, int h, std::span<const std::uint32_t> raw) {
    require(raw.size() == static_cast<std::size_t>(w) * h, Errc::dimension_mismatch,
            "label map: raw label count does not match dimensions");
    LabelMap lm;
    lm.width = w;
    lm.height = h;
    lm.labels.resize(raw.size());
    std::vector<std::uint32_t> remap;
    constexpr std::uint32_t unset = 0xffffffffu;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      const auto r = raw[i];
      if (r >= remap.size()) remap.resize(static_cast<std::size_t>(r) + 1, unset);
      if (remap[r] == unset) remap[r] = lm.count++;
      lm.labels[i] = remap[r];
    }
    return lm;
  }
};

/// Row-major boolean mask (one byte per pixel).
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  bool operator()(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v = true) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }

  std::size_t area() const {
    return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](auto b) { return b != 0; }));
  }
  bool empty() const { return area() == 0; }

  /// Tight bounding box of the foreground, or an empty rect.
  Rect bbox() const {
    int x0 = width, y0 = height, x1 = -1, y1 = -1;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        if ((*this)(x, y)) {
          x0 = std::min(x0, x);
          y0 = std::min(y0, y);
          x1 = std::max(x1, x);
          y1 = std::max(y1, y);
        }
    if (x1 < 0) return {};
    return Rect{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
  }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

/// Real-valued per-pixel field, row-major.
struct RealMap {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  RealMap() = default;
  RealMap(int w, int h, double fill = 0.0) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  double& operator()(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  double operator()(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

inline std::size_t intersection_count(const BinaryMask& a, const BinaryMask& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) n += (a.bits[i] != 0 && b.bits[i] != 0) ? 1 : 0;
  return n;
}

/// |a∩b| / |a∪b|; 0 when both masks are empty.
inline double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  require(a.width == b.width && a.height == b.height && a.bits.size() == b.bits.size(),
          Errc::dimension_mismatch, "mask_iou: dimension mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    const bool pa = a.bits[i] != 0, pb = b.bits[i] != 0;
    inter += (pa && pb) ? 1 : 0;
    uni += (pa || pb) ? 1 : 0;
  }
  if (uni == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace spxr
