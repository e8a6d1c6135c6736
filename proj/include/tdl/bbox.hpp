#pragma once

#include <algorithm>
#include <cstdint>

namespace tdl {

/* Pixel box, half-open: [x_min, x_max) x [y_min, y_max). */
struct BBox {
  std::int64_t x_min = 0;
  std::int64_t y_min = 0;
  std::int64_t x_max = 0;
  std::int64_t y_max = 0;

  std::int64_t width() const { return x_max - x_min; }
  std::int64_t height() const { return y_max - y_min; }
  std::int64_t area() const { return width() * height(); }
  bool valid() const { return x_min < x_max && y_min < y_max; }
  bool operator==(const BBox&) const = default;
};

/// |a n b| / |a u b| from integer areas; 0 for disjoint boxes.
inline double iou(const BBox& a, const BBox& b) {
  const std::int64_t iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const std::int64_t ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  const std::int64_t inter = (iw > 0 && ih > 0) ? iw * ih : 0;
  const std::int64_t uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace tdl
