#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

namespace r2i {

/// Half-open pixel box [x1, x2) x [y1, y2).
struct PixelBox {
  int x1 = 0;
  int y1 = 0;
  int x2 = 0;
  int y2 = 0;

  int width() const { return x2 - x1; }
  int height() const { return y2 - y1; }
  std::int64_t area() const { return static_cast<std::int64_t>(width()) * height(); }
  bool empty() const { return x2 <= x1 || y2 <= y1; }

  /// True when 0 <= x1 < x2 <= image_width (same for y).
  bool valid_within(int image_width, int image_height) const {
    return x1 >= 0 && y1 >= 0 && x1 < x2 && y1 < y2 && x2 <= image_width && y2 <= image_height;
  }

  /// "[x1, y1, x2, y2]"
  std::string to_string() const;

  friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

/// Area(box) / Area(image), computed from integer areas.
double area_ratio(const PixelBox& box, int image_width, int image_height);

void to_json(nlohmann::json& j, const PixelBox& b);
void from_json(const nlohmann::json& j, PixelBox& b);

}  // namespace r2i
