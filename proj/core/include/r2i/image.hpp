#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "r2i/geometry.hpp"

namespace r2i {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// 8-bit RGB raster, row-major, tightly packed.
class Image {
 public:
  Image() = default;
  Image(int width, int height, Rgb fill = {});

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return pixels_.empty(); }

  Rgb pixel(int x, int y) const {
    const auto* p = &pixels_[offset(x, y)];
    return {p[0], p[1], p[2]};
  }
  void set_pixel(int x, int y, Rgb c) {
    auto* p = &pixels_[offset(x, y)];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }

  std::span<const std::uint8_t> data() const { return pixels_; }
  std::span<std::uint8_t> data() { return pixels_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t offset(int x, int y) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

enum class ImageCodec { jpeg, png };

struct ImageSize {
  int width = 0;
  int height = 0;
};

/// Detects JPEG/PNG by magic bytes; throws DataError otherwise.
ImageCodec sniff_codec(std::string_view bytes);

/// Reads dimensions from the header without decoding pixels.
ImageSize probe_size(std::string_view bytes);

Image decode_image(std::string_view bytes);
Image read_image(const std::filesystem::path& path);

/// Baseline JPEG, 4:2:0, fixed quality. Output is deterministic for a given libjpeg build.
std::string encode_jpeg(const Image& image, int quality = 95);
std::string encode_png(const Image& image);

/// Encodes by extension (.png -> PNG, anything else JPEG q95) and writes atomically.
void write_image(const std::filesystem::path& path, const Image& image);

Image crop(const Image& image, const PixelBox& box);

/// Bilinear resampling with pixel-center alignment and edge clamping;
/// channel values are rounded half-up.
Image resize_bilinear(const Image& image, int out_width, int out_height);

/// Paints every pixel of `box` whose distance to the box border is below
/// `stroke` (an inward stroke; nothing outside the box changes).
void stroke_rect(Image& image, const PixelBox& box, int stroke, Rgb color);

/// Membership test for the band painted by stroke_rect.
bool in_stroke_band(const PixelBox& box, int stroke, int x, int y);

}  // namespace r2i
