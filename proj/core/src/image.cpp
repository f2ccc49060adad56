#include "r2i/image.hpp"

#include <csetjmp>
#include <cmath>
#include <cstdio>
#include <cstring>

#include <jpeglib.h>
#include <png.h>

#include "r2i/error.hpp"
#include "r2i/io.hpp"

namespace r2i {

std::string PixelBox::to_string() const {
  return "[" + std::to_string(x1) + ", " + std::to_string(y1) + ", " + std::to_string(x2) + ", " +
         std::to_string(y2) + "]";
}

double area_ratio(const PixelBox& box, int image_width, int image_height) {
  return static_cast<double>(box.area()) /
         (static_cast<double>(image_width) * static_cast<double>(image_height));
}

void to_json(nlohmann::json& j, const PixelBox& b) { j = nlohmann::json::array({b.x1, b.y1, b.x2, b.y2}); }

void from_json(const nlohmann::json& j, PixelBox& b) {
  if (!j.is_array() || j.size() != 4) throw DataError("bbox must be [x1, y1, x2, y2]");
  b = {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

Image::Image(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 1 || height < 1) throw PreconditionError("image dimensions must be positive");
  pixels_.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3);
  for (std::size_t i = 0; i < pixels_.size(); i += 3) {
    pixels_[i] = fill.r;
    pixels_[i + 1] = fill.g;
    pixels_[i + 2] = fill.b;
  }
}

ImageCodec sniff_codec(std::string_view bytes) {
  if (bytes.size() >= 3 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
      static_cast<unsigned char>(bytes[1]) == 0xD8 && static_cast<unsigned char>(bytes[2]) == 0xFF) {
    return ImageCodec::jpeg;
  }
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), "\x89PNG\r\n\x1a\n", 8) == 0) return ImageCodec::png;
  throw DataError("unrecognized image format");
}

namespace {

int be16(std::string_view b, std::size_t i) {
  return (static_cast<unsigned char>(b[i]) << 8) | static_cast<unsigned char>(b[i + 1]);
}

ImageSize probe_jpeg(std::string_view b) {
  std::size_t i = 2;
  while (i + 4 <= b.size()) {
    if (static_cast<unsigned char>(b[i]) != 0xFF) throw DataError("jpeg: corrupt marker stream");
    const auto marker = static_cast<unsigned char>(b[i + 1]);
    if (marker == 0xFF) {
      ++i;
      continue;
    }
    if (marker == 0xD8 || marker == 0x01 || (marker >= 0xD0 && marker <= 0xD7)) {
      i += 2;
      continue;
    }
    const int len = be16(b, i + 2);
    const bool sof = marker >= 0xC0 && marker <= 0xCF && marker != 0xC4 && marker != 0xC8 && marker != 0xCC;
    if (sof) {
      if (i + 9 > b.size()) break;
      return {be16(b, i + 7), be16(b, i + 5)};
    }
    i += 2 + static_cast<std::size_t>(len);
  }
  throw DataError("jpeg: no frame header");
}

struct JpegErrorManager {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

void jpeg_silent(j_common_ptr, int) {}

// No C++ objects are constructed between setjmp and the libjpeg calls below.
bool decode_jpeg_into(std::string_view bytes, Image& out, JpegErrorManager& err) {
  jpeg_decompress_struct cinfo;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_exit;
  err.pub.emit_message = jpeg_silent;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  cinfo.dct_method = JDCT_ISLOW;
  jpeg_start_decompress(&cinfo);
  out = Image(static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height));
  const std::size_t stride = static_cast<std::size_t>(cinfo.output_width) * 3;
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.data().data() + stride * cinfo.output_scanline;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

bool encode_jpeg_into(const Image& image, int quality, unsigned char** buffer, unsigned long* size,
                      JpegErrorManager& err) {
  jpeg_compress_struct cinfo;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_exit;
  err.pub.emit_message = jpeg_silent;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    return false;
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, buffer, size);
  cinfo.image_width = static_cast<JDIMENSION>(image.width());
  cinfo.image_height = static_cast<JDIMENSION>(image.height());
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  cinfo.dct_method = JDCT_ISLOW;
  cinfo.optimize_coding = FALSE;
  jpeg_start_compress(&cinfo, TRUE);
  const std::size_t stride = static_cast<std::size_t>(image.width()) * 3;
  while (cinfo.next_scanline < cinfo.image_height) {
    auto* row = const_cast<JSAMPLE*>(image.data().data() + stride * cinfo.next_scanline);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  return true;
}

Image decode_png(std::string_view bytes) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw DataError(std::string("png: ") + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  Image out(static_cast<int>(img.width), static_cast<int>(img.height));
  if (!png_image_finish_read(&img, nullptr, out.data().data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw DataError("png: " + msg);
  }
  return out;
}

}  // namespace

ImageSize probe_size(std::string_view bytes) {
  switch (sniff_codec(bytes)) {
    case ImageCodec::jpeg:
      return probe_jpeg(bytes);
    case ImageCodec::png:
      if (bytes.size() < 24) throw DataError("png: truncated header");
      return {(be16(bytes, 16) << 16) | be16(bytes, 18), (be16(bytes, 20) << 16) | be16(bytes, 22)};
  }
  throw DataError("unrecognized image format");
}

Image decode_image(std::string_view bytes) {
  if (sniff_codec(bytes) == ImageCodec::png) return decode_png(bytes);
  Image out;
  JpegErrorManager err{};
  if (!decode_jpeg_into(bytes, out, err)) throw DataError(std::string("jpeg: ") + err.message);
  return out;
}

Image read_image(const std::filesystem::path& path) { return decode_image(read_file(path)); }

std::string encode_jpeg(const Image& image, int quality) {
  if (image.empty()) throw PreconditionError("cannot encode an empty image");
  unsigned char* buffer = nullptr;
  unsigned long size = 0;
  JpegErrorManager err{};
  const bool ok = encode_jpeg_into(image, quality, &buffer, &size, err);
  std::string out;
  if (ok) out.assign(reinterpret_cast<const char*>(buffer), size);
  std::free(buffer);
  if (!ok) throw Error(std::string("jpeg encode: ") + err.message);
  return out;
}

std::string encode_png(const Image& image) {
  if (image.empty()) throw PreconditionError("cannot encode an empty image");
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width());
  img.height = static_cast<png_uint_32>(image.height());
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.data().data(), 0, nullptr)) {
    throw Error(std::string("png encode: ") + img.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.data().data(), 0, nullptr)) {
    throw Error(std::string("png encode: ") + img.message);
  }
  out.resize(size);
  return out;
}

void write_image(const std::filesystem::path& path, const Image& image) {
  const bool png = path.extension() == ".png";
  write_file_atomic(path, png ? encode_png(image) : encode_jpeg(image, 95));
}

Image crop(const Image& image, const PixelBox& box) {
  if (!box.valid_within(image.width(), image.height())) {
    throw PreconditionError("crop box " + box.to_string() + " outside image");
  }
  Image out(box.width(), box.height());
  const std::size_t row_bytes = static_cast<std::size_t>(box.width()) * 3;
  const std::size_t in_stride = static_cast<std::size_t>(image.width()) * 3;
  for (int y = 0; y < box.height(); ++y) {
    const auto* src = image.data().data() + (static_cast<std::size_t>(box.y1 + y) * in_stride) +
                      static_cast<std::size_t>(box.x1) * 3;
    std::memcpy(out.data().data() + static_cast<std::size_t>(y) * row_bytes, src, row_bytes);
  }
  return out;
}

Image resize_bilinear(const Image& image, int out_width, int out_height) {
  if (image.empty() || out_width < 1 || out_height < 1) throw PreconditionError("invalid resize");
  const int in_w = image.width();
  const int in_h = image.height();
  struct Tap {
    int i0, i1;
    double f;
  };
  auto taps = [](int out_n, int in_n) {
    std::vector<Tap> t(static_cast<std::size_t>(out_n));
    const double scale = static_cast<double>(in_n) / out_n;
    for (int o = 0; o < out_n; ++o) {
      double src = (o + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in_n - 1));
      const int i0 = static_cast<int>(std::floor(src));
      t[static_cast<std::size_t>(o)] = {i0, std::min(i0 + 1, in_n - 1), src - i0};
    }
    return t;
  };
  const auto xt = taps(out_width, in_w);
  const auto yt = taps(out_height, in_h);
  Image out(out_width, out_height);
  const auto in = image.data();
  auto dst = out.data();
  const std::size_t in_stride = static_cast<std::size_t>(in_w) * 3;
  for (int y = 0; y < out_height; ++y) {
    const Tap& ty = yt[static_cast<std::size_t>(y)];
    const auto* r0 = in.data() + static_cast<std::size_t>(ty.i0) * in_stride;
    const auto* r1 = in.data() + static_cast<std::size_t>(ty.i1) * in_stride;
    for (int x = 0; x < out_width; ++x) {
      const Tap& tx = xt[static_cast<std::size_t>(x)];
      for (int c = 0; c < 3; ++c) {
        const double a = r0[tx.i0 * 3 + c], b = r0[tx.i1 * 3 + c];
        const double d = r1[tx.i0 * 3 + c], e = r1[tx.i1 * 3 + c];
        const double top = a + (b - a) * tx.f;
        const double bottom = d + (e - d) * tx.f;
        const double v = top + (bottom - top) * ty.f;
        dst[(static_cast<std::size_t>(y) * static_cast<std::size_t>(out_width) + static_cast<std::size_t>(x)) * 3 +
            static_cast<std::size_t>(c)] = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
      }
    }
  }
  return out;
}

bool in_stroke_band(const PixelBox& box, int stroke, int x, int y) {
  if (x < box.x1 || x >= box.x2 || y < box.y1 || y >= box.y2) return false;
  const int d = std::min({x - box.x1, box.x2 - 1 - x, y - box.y1, box.y2 - 1 - y});
  return d < stroke;
}

void stroke_rect(Image& image, const PixelBox& box, int stroke, Rgb color) {
  if (!box.valid_within(image.width(), image.height())) {
    throw PreconditionError("overlay box " + box.to_string() + " outside image");
  }
  if (stroke < 1) throw PreconditionError("stroke width must be >= 1");
  for (int y = box.y1; y < box.y2; ++y) {
    for (int x = box.x1; x < box.x2; ++x) {
      if (in_stroke_band(box, stroke, x, y)) image.set_pixel(x, y, color);
    }
  }
}

}  // namespace r2i
