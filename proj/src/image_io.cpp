#include "lunet/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <vector>

namespace lunet {

Tensor read_png(const std::string& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw IoError("cannot read PNG '" + path + "': " + img.message);
  img.format = PNG_FORMAT_RGB;
  std::vector<uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError("cannot decode PNG '" + path + "': " + img.message);
  }
  const int64_t h = img.height, w = img.width;
  Tensor out(1, 3, h, w);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int64_t c = 0; c < 3; ++c)
        out(0, c, y, x) = static_cast<double>(buf[(y * w + x) * 3 + c]);
  return out;
}

void write_png(const std::string& path, const Tensor& image) {
  if (image.n() != 1 || image.c() != 3)
    throw ShapeError("write_png: expected 1×3×H×W, got " + image.shape_str());
  const int64_t h = image.h(), w = image.w();
  std::vector<uint8_t> buf(static_cast<size_t>(h * w * 3));
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int64_t c = 0; c < 3; ++c) {
        const double v = std::lround(image(0, c, y, x));
        buf[static_cast<size_t>((y * w + x) * 3 + c)] =
            static_cast<uint8_t>(std::min(255.0, std::max(0.0, v)));
      }
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.format = PNG_FORMAT_RGB;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr))
    throw IoError("cannot write PNG '" + path + "': " + img.message);
}

}  // namespace lunet
