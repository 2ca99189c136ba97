#include "rp2/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "rp2/error.hpp"

namespace rp2 {
namespace {

std::uint8_t to_byte(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

}  // namespace

Tensor read_png(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("no such file " + path.string());
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw FormatError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw FormatError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  Tensor out({static_cast<int>(image.height), static_cast<int>(image.width), 3});
  for (std::size_t i = 0; i < buffer.size(); ++i) out[i] = static_cast<float>(buffer[i]) / 255.0f;
  return out;
}

void write_png(const std::filesystem::path& path, const Tensor& img) {
  const bool rgb = img.rank() == 3 && img.dim(2) == 3;
  const bool gray = img.rank() == 2;
  if (!rgb && !gray) throw ShapeError("write_png expects [H,W,3] or [H,W], got " + shape_string(img.shape()));
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.dim(1));
  image.height = static_cast<png_uint_32>(img.dim(0));
  image.format = rgb ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buffer(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) buffer[i] = to_byte(img[i]);
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

Tensor quantize_8bit(const Tensor& image) {
  Tensor out = image;
  for (float& v : out.values()) v = static_cast<float>(to_byte(v)) / 255.0f;
  return out;
}

}  // namespace rp2
