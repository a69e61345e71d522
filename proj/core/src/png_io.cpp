// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#include "floc/png_io.hpp"

#include <png.h>

#include <cstring>
#include <string>

namespace floc {
namespace {

struct PngImage {
  png_image image;
  PngImage() {
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

Image finish_read(PngImage& png, const std::string& what) {
  const bool color = (png.image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image img;
  img.width = png.image.width;
  img.height = png.image.height;
  img.channels = color ? 3 : 1;
  img.pixels.resize(PNG_IMAGE_SIZE(png.image));
  if (!png_image_finish_read(&png.image, nullptr, img.pixels.data(), 0, nullptr))
    throw IoError("cannot decode PNG " + what + ": " + png.image.message);
  return img;
}

std::uint32_t format_for(const Image& img) { return img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY; }

}  // namespace

Image read_png(const std::filesystem::path& path) {
  PngImage png;
  if (!png_image_begin_read_from_file(&png.image, path.c_str()))
    throw IoError("cannot read PNG " + path.string() + ": " + png.image.message);
  return finish_read(png, path.string());
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  PngImage png;
  if (!png_image_begin_read_from_memory(&png.image, bytes.data(), bytes.size()))
    throw IoError(std::string("cannot decode PNG buffer: ") + png.image.message);
  return finish_read(png, "buffer");
}

void write_png(const std::filesystem::path& path, const Image& img) {
  img.validate();
  PngImage png;
  png.image.width = static_cast<png_uint_32>(img.width);
  png.image.height = static_cast<png_uint_32>(img.height);
  png.image.format = format_for(img);
  if (!png_image_write_to_file(&png.image, path.c_str(), 0, img.pixels.data(), 0, nullptr))
    throw IoError("cannot write PNG " + path.string() + ": " + png.image.message);
}

std::vector<std::uint8_t> encode_png(const Image& img) {
  img.validate();
  PngImage png;
  png.image.width = static_cast<png_uint_32>(img.width);
  png.image.height = static_cast<png_uint_32>(img.height);
  png.image.format = format_for(img);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png.image, nullptr, &size, 0, img.pixels.data(), 0, nullptr))
    throw IoError(std::string("cannot size PNG buffer: ") + png.image.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&png.image, out.data(), &size, 0, img.pixels.data(), 0, nullptr))
    throw IoError(std::string("cannot encode PNG: ") + png.image.message);
  out.resize(size);
  return out;
}

BinaryMask mask_from_image(const Image& img) {
  img.validate();
  BinaryMask mask = BinaryMask::empty(img.width, img.height);
  for (std::size_t i = 0; i < img.width * img.height; ++i) mask.bits[i] = img.pixels[i * img.channels] >= 128 ? 1 : 0;
  return mask;
}

Image mask_to_image(const BinaryMask& mask) {
  Image img = Image::blank(mask.width, mask.height, 1);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) img.pixels[i] = mask.bits[i] ? 255 : 0;
  return img;
}

BinaryMask read_mask_png(const std::filesystem::path& path) { return mask_from_image(read_png(path)); }

void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask) { write_png(path, mask_to_image(mask)); }

}  // namespace floc
