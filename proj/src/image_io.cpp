#include "surgseg/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

// jpeglib.h needs FILE and size_t declared first.
#include <jpeglib.h>

#include "surgseg/errors.hpp"
#include "surgseg/fileutil.hpp"

namespace surgseg {
namespace {

enum class Format { kPng, kJpeg, kUnknown };

Format sniff(const std::string& path, std::array<unsigned char, 8>& head) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image: " + path);
  head.fill(0);
  in.read(reinterpret_cast<char*>(head.data()), head.size());
  static constexpr unsigned char kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (in.gcount() == 8 && std::memcmp(head.data(), kPngSig, 8) == 0) return Format::kPng;
  if (in.gcount() >= 2 && head[0] == 0xFF && head[1] == 0xD8) return Format::kJpeg;
  return Format::kUnknown;
}

Rgb8Image read_png(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw DataError("cannot decode PNG " + path + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  Rgb8Image out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw DataError("cannot decode PNG " + path + ": " + image.message);
  }
  return out;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

// Decodes (or only probes the header of) a JPEG file.
Rgb8Image read_jpeg(const std::string& path, bool header_only) {
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "rb"));
  if (!file) throw DataError("cannot open image: " + path);
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  Rgb8Image out;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw DataError("cannot decode JPEG " + path + ": " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file.get());
  jpeg_read_header(&cinfo, TRUE);
  out.width = static_cast<int>(cinfo.image_width);
  out.height = static_cast<int>(cinfo.image_height);
  if (!header_only) {
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    out.pixels.resize(static_cast<std::size_t>(out.width) * out.height * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
      JSAMPROW row = out.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * out.width * 3;
      jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
  }
  jpeg_destroy_decompress(&cinfo);
  return out;
}

}  // namespace

Rgb8Image read_image(const std::string& path) {
  std::array<unsigned char, 8> head;
  switch (sniff(path, head)) {
    case Format::kPng:
      return read_png(path);
    case Format::kJpeg:
      return read_jpeg(path, false);
    default:
      throw DataError("unsupported image format (expected PNG or JPEG): " + path);
  }
}

ImageSize probe_image_size(const std::string& path) {
  std::array<unsigned char, 8> head;
  switch (sniff(path, head)) {
    case Format::kPng: {
      png_image image;
      std::memset(&image, 0, sizeof image);
      image.version = PNG_IMAGE_VERSION;
      if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw DataError("cannot decode PNG " + path + ": " + image.message);
      }
      ImageSize size{static_cast<int>(image.height), static_cast<int>(image.width)};
      png_image_free(&image);
      return size;
    }
    case Format::kJpeg: {
      Rgb8Image header = read_jpeg(path, true);
      return {header.height, header.width};
    }
    default:
      throw DataError("unsupported image format (expected PNG or JPEG): " + path);
  }
}

std::vector<std::uint8_t> encode_png(const Rgb8Image& image) {
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, image.pixels.data(), 0, nullptr)) {
    throw DataError(std::string("PNG encode failed: ") + png.message);
  }
  std::vector<std::uint8_t> bytes(size);
  if (!png_image_write_to_memory(&png, bytes.data(), &size, 0, image.pixels.data(), 0, nullptr)) {
    throw DataError(std::string("PNG encode failed: ") + png.message);
  }
  bytes.resize(size);
  return bytes;
}

void write_png(const std::string& path, const Rgb8Image& image) {
  write_file_atomic(path, encode_png(image));
}

Rgb8Image to_rgb8(const Image& image) {
  Rgb8Image out;
  out.height = image.height;
  out.width = image.width;
  out.pixels.resize(image.pixels.size());
  std::transform(image.pixels.begin(), image.pixels.end(), out.pixels.begin(), [](float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
  });
  return out;
}

Image to_float(const Rgb8Image& image) {
  Image out(image.height, image.width);
  std::transform(image.pixels.begin(), image.pixels.end(), out.pixels.begin(),
                 [](std::uint8_t v) { return static_cast<float>(v) / 255.0f; });
  return out;
}

}  // namespace surgseg
