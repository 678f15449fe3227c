// Copyright 2026 The odgate Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "odgate/image.hpp"

#include <png.h>
// jpeglib.h needs FILE and size_t declared first.
#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <string>

#include "odgate/error.hpp"

namespace odgate {
namespace {

struct RawImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 8;
  std::vector<std::uint8_t> pixels;  // big-endian samples when 16-bit
};

struct PngReader {
  std::span<const std::uint8_t> data;
  std::size_t pos = 0;
  char message[256] = "";
};

void png_read_bytes(png_structp png, png_bytep out, png_size_t n) {
  auto* reader = static_cast<PngReader*>(png_get_io_ptr(png));
  if (reader->pos + n > reader->data.size()) png_error(png, "truncated PNG stream");
  std::memcpy(out, reader->data.data() + reader->pos, n);
  reader->pos += n;
}

void png_on_error(png_structp png, png_const_charp msg) {
  auto* reader = static_cast<PngReader*>(png_get_error_ptr(png));
  std::snprintf(reader->message, sizeof(reader->message), "%s", msg);
  png_longjmp(png, 1);
}

void png_on_warning(png_structp, png_const_charp) {}

// No automatic objects with destructors may live in this frame: png_error
// longjmps back to the setjmp below.
bool read_png(PngReader& reader, RawImage& out, std::vector<png_bytep>& rows) {
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &reader, png_on_error, png_on_warning);
  if (png == nullptr) return false;
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, &reader, png_read_bytes);
  png_read_info(png, info);

  const int color_type = png_get_color_type(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  out.pixels.resize(stride * static_cast<std::size_t>(out.height));
  rows.resize(static_cast<std::size_t>(out.height));
  for (int y = 0; y < out.height; ++y) rows[y] = out.pixels.data() + stride * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX] = "";
};

void jpeg_on_error(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

void jpeg_silent(j_common_ptr, int) {}

bool read_jpeg(std::span<const std::uint8_t> data, JpegError& err, RawImage& out) {
  jpeg_decompress_struct cinfo;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_on_error;
  err.mgr.emit_message = jpeg_silent;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, data.data(), static_cast<unsigned long>(data.size()));
  jpeg_read_header(&cinfo, TRUE);
  if (cinfo.num_components == 1) {
    cinfo.out_color_space = JCS_GRAYSCALE;
  } else if (cinfo.jpeg_color_space == JCS_YCbCr || cinfo.jpeg_color_space == JCS_RGB) {
    cinfo.out_color_space = JCS_RGB;
  } else {
    std::snprintf(err.message, sizeof(err.message), "unsupported JPEG color space");
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_start_decompress(&cinfo);
  out.width = static_cast<int>(cinfo.output_width);
  out.height = static_cast<int>(cinfo.output_height);
  out.channels = cinfo.output_components;
  out.bit_depth = 8;
  const std::size_t stride = static_cast<std::size_t>(out.width) * out.channels;
  out.pixels.resize(stride * static_cast<std::size_t>(out.height));
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.pixels.data() + stride * cinfo.output_scanline;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

ImageTensor normalize(const RawImage& raw) {
  if (raw.width <= 0 || raw.height <= 0) fail(ErrorCode::kEmptyImage, "image has zero pixels");
  if (raw.channels != 1 && raw.channels != 3) {
    fail(ErrorCode::kDecodeError, "unsupported channel count " + std::to_string(raw.channels));
  }
  ImageTensor img;
  img.width = raw.width;
  img.height = raw.height;
  img.channels = raw.channels;
  const std::size_t n = img.pixel_count() * static_cast<std::size_t>(img.channels);
  img.values.resize(n);
  if (raw.bit_depth == 16) {
    for (std::size_t i = 0; i < n; ++i) {
      const unsigned v = (static_cast<unsigned>(raw.pixels[2 * i]) << 8) | raw.pixels[2 * i + 1];
      img.values[i] = static_cast<double>(v) / 65535.0;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) img.values[i] = static_cast<double>(raw.pixels[i]) / 255.0;
  }
  return img;
}

struct PngWriter {
  std::vector<std::uint8_t>* out = nullptr;
  char message[256] = "";
};

void png_write_bytes(png_structp png, png_bytep data, png_size_t n) {
  auto* writer = static_cast<PngWriter*>(png_get_io_ptr(png));
  writer->out->insert(writer->out->end(), data, data + n);
}

void png_flush_noop(png_structp) {}

void png_on_write_error(png_structp png, png_const_charp msg) {
  auto* writer = static_cast<PngWriter*>(png_get_error_ptr(png));
  std::snprintf(writer->message, sizeof(writer->message), "%s", msg);
  png_longjmp(png, 1);
}

bool write_png(PngWriter& writer, const RawImage& raw, std::vector<png_bytep>& rows) {
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &writer, png_on_write_error, png_on_warning);
  if (png == nullptr) return false;
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, &writer, png_write_bytes, png_flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(raw.width),
               static_cast<png_uint_32>(raw.height), raw.bit_depth,
               raw.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(raw.width) * raw.channels * (raw.bit_depth / 8);
  rows.resize(static_cast<std::size_t>(raw.height));
  for (int y = 0; y < raw.height; ++y) {
    rows[y] = const_cast<png_bytep>(raw.pixels.data() + stride * y);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

bool write_jpeg(const RawImage& raw, int quality, JpegError& err, unsigned char*& buffer,
                unsigned long& size) {
  jpeg_compress_struct cinfo;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_on_error;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    return false;
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &buffer, &size);
  cinfo.image_width = static_cast<JDIMENSION>(raw.width);
  cinfo.image_height = static_cast<JDIMENSION>(raw.height);
  cinfo.input_components = raw.channels;
  cinfo.in_color_space = raw.channels == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  const std::size_t stride = static_cast<std::size_t>(raw.width) * raw.channels;
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = const_cast<JSAMPROW>(raw.pixels.data() + stride * cinfo.next_scanline);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  return true;
}

RawImage quantize(const ImageTensor& img, int bit_depth) {
  validate(img);
  RawImage raw;
  raw.width = img.width;
  raw.height = img.height;
  raw.channels = img.channels;
  raw.bit_depth = bit_depth;
  const std::size_t n = img.values.size();
  if (bit_depth == 16) {
    raw.pixels.resize(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto v = static_cast<unsigned>(std::lround(img.values[i] * 65535.0));
      raw.pixels[2 * i] = static_cast<std::uint8_t>(v >> 8);
      raw.pixels[2 * i + 1] = static_cast<std::uint8_t>(v & 0xFF);
    }
  } else {
    raw.pixels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      raw.pixels[i] = static_cast<std::uint8_t>(std::lround(img.values[i] * 255.0));
    }
  }
  return raw;
}

}  // namespace

void validate(const ImageTensor& img) {
  if (img.width < 1 || img.height < 1) fail(ErrorCode::kEmptyImage, "image has zero pixels");
  if (img.channels != 1 && img.channels != 3) {
    fail(ErrorCode::kInvalidArgument, "channels must be 1 or 3");
  }
  if (img.values.size() != img.pixel_count() * static_cast<std::size_t>(img.channels)) {
    fail(ErrorCode::kInvalidArgument, "value count does not match width*height*channels");
  }
  for (double v : img.values) {
    if (!(v >= 0.0 && v <= 1.0)) fail(ErrorCode::kInvalidArgument, "intensity outside [0,1]");
  }
}

ImageFormat sniff_format(std::span<const std::uint8_t> bytes) {
  static constexpr std::uint8_t kPngMagic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  if (bytes.size() >= 8 && std::equal(kPngMagic, kPngMagic + 8, bytes.begin())) {
    return ImageFormat::kPng;
  }
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) {
    return ImageFormat::kJpeg;
  }
  return ImageFormat::kUnknown;
}

const char* mime_type(ImageFormat format) {
  switch (format) {
    case ImageFormat::kPng: return "image/png";
    case ImageFormat::kJpeg: return "image/jpeg";
    default: return "application/octet-stream";
  }
}

ImageTensor decode_image(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) fail(ErrorCode::kDecodeError, "empty payload");
  RawImage raw;
  switch (sniff_format(bytes)) {
    case ImageFormat::kPng: {
      PngReader reader{bytes};
      std::vector<png_bytep> rows;
      if (!read_png(reader, raw, rows)) {
        fail(ErrorCode::kDecodeError, std::string("PNG: ") + reader.message);
      }
      break;
    }
    case ImageFormat::kJpeg: {
      JpegError err;
      if (!read_jpeg(bytes, err, raw)) fail(ErrorCode::kDecodeError, std::string("JPEG: ") + err.message);
      break;
    }
    default:
      fail(ErrorCode::kDecodeError, "payload is neither PNG nor JPEG");
  }
  return normalize(raw);
}

GrayImage to_grayscale(const ImageTensor& img) {
  GrayImage gray;
  gray.width = img.width;
  gray.height = img.height;
  if (img.channels == 1) {
    gray.values = img.values;
    return gray;
  }
  const std::size_t n = img.pixel_count();
  gray.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* rgb = &img.values[3 * i];
    gray.values[i] = std::clamp(0.2126 * rgb[0] + 0.7152 * rgb[1] + 0.0722 * rgb[2], 0.0, 1.0);
  }
  return gray;
}

ImageTensor from_gray(const GrayImage& img) {
  return ImageTensor{img.width, img.height, 1, img.values};
}

GrayImage area_resize(const GrayImage& img, int width, int height) {
  if (img.width < 1 || img.height < 1 || img.values.empty()) {
    fail(ErrorCode::kEmptyImage, "cannot resize an empty image");
  }
  if (width < 1 || height < 1) fail(ErrorCode::kInvalidArgument, "target size must be positive");

  // Per-axis overlap weights between output cells and source pixels.
  struct Span {
    int first;
    std::vector<double> weights;
  };
  auto axis = [](int src, int dst) {
    std::vector<Span> spans(static_cast<std::size_t>(dst));
    const double scale = static_cast<double>(src) / dst;
    for (int o = 0; o < dst; ++o) {
      const double lo = o * scale;
      const double hi = (o + 1) * scale;
      const int first = static_cast<int>(std::floor(lo));
      const int last = std::min(src - 1, static_cast<int>(std::ceil(hi)) - 1);
      spans[o].first = first;
      for (int s = first; s <= last; ++s) {
        const double w = std::min(hi, s + 1.0) - std::max(lo, static_cast<double>(s));
        spans[o].weights.push_back(std::max(w, 0.0) / scale);
      }
    }
    return spans;
  };
  const auto xs = axis(img.width, width);
  const auto ys = axis(img.height, height);

  GrayImage out;
  out.width = width;
  out.height = height;
  out.values.assign(static_cast<std::size_t>(width) * height, 0.0);
  for (int oy = 0; oy < height; ++oy) {
    for (int ox = 0; ox < width; ++ox) {
      double acc = 0.0;
      for (std::size_t j = 0; j < ys[oy].weights.size(); ++j) {
        const std::size_t row = static_cast<std::size_t>(ys[oy].first + static_cast<int>(j)) * img.width;
        double racc = 0.0;
        for (std::size_t i = 0; i < xs[ox].weights.size(); ++i) {
          racc += xs[ox].weights[i] * img.values[row + xs[ox].first + i];
        }
        acc += ys[oy].weights[j] * racc;
      }
      out.values[static_cast<std::size_t>(oy) * width + ox] = std::clamp(acc, 0.0, 1.0);
    }
  }
  return out;
}

GrayImage thumbnail(const GrayImage& img, int max_edge) {
  const int edge = std::max(img.width, img.height);
  if (edge <= max_edge) return img;
  const double scale = static_cast<double>(max_edge) / edge;
  const int w = std::max(1, static_cast<int>(std::lround(img.width * scale)));
  const int h = std::max(1, static_cast<int>(std::lround(img.height * scale)));
  return area_resize(img, w, h);
}

std::vector<std::uint8_t> encode_png(const ImageTensor& img, PngDepth depth) {
  const RawImage raw = quantize(img, depth == PngDepth::k16 ? 16 : 8);
  std::vector<std::uint8_t> out;
  PngWriter writer{&out};
  std::vector<png_bytep> rows;
  if (!write_png(writer, raw, rows)) fail(ErrorCode::kIoError, std::string("PNG encode: ") + writer.message);
  return out;
}

std::vector<std::uint8_t> encode_jpeg(const ImageTensor& img, int quality) {
  const RawImage raw = quantize(img, 8);
  JpegError err;
  unsigned char* buffer = nullptr;
  unsigned long size = 0;
  if (!write_jpeg(raw, quality, err, buffer, size)) {
    std::free(buffer);
    fail(ErrorCode::kIoError, std::string("JPEG encode: ") + err.message);
  }
  std::vector<std::uint8_t> out(buffer, buffer + size);
  std::free(buffer);
  return out;
}

}  // namespace odgate
