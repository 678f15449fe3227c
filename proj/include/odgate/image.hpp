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

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace odgate {

/// Decoded image, interleaved, intensities normalized to [0, 1].
struct ImageTensor {
  int width = 0;
  int height = 0;
  int channels = 1;  // 1 (gray) or 3 (RGB)
  std::vector<double> values;

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
};

/// Single-channel luminance image; canonical input to feature extraction.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  std::size_t pixel_count() const { return values.size(); }
};

/// Throws InvalidArgument unless dimensions, channel count, value count and
/// value range agree.
void validate(const ImageTensor& img);

/// Decodes a PNG or JPEG payload (8- or 16-bit, gray or RGB, alpha dropped).
/// Samples are divided by the bit-depth maximum.
ImageTensor decode_image(std::span<const std::uint8_t> bytes);

/// Rec. 709 luma for RGB; passthrough for single-channel input.
GrayImage to_grayscale(const ImageTensor& img);

ImageTensor from_gray(const GrayImage& img);

/// Area-weighted resampling: every output cell averages the source pixels it
/// covers, weighted by overlap. Works for up- and downsampling.
GrayImage area_resize(const GrayImage& img, int width, int height);

/// Downscales so that the longer edge is at most `max_edge` (never upscales).
GrayImage thumbnail(const GrayImage& img, int max_edge);

enum class PngDepth { k8, k16 };

/// Encodes gray or RGB tensors as PNG. Values are rounded to the bit depth.
std::vector<std::uint8_t> encode_png(const ImageTensor& img, PngDepth depth = PngDepth::k8);

std::vector<std::uint8_t> encode_jpeg(const ImageTensor& img, int quality = 95);

enum class ImageFormat { kUnknown, kPng, kJpeg };

ImageFormat sniff_format(std::span<const std::uint8_t> bytes);

const char* mime_type(ImageFormat format);

}  // namespace odgate
