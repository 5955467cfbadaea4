#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace egopano {

// Interleaved 8-bit raster. Channel count is 1 (gray), 3 (RGB) or 4 (RGBA).
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, std::uint8_t fill = 0);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return width_ == 0 || height_ == 0; }

  std::uint8_t* row(int y) { return pixels_.data() + static_cast<std::size_t>(y) * width_ * channels_; }
  const std::uint8_t* row(int y) const {
    return pixels_.data() + static_cast<std::size_t>(y) * width_ * channels_;
  }
  std::uint8_t& at(int x, int y, int c) { return row(y)[x * channels_ + c]; }
  std::uint8_t at(int x, int y, int c) const { return row(y)[x * channels_ + c]; }

  std::span<std::uint8_t> bytes() { return pixels_; }
  std::span<const std::uint8_t> bytes() const { return pixels_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<std::uint8_t> pixels_;
};

// Decodes PNG or JPEG into RGB.
Image load_image(const std::filesystem::path& path);

// Reads width and height from a PNG or JPEG header without decoding pixels.
std::pair<int, int> probe_image_size(const std::filesystem::path& path);

// Lossless PNG encoding of a gray, RGB or RGBA image (compression level fixed).
std::vector<std::uint8_t> encode_png(const Image& image);
void save_png(const Image& image, const std::filesystem::path& path);
Image decode_png(std::span<const std::uint8_t> bytes);

// luma = round(0.299 R + 0.587 G + 0.114 B)
Image to_gray(const Image& rgb);

Image to_rgba(const Image& rgb);

}  // namespace egopano
