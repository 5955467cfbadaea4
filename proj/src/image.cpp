#include "egopano/image.hpp"

#include <array>
#include <cmath>
#include <fstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "egopano/error.hpp"

namespace egopano {

Image::Image(int width, int height, int channels, std::uint8_t fill)
    : width_(width), height_(height), channels_(channels) {
  if (width < 0 || height < 0 || (channels != 1 && channels != 3 && channels != 4)) {
    fail(ErrorCode::InvalidArgument, "bad image geometry");
  }
  pixels_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

namespace {

Image from_mat(const cv::Mat& mat) {
  if (mat.depth() != CV_8U) fail(ErrorCode::ImageIo, "only 8-bit images are supported");
  const int channels = mat.channels();
  Image out(mat.cols, mat.rows, channels == 1 ? 1 : (channels == 4 ? 4 : 3));
  for (int y = 0; y < mat.rows; ++y) {
    const std::uint8_t* src = mat.ptr<std::uint8_t>(y);
    std::uint8_t* dst = out.row(y);
    for (int x = 0; x < mat.cols; ++x) {
      if (channels == 1) {
        dst[x] = src[x];
      } else {
        // OpenCV stores BGR(A).
        dst[x * out.channels() + 0] = src[x * channels + 2];
        dst[x * out.channels() + 1] = src[x * channels + 1];
        dst[x * out.channels() + 2] = src[x * channels + 0];
        if (channels == 4) dst[x * 4 + 3] = src[x * 4 + 3];
      }
    }
  }
  return out;
}

cv::Mat to_mat(const Image& image) {
  const int c = image.channels();
  cv::Mat mat(image.height(), image.width(), CV_8UC(c));
  for (int y = 0; y < image.height(); ++y) {
    const std::uint8_t* src = image.row(y);
    std::uint8_t* dst = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < image.width(); ++x) {
      if (c == 1) {
        dst[x] = src[x];
      } else {
        dst[x * c + 0] = src[x * c + 2];
        dst[x * c + 1] = src[x * c + 1];
        dst[x * c + 2] = src[x * c + 0];
        if (c == 4) dst[x * 4 + 3] = src[x * 4 + 3];
      }
    }
  }
  return mat;
}

std::vector<std::uint8_t> read_prefix(const std::filesystem::path& path, std::size_t max_bytes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::MissingFile, path.string());
  std::vector<std::uint8_t> buf(max_bytes);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(max_bytes));
  buf.resize(static_cast<std::size_t>(in.gcount()));
  return buf;
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::MissingFile, path.string());
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (mat.empty()) fail(ErrorCode::ImageIo, "cannot decode " + path.string());
  return from_mat(mat);
}

std::pair<int, int> probe_image_size(const std::filesystem::path& path) {
  static constexpr std::array<std::uint8_t, 8> kPngMagic = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  const auto head = read_prefix(path, 24);
  if (head.size() >= 24 && std::equal(kPngMagic.begin(), kPngMagic.end(), head.begin())) {
    auto be32 = [&](std::size_t i) {
      return static_cast<int>((head[i] << 24) | (head[i + 1] << 16) | (head[i + 2] << 8) | head[i + 3]);
    };
    return {be32(16), be32(20)};
  }
  if (head.size() >= 2 && head[0] == 0xFF && head[1] == 0xD8) {
    // Walk JPEG segments until a start-of-frame marker.
    std::ifstream in(path, std::ios::binary);
    in.seekg(2);
    while (in) {
      int marker_prefix = in.get();
      if (marker_prefix != 0xFF) break;
      int marker = in.get();
      while (marker == 0xFF) marker = in.get();
      const int hi = in.get();
      const int lo = in.get();
      const int length = (hi << 8) | lo;
      const bool sof = (marker >= 0xC0 && marker <= 0xCF) && marker != 0xC4 && marker != 0xC8 && marker != 0xCC;
      if (sof) {
        in.get();  // precision
        const int h = (in.get() << 8) | in.get();
        const int w = (in.get() << 8) | in.get();
        if (!in) break;
        return {w, h};
      }
      in.seekg(length - 2, std::ios::cur);
    }
  }
  // Unknown container: fall back to a full decode.
  const Image img = load_image(path);
  return {img.width(), img.height()};
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  std::vector<std::uint8_t> out;
  const std::vector<int> params = {cv::IMWRITE_PNG_COMPRESSION, 6};
  if (!cv::imencode(".png", to_mat(image), out, params)) fail(ErrorCode::ImageIo, "PNG encoding failed");
  return out;
}

void save_png(const Image& image, const std::filesystem::path& path) {
  const auto bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::ImageIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  const cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<std::uint8_t*>(bytes.data()));
  cv::Mat mat = cv::imdecode(buf, cv::IMREAD_UNCHANGED);
  if (mat.empty()) fail(ErrorCode::ImageIo, "cannot decode PNG buffer");
  return from_mat(mat);
}

Image to_gray(const Image& rgb) {
  if (rgb.channels() == 1) return rgb;
  Image gray(rgb.width(), rgb.height(), 1);
  for (int y = 0; y < rgb.height(); ++y) {
    const std::uint8_t* src = rgb.row(y);
    std::uint8_t* dst = gray.row(y);
    for (int x = 0; x < rgb.width(); ++x) {
      const std::uint8_t* p = src + x * rgb.channels();
      dst[x] = static_cast<std::uint8_t>(std::lround(0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]));
    }
  }
  return gray;
}

Image to_rgba(const Image& rgb) {
  Image out(rgb.width(), rgb.height(), 4, 255);
  for (int y = 0; y < rgb.height(); ++y) {
    for (int x = 0; x < rgb.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        out.at(x, y, c) = rgb.channels() == 1 ? rgb.at(x, y, 0) : rgb.at(x, y, c);
      }
      if (rgb.channels() == 4) out.at(x, y, 3) = rgb.at(x, y, 3);
    }
  }
  return out;
}

}  // namespace egopano
