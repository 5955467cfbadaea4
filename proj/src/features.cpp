#include "egopano/features.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <numbers>

#include "egopano/error.hpp"
#include "egopano/random.hpp"

namespace egopano {

std::string_view to_string(DetectorKind kind) {
  switch (kind) {
    case DetectorKind::Orb: return "orb";
    case DetectorKind::Brisk: return "brisk";
    case DetectorKind::Kaze: return "kaze";
    case DetectorKind::Akaze: return "akaze";
  }
  return "orb";
}

DetectorKind parse_detector_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "orb") return DetectorKind::Orb;
  if (lower == "brisk") return DetectorKind::Brisk;
  if (lower == "kaze") return DetectorKind::Kaze;
  if (lower == "akaze") return DetectorKind::Akaze;
  fail(ErrorCode::InvalidArgument, "unknown detector '" + std::string(name) + "'");
}

bool operator==(const FeatureSet& a, const FeatureSet& b) {
  if (a.frame_id != b.frame_id || a.detector_kind != b.detector_kind || a.descriptor_bytes != b.descriptor_bytes ||
      a.keypoints.size() != b.keypoints.size() || a.descriptor_data != b.descriptor_data) {
    return false;
  }
  for (std::size_t i = 0; i < a.keypoints.size(); ++i) {
    const Keypoint& p = a.keypoints[i];
    const Keypoint& q = b.keypoints[i];
    if (p.x != q.x || p.y != q.y || p.response != q.response || p.scale != q.scale || p.orientation != q.orientation) {
      return false;
    }
  }
  return true;
}

DetectorRegistry DetectorRegistry::with_builtin() {
  DetectorRegistry registry;
  registry.add(DetectorKind::Orb, std::make_shared<BuiltinDetector>());
  return registry;
}

void DetectorRegistry::add(DetectorKind kind, std::shared_ptr<const FeatureDetector> detector) {
  detectors_[kind] = std::move(detector);
}

const FeatureDetector& DetectorRegistry::get(DetectorKind kind) const {
  auto it = detectors_.find(kind);
  if (it == detectors_.end()) {
    fail(ErrorCode::UnsupportedDetector, "no detector registered for '" + std::string(to_string(kind)) + "'");
  }
  return *it->second;
}

const DetectorRegistry& default_registry() {
  static const DetectorRegistry registry = DetectorRegistry::with_builtin();
  return registry;
}

namespace {

struct Plane {
  int width = 0;
  int height = 0;
  std::vector<float> v;

  Plane() = default;
  Plane(int w, int h) : width(w), height(h), v(static_cast<std::size_t>(w) * h, 0.0f) {}
  float& at(int x, int y) { return v[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return v[static_cast<std::size_t>(y) * width + x]; }
  float clamped(int x, int y) const {
    return at(std::clamp(x, 0, width - 1), std::clamp(y, 0, height - 1));
  }
};

Plane downsample(const Plane& src) {
  Plane out(src.width / 2, src.height / 2);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      out.at(x, y) = 0.25f * (src.at(2 * x, 2 * y) + src.at(2 * x + 1, 2 * y) + src.at(2 * x, 2 * y + 1) +
                              src.at(2 * x + 1, 2 * y + 1));
    }
  }
  return out;
}

std::vector<float> gaussian_kernel(double sigma, int radius) {
  std::vector<float> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-(i * i) / (2.0 * sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = static_cast<float>(w);
    sum += w;
  }
  for (auto& w : k) w = static_cast<float>(w / sum);
  return k;
}

Plane blur(const Plane& src, const std::vector<float>& kernel) {
  const int r = static_cast<int>(kernel.size() / 2);
  Plane tmp(src.width, src.height), out(src.width, src.height);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      float acc = 0.0f;
      for (int i = -r; i <= r; ++i) acc += kernel[static_cast<std::size_t>(i + r)] * src.clamped(x + i, y);
      tmp.at(x, y) = acc;
    }
  }
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      float acc = 0.0f;
      for (int i = -r; i <= r; ++i) acc += kernel[static_cast<std::size_t>(i + r)] * tmp.clamped(x, y + i);
      out.at(x, y) = acc;
    }
  }
  return out;
}

Plane harris_response(const Plane& img, double k) {
  Plane ixx(img.width, img.height), iyy(img.width, img.height), ixy(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const float gx = (img.clamped(x + 1, y - 1) + 2.0f * img.clamped(x + 1, y) + img.clamped(x + 1, y + 1) -
                        img.clamped(x - 1, y - 1) - 2.0f * img.clamped(x - 1, y) - img.clamped(x - 1, y + 1)) /
                       8.0f;
      const float gy = (img.clamped(x - 1, y + 1) + 2.0f * img.clamped(x, y + 1) + img.clamped(x + 1, y + 1) -
                        img.clamped(x - 1, y - 1) - 2.0f * img.clamped(x, y - 1) - img.clamped(x + 1, y - 1)) /
                       8.0f;
      ixx.at(x, y) = gx * gx;
      iyy.at(x, y) = gy * gy;
      ixy.at(x, y) = gx * gy;
    }
  }
  const auto window = gaussian_kernel(1.0, 2);
  const Plane sxx = blur(ixx, window), syy = blur(iyy, window), sxy = blur(ixy, window);
  Plane r(img.width, img.height);
  const auto kf = static_cast<float>(k);
  for (std::size_t i = 0; i < r.v.size(); ++i) {
    const float det = sxx.v[i] * syy.v[i] - sxy.v[i] * sxy.v[i];
    const float tr = sxx.v[i] + syy.v[i];
    r.v[i] = det - kf * tr * tr;
  }
  return r;
}

struct PatternPair {
  int x1, y1, x2, y2;
};

// Fixed test pattern: 256 point pairs drawn once from an isotropic Gaussian
// (sigma = 31/5) clipped to radius 13, so any rotation stays inside the patch.
const std::array<PatternPair, 256>& descriptor_pattern() {
  static const std::array<PatternPair, 256> pattern = [] {
    std::array<PatternPair, 256> out{};
    Rng rng(0x5eedULL);
    auto gaussian_offset = [&]() {
      while (true) {
        // Irwin-Hall approximation keeps the draw toolchain-independent.
        double sx = 0.0, sy = 0.0;
        for (int i = 0; i < 12; ++i) {
          sx += uniform01(rng);
          sy += uniform01(rng);
        }
        const double x = (sx - 6.0) * (31.0 / 5.0);
        const double y = (sy - 6.0) * (31.0 / 5.0);
        const int ix = static_cast<int>(std::lround(x));
        const int iy = static_cast<int>(std::lround(y));
        if (ix * ix + iy * iy <= 13 * 13) return std::pair{ix, iy};
      }
    };
    for (auto& p : out) {
      do {
        std::tie(p.x1, p.y1) = gaussian_offset();
        std::tie(p.x2, p.y2) = gaussian_offset();
      } while (p.x1 == p.x2 && p.y1 == p.y2);
    }
    return out;
  }();
  return pattern;
}

struct Candidate {
  int level;
  int ix, iy;  // integer peak at level
  double x, y;  // refined, at level
  double response;
};

double subpixel_offset(double left, double center, double right) {
  const double denom = left - 2.0 * center + right;
  if (!(std::abs(denom) > 1e-20)) return 0.0;
  return std::clamp(0.5 * (left - right) / denom, -0.5, 0.5);
}

double intensity_orientation(const Plane& img, int cx, int cy, int radius) {
  double m10 = 0.0, m01 = 0.0;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dx * dx + dy * dy > radius * radius) continue;
      const double v = img.at(cx + dx, cy + dy);
      m10 += dx * v;
      m01 += dy * v;
    }
  }
  double angle = std::atan2(m01, m10);
  if (angle < 0.0) angle += 2.0 * std::numbers::pi;
  if (angle >= 2.0 * std::numbers::pi) angle = 0.0;
  return angle;
}

}  // namespace

FeatureSet BuiltinDetector::detect(const Image& gray, const DetectorParams& params, int max_features) const {
  if (gray.channels() != 1) fail(ErrorCode::InvalidArgument, "detector expects a gray image");
  if (gray.empty()) fail(ErrorCode::InvalidArgument, "empty image");
  if (max_features < 4) fail(ErrorCode::InvalidArgument, "max_features must be at least 4");
  if (gray.width() <= 2 * kBorder || gray.height() <= 2 * kBorder) {
    fail(ErrorCode::ImageTooSmall, "image smaller than the descriptor patch");
  }

  std::vector<Plane> pyramid;
  {
    Plane base(gray.width(), gray.height());
    for (int y = 0; y < gray.height(); ++y) {
      for (int x = 0; x < gray.width(); ++x) base.at(x, y) = gray.at(x, y, 0) / 255.0f;
    }
    pyramid.push_back(std::move(base));
  }
  while (static_cast<int>(pyramid.size()) < std::max(1, params.levels)) {
    const Plane& last = pyramid.back();
    if (last.width / 2 <= 2 * kBorder || last.height / 2 <= 2 * kBorder) break;
    pyramid.push_back(downsample(last));
  }

  std::vector<Candidate> candidates;
  for (int level = 0; level < static_cast<int>(pyramid.size()); ++level) {
    const Plane& img = pyramid[static_cast<std::size_t>(level)];
    const Plane r = harris_response(img, params.harris_k);
    float max_r = 0.0f;
    for (float v : r.v) max_r = std::max(max_r, v);
    const double threshold = std::max(params.absolute_threshold, params.relative_threshold * max_r);
    constexpr int kNms = 2;
    for (int y = kBorder; y < img.height - kBorder; ++y) {
      for (int x = kBorder; x < img.width - kBorder; ++x) {
        const float c = r.at(x, y);
        if (!(c > threshold)) continue;
        bool peak = true;
        for (int dy = -kNms; dy <= kNms && peak; ++dy) {
          for (int dx = -kNms; dx <= kNms; ++dx) {
            if (dx == 0 && dy == 0) continue;
            const float n = r.at(x + dx, y + dy);
            // Plateaus resolve to their first pixel in raster order.
            const bool earlier = dy < 0 || (dy == 0 && dx < 0);
            if (n > c || (earlier && n == c)) {
              peak = false;
              break;
            }
          }
        }
        if (!peak) continue;
        const double ox = subpixel_offset(r.at(x - 1, y), c, r.at(x + 1, y));
        const double oy = subpixel_offset(r.at(x, y - 1), c, r.at(x, y + 1));
        candidates.push_back({level, x, y, x + ox, y + oy, static_cast<double>(c)});
      }
    }
  }

  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.response != b.response) return a.response > b.response;
    if (a.level != b.level) return a.level < b.level;
    if (a.iy != b.iy) return a.iy < b.iy;
    return a.ix < b.ix;
  });
  if (static_cast<int>(candidates.size()) > max_features) candidates.resize(static_cast<std::size_t>(max_features));

  FeatureSet out;
  out.descriptor_bytes = 32;
  out.keypoints.reserve(candidates.size());
  out.descriptor_data.assign(candidates.size() * 32, 0);

  std::vector<Plane> smoothed(pyramid.size());
  const auto smoothing = gaussian_kernel(2.0, 4);
  const auto& pattern = descriptor_pattern();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Candidate& c = candidates[i];
    auto& sm = smoothed[static_cast<std::size_t>(c.level)];
    if (sm.v.empty()) sm = blur(pyramid[static_cast<std::size_t>(c.level)], smoothing);

    const double factor = std::ldexp(1.0, c.level);
    Keypoint kp;
    kp.x = (c.x + 0.5) * factor - 0.5;
    kp.y = (c.y + 0.5) * factor - 0.5;
    kp.response = c.response;
    kp.scale = factor;
    kp.orientation = intensity_orientation(pyramid[static_cast<std::size_t>(c.level)], c.ix, c.iy, kPatchRadius);
    out.keypoints.push_back(kp);

    const double cs = std::cos(kp.orientation), sn = std::sin(kp.orientation);
    auto sample = [&](int dx, int dy) {
      const auto rx = static_cast<int>(std::lround(cs * dx - sn * dy));
      const auto ry = static_cast<int>(std::lround(sn * dx + cs * dy));
      return sm.at(c.ix + rx, c.iy + ry);
    };
    std::uint8_t* bits = out.descriptor_data.data() + i * 32;
    for (std::size_t b = 0; b < pattern.size(); ++b) {
      const PatternPair& p = pattern[b];
      if (sample(p.x1, p.y1) < sample(p.x2, p.y2)) bits[b / 8] |= static_cast<std::uint8_t>(1u << (b % 8));
    }
  }
  return out;
}

FeatureSet detect_and_describe(const Image& image, DetectorKind kind, const DetectorParams& params, int max_features,
                               const DetectorRegistry& registry) {
  if (image.empty()) fail(ErrorCode::InvalidArgument, "empty image");
  const FeatureDetector& detector = registry.get(kind);
  FeatureSet set = detector.detect(to_gray(image), params, max_features);
  set.detector_kind = kind;
  return set;
}

int hamming_distance(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) fail(ErrorCode::DescriptorLengthMismatch, "descriptor lengths differ");
  int d = 0;
  std::size_t i = 0;
  for (; i + 8 <= a.size(); i += 8) {
    std::uint64_t x = 0, y = 0;
    std::memcpy(&x, a.data() + i, 8);
    std::memcpy(&y, b.data() + i, 8);
    d += std::popcount(x ^ y);
  }
  for (; i < a.size(); ++i) d += std::popcount(static_cast<unsigned>(a[i] ^ b[i]));
  return d;
}

std::vector<MatchPair> match_descriptors(const FeatureSet& query, const FeatureSet& train) {
  if (query.descriptor_bytes != train.descriptor_bytes) {
    fail(ErrorCode::DescriptorLengthMismatch, "query and train descriptors differ in length");
  }
  if (train.size() < 2) fail(ErrorCode::TrainSetTooSmall, "2-NN matching needs at least 2 train descriptors");
  std::vector<MatchPair> out;
  out.reserve(query.size());
  for (std::size_t q = 0; q < query.size(); ++q) {
    const auto qd = query.descriptor(q);
    int best = INT32_MAX, second = INT32_MAX;
    int best_idx = -1, second_idx = -1;
    for (std::size_t t = 0; t < train.size(); ++t) {
      const int d = hamming_distance(qd, train.descriptor(t));
      if (d < best) {
        second = best;
        second_idx = best_idx;
        best = d;
        best_idx = static_cast<int>(t);
      } else if (d < second) {
        second = d;
        second_idx = static_cast<int>(t);
      }
    }
    const int qi = static_cast<int>(q);
    out.push_back({Match{qi, best_idx, static_cast<double>(best)}, Match{qi, second_idx, static_cast<double>(second)}});
  }
  return out;
}

std::vector<Match> lowe_ratio_filter(std::span<const MatchPair> pairs, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) fail(ErrorCode::InvalidArgument, "Lowe ratio must lie in (0, 1)");
  std::vector<Match> kept;
  for (const auto& p : pairs) {
    if (p.best.distance < ratio * p.second.distance) kept.push_back(p.best);
  }
  return kept;
}

}  // namespace egopano
