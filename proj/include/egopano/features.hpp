#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "egopano/image.hpp"

namespace egopano {

// Detector names users can pick. Only Orb is backed by the built-in detector;
// the others resolve through the registry when a plug-in provides them.
enum class DetectorKind { Orb, Brisk, Kaze, Akaze };

std::string_view to_string(DetectorKind kind);
DetectorKind parse_detector_kind(std::string_view name);  // case-insensitive

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double response = 0.0;
  double scale = 1.0;        // pyramid level factor
  double orientation = 0.0;  // radians in [0, 2*pi)
};

struct FeatureSet {
  int frame_id = -1;
  DetectorKind detector_kind = DetectorKind::Orb;
  std::vector<Keypoint> keypoints;
  int descriptor_bytes = 32;
  // Row-major, descriptor_bytes per keypoint.
  std::vector<std::uint8_t> descriptor_data;

  std::size_t size() const { return keypoints.size(); }
  std::span<const std::uint8_t> descriptor(std::size_t i) const {
    return {descriptor_data.data() + i * static_cast<std::size_t>(descriptor_bytes),
            static_cast<std::size_t>(descriptor_bytes)};
  }
  friend bool operator==(const FeatureSet& a, const FeatureSet& b);
};

struct DetectorParams {
  int levels = 3;                  // factor-2 pyramid
  double harris_k = 0.04;
  double relative_threshold = 1e-3;  // fraction of the strongest response per level
  double absolute_threshold = 1e-6;  // on [0,1]-scaled intensities
};

struct Match {
  int query_idx = 0;
  int train_idx = 0;
  double distance = 0.0;
  friend bool operator==(const Match&, const Match&) = default;
};

struct MatchPair {
  Match best;
  Match second;
  friend bool operator==(const MatchPair&, const MatchPair&) = default;
};

// Detector plug-in interface: gray 8-bit input, keypoints sorted by descending
// response, at most max_features of them.
class FeatureDetector {
 public:
  virtual ~FeatureDetector() = default;
  virtual FeatureSet detect(const Image& gray, const DetectorParams& params, int max_features) const = 0;
};

class DetectorRegistry {
 public:
  // Registry with the built-in detector registered under Orb.
  static DetectorRegistry with_builtin();

  void add(DetectorKind kind, std::shared_ptr<const FeatureDetector> detector);
  bool has(DetectorKind kind) const { return detectors_.count(kind) != 0; }
  const FeatureDetector& get(DetectorKind kind) const;

 private:
  std::map<DetectorKind, std::shared_ptr<const FeatureDetector>> detectors_;
};

const DetectorRegistry& default_registry();

// Built-in: Harris corners on a factor-2 pyramid, intensity-centroid
// orientation, 256-bit steered binary intensity-comparison descriptor.
class BuiltinDetector final : public FeatureDetector {
 public:
  FeatureSet detect(const Image& gray, const DetectorParams& params, int max_features) const override;

  // Keypoints closer than this to the border (at their level) are dropped.
  static constexpr int kBorder = 18;
  static constexpr int kPatchRadius = 15;
};

inline constexpr int kDefaultMaxFeatures = 1500;

FeatureSet detect_and_describe(const Image& image, DetectorKind kind, const DetectorParams& params = {},
                               int max_features = kDefaultMaxFeatures,
                               const DetectorRegistry& registry = default_registry());

int hamming_distance(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

// Exhaustive 2-NN: for every query descriptor, the two nearest train descriptors.
std::vector<MatchPair> match_descriptors(const FeatureSet& query, const FeatureSet& train);

// Keeps best iff best.distance < ratio * second.distance, in input order.
std::vector<Match> lowe_ratio_filter(std::span<const MatchPair> pairs, double ratio);

}  // namespace egopano
