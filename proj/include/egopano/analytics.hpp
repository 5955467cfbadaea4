#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "egopano/compositor.hpp"
#include "egopano/ingest.hpp"

namespace egopano {

enum class TimelineMetric { Confidence, IoU };

std::string_view to_string(TimelineMetric m);
TimelineMetric parse_timeline_metric(std::string_view s);

struct TimelineMatrix {
  TimelineMetric metric = TimelineMetric::Confidence;
  std::vector<std::string> labels;  // rows
  std::vector<int> frame_ids;       // columns
  std::vector<std::optional<double>> values;  // row-major, absent = no data

  const std::optional<double>& at(std::size_t row, std::size_t col) const {
    return values[row * frame_ids.size() + col];
  }
};

struct ClassificationCounts {
  int frame_id = 0;
  int tp = 0;
  int fp = 0;
  int fn = 0;
  int tn = 0;
  friend bool operator==(const ClassificationCounts&, const ClassificationCounts&) = default;
};

struct ChainNode {
  int frame_id = 0;
  Vec2 centroid;
};

struct ArrowChain {
  std::string label;
  int chain_id = 0;
  std::vector<ChainNode> nodes;
};

struct DistanceStep {
  int chain_id = 0;
  int from_frame_id = 0;
  int to_frame_id = 0;
  double distance = 0.0;
};

struct DistanceSeries {
  std::string label;
  std::vector<DistanceStep> steps;
};

enum class PoiKind { NewLabel, DuplicateLabel, MissingLabel };

std::string_view to_string(PoiKind k);

struct PoiEvent {
  PoiKind kind = PoiKind::NewLabel;
  int frame_id = 0;
  std::string label;
  std::string detail;
  friend bool operator==(const PoiEvent&, const PoiEvent&) = default;
};

inline constexpr double kDefaultIouThreshold = 0.5;
inline constexpr int kDefaultMissingFrames = 15;

double iou(const BBox& a, const BBox& b);

// Labels ordered by first appearance (earliest detection in either stream),
// then vocabulary labels never observed, alphabetically.
std::vector<std::string> labels_by_first_appearance(const Session& session);

TimelineMatrix summary_matrix(const Session& session, TimelineMetric metric);

ClassificationCounts classify_detections(int frame_id, std::span<const Detection> predictions,
                                         std::span<const Detection> truths, double iou_threshold,
                                         std::span<const std::string> vocabulary);

std::vector<ClassificationCounts> classify_session(const Session& session, double iou_threshold);

// Chains for one label; input must be time-ordered transformed detections of that label.
std::vector<ArrowChain> arrow_chains(std::span<const TransformedDetection> detections);

// Chains for every label present, labels sorted.
std::vector<ArrowChain> arrow_chains_by_label(std::span<const TransformedDetection> detections);

std::vector<DistanceSeries> distance_series(std::span<const ArrowChain> chains);

std::vector<PoiEvent> poi_events(const Session& session, int missing_threshold);

}  // namespace egopano
