#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "egopano/types.hpp"

namespace egopano {

struct FrameRef {
  int id = 0;
  double timestamp = 0.0;
  int width = 0;
  int height = 0;
  std::string image_path;  // relative to the session root

  friend bool operator==(const FrameRef&, const FrameRef&) = default;
};

enum class DetectionSource { Prediction, GroundTruth };

struct Detection {
  double timestamp = 0.0;
  std::string label;
  BBox bbox;
  double confidence = 1.0;
  DetectionSource source = DetectionSource::Prediction;
  int matched_frame_id = -1;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  double skew = 0.0;

  // Upper-triangular K with K(2,2) = 1.
  Mat3 matrix() const;
  bool valid() const { return fx > 0.0 && fy > 0.0; }

  friend bool operator==(const Intrinsics&, const Intrinsics&) = default;
};

struct Session {
  std::filesystem::path root;
  std::vector<FrameRef> frames;
  std::vector<Detection> predictions;
  std::vector<Detection> ground_truth;
  Intrinsics intrinsics;
  std::vector<std::string> vocabulary;  // sorted, unique

  const FrameRef& frame(int frame_id) const;
  // Position of frame_id in `frames`, or -1.
  int frame_index(int frame_id) const;
  std::filesystem::path image_path(const FrameRef& frame) const { return root / frame.image_path; }

  // Equality ignores `root` so a session re-loaded from a copy compares equal.
  friend bool operator==(const Session& a, const Session& b) {
    return a.frames == b.frames && a.predictions == b.predictions && a.ground_truth == b.ground_truth &&
           a.intrinsics == b.intrinsics && a.vocabulary == b.vocabulary;
  }
};

// Reads frames.json, detections.jsonl and the optional groundtruth.jsonl,
// intrinsics.json and vocabulary.json from `dir`, validates them and assigns
// every detection to its nearest frame in time.
Session load_session(const std::filesystem::path& dir);

// Writes the metadata files of `session` into `dir` (frame images are not copied).
void save_session_metadata(const Session& session, const std::filesystem::path& dir);

// Sorts by timestamp (stable) and sets matched_frame_id to the frame with the
// nearest timestamp; ties go to the earlier frame.
std::vector<Detection> match_detections_to_frames(std::vector<Detection> detections,
                                                  std::span<const FrameRef> frames);

Intrinsics default_intrinsics(int width, int height);

std::vector<std::string> session_vocabulary(const Session& session);

}  // namespace egopano
