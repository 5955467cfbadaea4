#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "egopano/geometry.hpp"
#include "egopano/ingest.hpp"

namespace egopano {

// (sigma1, sigma2) of the calibrated homography: proxies for x/y stretch.
struct ScaleSignature {
  int frame_id = 0;
  double sigma1 = 1.0;
  double sigma2 = 1.0;
};

struct Clustering {
  int k = 0;
  std::vector<Vec2> centroids;
  std::vector<int> assignment;  // parallel to the clustered points
  std::vector<double> wss_by_k;  // wss_by_k[i] is WSS for k = i + 1
};

enum class FlipClass { None, VerticalFlip, HorizontalFlip, BothFlips, Twisted };

enum class RemovalReason { StretchOutlier, VerticalFlip, HorizontalFlip, BothFlips, Twisted };

std::string_view to_string(FlipClass c);
std::string_view to_string(RemovalReason r);

// Where "closest cluster" distances are measured from.
enum class StretchReference {
  Origin,  // (0, 0)
  Unit,    // (1, 1), the singular values of the identity
};

// How K enters the calibrated homography used for scale signatures.
enum class CalibrationConvention {
  KHKinv,  // K * H * K^-1
  KinvHK,  // K^-1 * H * K
};

std::string_view to_string(StretchReference r);
std::string_view to_string(CalibrationConvention c);

struct KMeansOptions {
  int k_max = 8;
  double elbow_drop_threshold = 0.10;
  int max_iterations = 100;
  // The drop ratio's denominator is max(WSS(1), n * wss_floor_per_point), so
  // splitting points that barely differ in scale never counts as a sharp drop.
  double wss_floor_per_point = 1.0;
};

struct StretchOptions {
  KMeansOptions kmeans;
  StretchReference reference = StretchReference::Origin;
  // K^-1 H K keeps translations at their normalized size; K H K^-1 scales them
  // by the focal length, which buries any stretch under ordinary panning.
  CalibrationConvention convention = CalibrationConvention::KinvHK;
};

struct FilterOptions {
  bool stretch_on = true;
  bool flip_on = true;
  StretchOptions stretch;
};

struct FrameHomography {
  int frame_id = 0;
  Homography homography;
};

struct Removal {
  int frame_id = 0;
  RemovalReason reason = RemovalReason::StretchOutlier;
  friend bool operator==(const Removal&, const Removal&) = default;
};

struct StretchResult {
  std::vector<int> kept;
  std::vector<Removal> removed;
  Clustering clustering;
  std::vector<ScaleSignature> signatures;
  int retained_cluster = 0;
  bool base_guard_triggered = false;
};

struct FilterReport {
  std::vector<int> kept;
  std::vector<Removal> removed;
  std::optional<Clustering> clustering;
  std::vector<ScaleSignature> signatures;  // frames that entered stretch clustering
  std::vector<FlipClass> flip_classes;     // parallel to the input frames when flip_on
  int retained_cluster = -1;
  bool base_guard_triggered = false;
};

ScaleSignature scale_signature(int frame_id, const Homography& h, const Intrinsics& k,
                               CalibrationConvention convention = CalibrationConvention::KHKinv);

// Lloyd k-means at a fixed k with greedy farthest-point seeding. Returns fewer
// than k clusters when the points have fewer distinct positions.
Clustering kmeans(std::span<const Vec2> points, int k, std::uint64_t seed, int max_iterations = 100);

double within_cluster_ss(std::span<const Vec2> points, const Clustering& c);

// Sweeps k = 1..min(k_max, n) and keeps the smallest k whose next split no
// longer improves WSS by elbow_drop_threshold * max(WSS(1), n * wss_floor_per_point).
Clustering kmeans_elbow(std::span<const Vec2> points, const KMeansOptions& options, std::uint64_t seed);

StretchResult filter_stretched(std::span<const ScaleSignature> signatures, int base_frame_id,
                               const StretchOptions& options, std::uint64_t seed);

// Corner-ordering test on the projected (w x h) frame outline.
FlipClass detect_flip(const Homography& h, double width, double height);

// Flip filtering first, then stretch clustering over the survivors. Every input
// frame appears exactly once in kept or removed; the base frame is always kept.
FilterReport filter_frames(std::span<const FrameHomography> frames, const Intrinsics& k, int base_frame_id,
                           double width, double height, const FilterOptions& options, std::uint64_t seed);

}  // namespace egopano
