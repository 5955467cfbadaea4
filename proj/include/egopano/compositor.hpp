#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "egopano/features.hpp"
#include "egopano/geometry.hpp"
#include "egopano/homfilter.hpp"
#include "egopano/image.hpp"
#include "egopano/ingest.hpp"

namespace egopano {

struct PanoramaParams {
  int range_start = 0;  // frame ids, inclusive
  int range_end = 0;
  std::optional<int> base_frame_id;  // default: median of the selected frames
  int sample_stride = 1;
  DetectorKind detector = DetectorKind::Orb;
  int max_features = kDefaultMaxFeatures;
  double lowe_ratio = 0.75;
  double ransac_thresh = 3.0;
  double ransac_confidence = 0.995;
  int ransac_max_iters = 2000;
  int min_inliers = 10;
  double alpha = 1.0;
  FilterOptions filters;
  std::uint64_t seed = 0;
};

// Frame ids the params select, in temporal order, and the resolved base.
struct FrameSelection {
  std::vector<int> frame_ids;
  int base_frame_id = 0;
};

FrameSelection select_frames(const Session& session, const PanoramaParams& params);

enum class PlacementStatus { Included, Excluded };

enum class ExclusionReason {
  None,
  StretchOutlier,
  VerticalFlip,
  HorizontalFlip,
  BothFlips,
  Twisted,
  NoModelFound,
  TooFewMatches,
  ImageUnreadable,
};

std::string_view to_string(ExclusionReason r);
ExclusionReason parse_exclusion_reason(std::string_view s);

struct Placement {
  int frame_id = 0;
  std::optional<Homography> homography;  // to the base plane
  std::optional<Quad> quad;              // canvas coordinates
  PlacementStatus status = PlacementStatus::Included;
  ExclusionReason reason = ExclusionReason::None;
  int match_count = 0;
  int inlier_count = 0;

  bool included() const { return status == PlacementStatus::Included; }
};

struct CanvasLayout {
  int width = 0;
  int height = 0;
  Vec2 offset;  // added to base-plane coordinates
};

struct Panorama {
  int canvas_width = 0;
  int canvas_height = 0;
  Vec2 offset;
  int frame_width = 0;
  int frame_height = 0;
  int base_frame_id = 0;
  std::vector<Placement> placements;  // temporal order
  FilterReport filter_report;
  Image image;  // RGBA

  const Placement* placement(int frame_id) const;
};

struct TransformedDetection {
  Detection detection;
  Quad quad;  // canvas coordinates
  Vec2 centroid;
};

// A warped frame occupying [x0, x0 + tile.width) x [y0, y0 + tile.height) of the canvas.
struct Tile {
  int x0 = 0;
  int y0 = 0;
  Image rgba;
};

inline constexpr double kMaxCanvasPixels = 64.0 * 1024.0 * 1024.0;

CanvasLayout plan_layout(std::span<const Homography> homographies, int frame_width, int frame_height);

// Inverse-maps every canvas pixel through H^-1 with bilinear sampling; pixels
// whose preimage falls outside the source stay fully transparent.
Tile warp_frame(const Image& rgb, const Homography& h, const CanvasLayout& canvas, double alpha);

// Straight-alpha source-over, later tiles over earlier ones.
Image composite(std::span<const Tile> tiles, int canvas_width, int canvas_height);
void composite_over(Image& canvas, const Tile& tile);

TransformedDetection transform_detection(const Detection& d, const Placement& placement, Vec2 canvas_offset);

// Predictions on Included frames of the panorama, mapped into canvas space in
// temporal order. Detections on excluded or unselected frames are skipped.
std::vector<TransformedDetection> transform_predictions(const Session& session, const Panorama& panorama);

Panorama build_panorama(const Session& session, const PanoramaParams& params);

}  // namespace egopano
