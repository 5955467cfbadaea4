#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "egopano/compositor.hpp"

namespace egopano {

enum class OverlayStyle { BoundingBoxes, Centroids, Arrows };

std::string_view to_string(OverlayStyle s);
OverlayStyle parse_overlay_style(std::string_view s);  // "boxes", "centroids", "arrows"

struct OverlaySpec {
  OverlayStyle style = OverlayStyle::BoundingBoxes;
  double min_confidence = 0.0;
  std::optional<std::vector<std::string>> label_filter;
  std::optional<int> highlighted_frame;
};

using Rgba = std::array<std::uint8_t, 4>;

// Reserved for the highlighted frame outline; never assigned to a label.
inline constexpr Rgba kHighlightColor = {255, 255, 255, 255};

class Palette {
 public:
  // Colors assigned in the given order (first appearance), cycling past 12.
  static Palette for_labels(std::span<const std::string> labels);
  static const std::array<Rgba, 12>& base_colors();

  Rgba color(const std::string& label) const;
  bool cycled() const { return cycled_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  const std::map<std::string, Rgba>& assignments() const { return colors_; }

 private:
  std::map<std::string, Rgba> colors_;
  bool cycled_ = false;
  std::vector<std::string> warnings_;
};

inline constexpr int kBoxLineWidth = 2;
inline constexpr int kCentroidRadius = 4;

void validate(const OverlaySpec& spec);

// Detections that pass min_confidence and the label filter.
std::vector<TransformedDetection> filter_for_overlay(std::span<const TransformedDetection> detections,
                                                     const OverlaySpec& spec);

// Transparent canvas-sized raster with the marks for `spec`. The panorama is
// only read.
Image render_overlay(const Panorama& panorama, std::span<const TransformedDetection> detections,
                     const OverlaySpec& spec, const Palette& palette);

}  // namespace egopano
