#include "egopano/overlay.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "egopano/analytics.hpp"
#include "egopano/error.hpp"

namespace egopano {

std::string_view to_string(OverlayStyle s) {
  switch (s) {
    case OverlayStyle::BoundingBoxes: return "boxes";
    case OverlayStyle::Centroids: return "centroids";
    case OverlayStyle::Arrows: return "arrows";
  }
  return "boxes";
}

OverlayStyle parse_overlay_style(std::string_view s) {
  if (s == "boxes" || s == "bounding_boxes") return OverlayStyle::BoundingBoxes;
  if (s == "centroids") return OverlayStyle::Centroids;
  if (s == "arrows") return OverlayStyle::Arrows;
  fail(ErrorCode::InvalidArgument, "style must be boxes, centroids or arrows");
}

const std::array<Rgba, 12>& Palette::base_colors() {
  // Saturated hues that rarely occur in indoor scenes.
  static const std::array<Rgba, 12> colors = {{
      {255, 0, 255, 255},  {0, 255, 0, 255},   {0, 255, 255, 255}, {255, 255, 0, 255},
      {255, 0, 0, 255},    {0, 128, 255, 255}, {255, 128, 0, 255}, {128, 0, 255, 255},
      {0, 255, 128, 255},  {255, 0, 128, 255}, {128, 255, 0, 255}, {0, 0, 255, 255},
  }};
  return colors;
}

Palette Palette::for_labels(std::span<const std::string> labels) {
  Palette p;
  std::size_t next = 0;
  for (const auto& label : labels) {
    if (p.colors_.count(label)) continue;
    p.colors_[label] = base_colors()[next % base_colors().size()];
    ++next;
  }
  if (next > base_colors().size()) {
    p.cycled_ = true;
    p.warnings_.push_back("UnknownLabelColor: " + std::to_string(next) + " labels share 12 colors; colors repeat");
  }
  return p;
}

Rgba Palette::color(const std::string& label) const {
  auto it = colors_.find(label);
  if (it != colors_.end()) return it->second;
  // Stable fallback for labels outside the palette (FNV-1a).
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : label) h = (h ^ c) * 1099511628211ULL;
  return base_colors()[h % base_colors().size()];
}

void validate(const OverlaySpec& spec) {
  if (!(spec.min_confidence >= 0.0 && spec.min_confidence <= 1.0)) {
    fail(ErrorCode::InvalidArgument, "min_confidence must lie in [0, 1]");
  }
}

std::vector<TransformedDetection> filter_for_overlay(std::span<const TransformedDetection> detections,
                                                     const OverlaySpec& spec) {
  std::vector<TransformedDetection> out;
  for (const auto& d : detections) {
    if (d.detection.confidence < spec.min_confidence) continue;
    if (spec.label_filter && std::find(spec.label_filter->begin(), spec.label_filter->end(), d.detection.label) ==
                                 spec.label_filter->end()) {
      continue;
    }
    out.push_back(d);
  }
  return out;
}

namespace {

void put(Image& img, int x, int y, const Rgba& c) {
  if (x < 0 || y < 0 || x >= img.width() || y >= img.height()) return;
  std::copy(c.begin(), c.end(), &img.at(x, y, 0));
}

// Pixels whose centre lies within width/2 of segment ab.
void draw_segment(Image& img, Vec2 a, Vec2 b, double width, const Rgba& c) {
  const double r = width / 2.0;
  const int x0 = static_cast<int>(std::floor(std::min(a.x, b.x) - r - 1.0));
  const int x1 = static_cast<int>(std::ceil(std::max(a.x, b.x) + r + 1.0));
  const int y0 = static_cast<int>(std::floor(std::min(a.y, b.y) - r - 1.0));
  const int y1 = static_cast<int>(std::ceil(std::max(a.y, b.y) + r + 1.0));
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  for (int y = std::max(y0, 0); y <= std::min(y1, img.height() - 1); ++y) {
    for (int x = std::max(x0, 0); x <= std::min(x1, img.width() - 1); ++x) {
      const Vec2 p{x + 0.5, y + 0.5};
      double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      if (distance(p, Vec2{a.x + t * dx, a.y + t * dy}) <= r) put(img, x, y, c);
    }
  }
}

void draw_disc(Image& img, Vec2 center, double radius, const Rgba& c) {
  const int x0 = static_cast<int>(std::floor(center.x - radius - 1.0));
  const int x1 = static_cast<int>(std::ceil(center.x + radius + 1.0));
  const int y0 = static_cast<int>(std::floor(center.y - radius - 1.0));
  const int y1 = static_cast<int>(std::ceil(center.y + radius + 1.0));
  for (int y = std::max(y0, 0); y <= std::min(y1, img.height() - 1); ++y) {
    for (int x = std::max(x0, 0); x <= std::min(x1, img.width() - 1); ++x) {
      if (distance(Vec2{x + 0.5, y + 0.5}, center) <= radius) put(img, x, y, c);
    }
  }
}

void draw_outline(Image& img, const Quad& q, const Rgba& c) {
  for (std::size_t i = 0; i < 4; ++i) draw_segment(img, q[i], q[(i + 1) % 4], kBoxLineWidth, c);
}

void draw_arrow(Image& img, Vec2 from, Vec2 to, const Rgba& c) {
  draw_segment(img, from, to, kBoxLineWidth, c);
  const double len = distance(from, to);
  if (!(len > 0.0)) return;
  constexpr double kHeadLength = 8.0;
  constexpr double kHeadAngle = 25.0 * std::numbers::pi / 180.0;
  const double back = std::atan2(from.y - to.y, from.x - to.x);
  for (double side : {-1.0, 1.0}) {
    const double a = back + side * kHeadAngle;
    const double head = std::min(kHeadLength, len);
    draw_segment(img, to, Vec2{to.x + head * std::cos(a), to.y + head * std::sin(a)}, kBoxLineWidth, c);
  }
}

}  // namespace

Image render_overlay(const Panorama& panorama, std::span<const TransformedDetection> detections,
                     const OverlaySpec& spec, const Palette& palette) {
  validate(spec);
  Image out(panorama.canvas_width, panorama.canvas_height, 4, 0);
  const auto visible = filter_for_overlay(detections, spec);
  switch (spec.style) {
    case OverlayStyle::BoundingBoxes:
      for (const auto& d : visible) draw_outline(out, d.quad, palette.color(d.detection.label));
      break;
    case OverlayStyle::Centroids:
      for (const auto& d : visible) draw_disc(out, d.centroid, kCentroidRadius, palette.color(d.detection.label));
      break;
    case OverlayStyle::Arrows:
      for (const auto& chain : arrow_chains_by_label(visible)) {
        const Rgba c = palette.color(chain.label);
        if (chain.nodes.size() == 1) draw_disc(out, chain.nodes.front().centroid, kBoxLineWidth, c);
        for (std::size_t i = 1; i < chain.nodes.size(); ++i) {
          draw_arrow(out, chain.nodes[i - 1].centroid, chain.nodes[i].centroid, c);
        }
      }
      break;
  }
  if (spec.highlighted_frame) {
    const Placement* p = panorama.placement(*spec.highlighted_frame);
    if (p && p->quad) draw_outline(out, *p->quad, kHighlightColor);
  }
  return out;
}

}  // namespace egopano
