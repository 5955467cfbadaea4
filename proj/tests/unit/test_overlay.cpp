#include <gtest/gtest.h>

#include <set>

#include "egopano/error.hpp"
#include "egopano/overlay.hpp"

using namespace egopano;

namespace {

Panorama blank_panorama(int w, int h) {
  Panorama p;
  p.canvas_width = w;
  p.canvas_height = h;
  p.frame_width = 40;
  p.frame_height = 30;
  Placement pl;
  pl.frame_id = 0;
  pl.homography = Homography::identity();
  pl.quad = Quad{Vec2{10, 10}, Vec2{50, 10}, Vec2{50, 40}, Vec2{10, 40}};
  p.placements.push_back(pl);
  p.image = Image(w, h, 4, 0);
  return p;
}

TransformedDetection at(int frame, const std::string& label, Vec2 c, double conf = 0.9) {
  TransformedDetection t;
  t.detection.timestamp = frame;
  t.detection.matched_frame_id = frame;
  t.detection.label = label;
  t.detection.confidence = conf;
  t.detection.bbox = {c.x - 6, c.y - 5, c.x + 6, c.y + 5};
  t.quad = t.detection.bbox.corners();
  t.centroid = c;
  return t;
}

Rgba pixel(const Image& img, int x, int y) {
  return {img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2), img.at(x, y, 3)};
}

// 8-connected components of pixels painted exactly `color`.
int count_marks(const Image& img, Rgba color) {
  std::vector<bool> seen(static_cast<std::size_t>(img.width() * img.height()), false);
  int marks = 0;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const auto idx = static_cast<std::size_t>(y * img.width() + x);
      if (seen[idx] || pixel(img, x, y) != color) continue;
      ++marks;
      std::vector<std::pair<int, int>> stack{{x, y}};
      seen[idx] = true;
      while (!stack.empty()) {
        auto [cx, cy] = stack.back();
        stack.pop_back();
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx, ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= img.width() || ny >= img.height()) continue;
            const auto n = static_cast<std::size_t>(ny * img.width() + nx);
            if (seen[n] || pixel(img, nx, ny) != color) continue;
            seen[n] = true;
            stack.push_back({nx, ny});
          }
        }
      }
    }
  }
  return marks;
}

int painted(const Image& img) {
  int n = 0;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) n += img.at(x, y, 3) != 0;
  }
  return n;
}

}  // namespace

TEST(Overlay, StyleNames) {
  for (auto s : {OverlayStyle::BoundingBoxes, OverlayStyle::Centroids, OverlayStyle::Arrows}) {
    EXPECT_EQ(parse_overlay_style(to_string(s)), s);
  }
  EXPECT_EQ(parse_overlay_style("bounding_boxes"), OverlayStyle::BoundingBoxes);
  EXPECT_THROW(parse_overlay_style("heatmap"), Error);
}

TEST(Overlay, EmptyIsTransparent) {
  const Panorama p = blank_panorama(80, 60);
  for (auto style : {OverlayStyle::BoundingBoxes, OverlayStyle::Centroids, OverlayStyle::Arrows}) {
    OverlaySpec spec;
    spec.style = style;
    const Image img = render_overlay(p, {}, spec, Palette::for_labels({}));
    EXPECT_EQ(img.width(), 80);
    EXPECT_EQ(img.height(), 60);
    EXPECT_EQ(img.channels(), 4);
    EXPECT_EQ(painted(img), 0);
  }
}

TEST(Overlay, OneCentroidIsOneDisc) {
  const Panorama p = blank_panorama(80, 60);
  const std::vector<std::string> labels{"cup"};
  const Palette pal = Palette::for_labels(labels);
  const std::vector<TransformedDetection> dets{at(0, "cup", {30.3, 20.6})};
  OverlaySpec spec;
  spec.style = OverlayStyle::Centroids;
  const Image img = render_overlay(p, dets, spec, pal);
  EXPECT_EQ(count_marks(img, pal.color("cup")), 1);
  int expected = 0;
  for (int y = 0; y < 60; ++y) {
    for (int x = 0; x < 80; ++x) {
      const bool inside = std::hypot(x + 0.5 - 30.3, y + 0.5 - 20.6) <= kCentroidRadius;
      expected += inside;
      EXPECT_EQ(pixel(img, x, y) == pal.color("cup"), inside) << x << "," << y;
    }
  }
  EXPECT_EQ(painted(img), expected);
}

TEST(Overlay, BoxOutlineIsTwoPixelsWide) {
  const Panorama p = blank_panorama(80, 60);
  const std::vector<std::string> labels{"cup"};
  const Palette pal = Palette::for_labels(labels);
  TransformedDetection d = at(0, "cup", {40, 30});
  d.quad = BBox{20, 15, 60, 45}.corners();
  const Image img = render_overlay(p, std::vector{d}, {}, pal);
  EXPECT_EQ(count_marks(img, pal.color("cup")), 1);
  // Pixel centres within 1 px of the edge are painted; the interior is not.
  EXPECT_EQ(pixel(img, 19, 30), pal.color("cup"));
  EXPECT_EQ(pixel(img, 20, 30), pal.color("cup"));
  EXPECT_EQ(pixel(img, 18, 30)[3], 0);
  EXPECT_EQ(pixel(img, 21, 30)[3], 0);
  EXPECT_EQ(pixel(img, 40, 30)[3], 0);
  EXPECT_EQ(pixel(img, 40, 14), pal.color("cup"));
}

TEST(Overlay, LabelFilterRemovesOnlyThatLabel) {
  const Panorama p = blank_panorama(200, 120);
  const std::vector<std::string> labels{"cup", "mug", "knife"};
  const Palette pal = Palette::for_labels(labels);
  std::vector<TransformedDetection> dets;
  for (int i = 0; i < 6; ++i) {
    dets.push_back(at(i, labels[static_cast<std::size_t>(i % 3)], {15.0 + 30 * i, 20.0 + 15 * (i % 3)}));
  }
  for (auto style : {OverlayStyle::BoundingBoxes, OverlayStyle::Centroids}) {
    OverlaySpec all;
    all.style = style;
    OverlaySpec some = all;
    some.label_filter = std::vector<std::string>{"cup", "knife"};
    const Image a = render_overlay(p, dets, all, pal), b = render_overlay(p, dets, some, pal);
    EXPECT_EQ(count_marks(a, pal.color("mug")), 2);
    EXPECT_EQ(count_marks(b, pal.color("mug")), 0);
    for (const char* kept : {"cup", "knife"}) {
      EXPECT_EQ(count_marks(a, pal.color(kept)), 2);
      EXPECT_EQ(count_marks(b, pal.color(kept)), 2);
    }
  }
}

TEST(Overlay, MinConfidence) {
  const std::vector<TransformedDetection> dets{at(0, "cup", {20, 20}, 0.3), at(1, "cup", {60, 40}, 0.8)};
  OverlaySpec spec;
  spec.min_confidence = 0.5;
  const auto kept = filter_for_overlay(dets, spec);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].detection.confidence, 0.8);
  spec.min_confidence = 0.8;
  EXPECT_EQ(filter_for_overlay(dets, spec).size(), 1u);
  spec.min_confidence = 1.01;
  EXPECT_THROW(validate(spec), Error);
  spec.min_confidence = -0.1;
  EXPECT_THROW(validate(spec), Error);
}

TEST(Overlay, ArrowsConnectConsecutiveCentroids) {
  const Panorama p = blank_panorama(200, 100);
  const std::vector<std::string> labels{"cup"};
  const Palette pal = Palette::for_labels(labels);
  const std::vector<TransformedDetection> dets{at(0, "cup", {20, 50}), at(1, "cup", {80, 50}), at(2, "cup", {140, 50})};
  OverlaySpec spec;
  spec.style = OverlayStyle::Arrows;
  const Image img = render_overlay(p, dets, spec, pal);
  EXPECT_EQ(count_marks(img, pal.color("cup")), 1);
  for (int x = 22; x < 138; ++x) EXPECT_EQ(pixel(img, x, 49), pal.color("cup")) << x;
  EXPECT_EQ(pixel(img, 100, 40)[3], 0);
  // Arrowheads open backwards from each target.
  EXPECT_EQ(pixel(img, 74, 47), pal.color("cup"));
  EXPECT_EQ(pixel(img, 74, 52), pal.color("cup"));
}

TEST(Overlay, HighlightUsesReservedColor) {
  const Panorama p = blank_panorama(80, 60);
  OverlaySpec spec;
  spec.highlighted_frame = 0;
  const Image img = render_overlay(p, {}, spec, Palette::for_labels({}));
  EXPECT_EQ(count_marks(img, kHighlightColor), 1);
  EXPECT_EQ(pixel(img, 10, 25), kHighlightColor);
  EXPECT_EQ(pixel(img, 30, 25)[3], 0);
  spec.highlighted_frame = 99;
  EXPECT_EQ(painted(render_overlay(p, {}, spec, Palette::for_labels({}))), 0);
}

TEST(Palette, FirstAppearanceAndCycling) {
  const auto& base = Palette::base_colors();
  for (const auto& c : base) EXPECT_NE(c, kHighlightColor);
  EXPECT_EQ(std::set(base.begin(), base.end()).size(), 12u);

  std::vector<std::string> labels;
  for (int i = 0; i < 14; ++i) labels.push_back("label" + std::to_string(i));
  const Palette few = Palette::for_labels(std::span(labels).first(12));
  EXPECT_FALSE(few.cycled());
  EXPECT_TRUE(few.warnings().empty());
  for (int i = 0; i < 12; ++i) EXPECT_EQ(few.color(labels[static_cast<std::size_t>(i)]), base[static_cast<std::size_t>(i)]);

  const Palette many = Palette::for_labels(labels);
  EXPECT_TRUE(many.cycled());
  ASSERT_EQ(many.warnings().size(), 1u);
  EXPECT_NE(many.warnings()[0].find("UnknownLabelColor"), std::string::npos);
  EXPECT_EQ(many.color("label12"), base[0]);
  EXPECT_EQ(many.color("label13"), base[1]);
  // Labels outside the assignment still get a stable base color.
  EXPECT_EQ(many.color("never-seen"), many.color("never-seen"));
  EXPECT_NE(std::find(base.begin(), base.end(), many.color("never-seen")), base.end());
}

TEST(Overlay, DeterministicAndPanoramaUntouched) {
  Panorama p = blank_panorama(120, 80);
  for (int y = 0; y < 80; ++y) {
    for (int x = 0; x < 120; ++x) p.image.at(x, y, 0) = static_cast<std::uint8_t>(x + y);
  }
  const Image before = p.image;
  const std::vector<std::string> labels{"cup", "mug"};
  const Palette pal = Palette::for_labels(labels);
  const std::vector<TransformedDetection> dets{at(0, "cup", {30, 30}), at(0, "mug", {70, 40}), at(1, "cup", {40, 35})};
  for (auto style : {OverlayStyle::BoundingBoxes, OverlayStyle::Centroids, OverlayStyle::Arrows}) {
    OverlaySpec spec;
    spec.style = style;
    EXPECT_EQ(render_overlay(p, dets, spec, pal), render_overlay(p, dets, spec, pal));
  }
  EXPECT_EQ(p.image, before);
}
