#include "egopano/compositor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "egopano/error.hpp"

namespace egopano {

std::string_view to_string(ExclusionReason r) {
  switch (r) {
    case ExclusionReason::None: return "None";
    case ExclusionReason::StretchOutlier: return "StretchOutlier";
    case ExclusionReason::VerticalFlip: return "VerticalFlip";
    case ExclusionReason::HorizontalFlip: return "HorizontalFlip";
    case ExclusionReason::BothFlips: return "BothFlips";
    case ExclusionReason::Twisted: return "Twisted";
    case ExclusionReason::NoModelFound: return "NoModelFound";
    case ExclusionReason::TooFewMatches: return "TooFewMatches";
    case ExclusionReason::ImageUnreadable: return "ImageUnreadable";
  }
  return "None";
}

ExclusionReason parse_exclusion_reason(std::string_view s) {
  for (auto r : {ExclusionReason::None, ExclusionReason::StretchOutlier, ExclusionReason::VerticalFlip,
                 ExclusionReason::HorizontalFlip, ExclusionReason::BothFlips, ExclusionReason::Twisted,
                 ExclusionReason::NoModelFound, ExclusionReason::TooFewMatches, ExclusionReason::ImageUnreadable}) {
    if (to_string(r) == s) return r;
  }
  fail(ErrorCode::InvalidArgument, "unknown exclusion reason '" + std::string(s) + "'");
}

const Placement* Panorama::placement(int frame_id) const {
  for (const auto& p : placements) {
    if (p.frame_id == frame_id) return &p;
  }
  return nullptr;
}

FrameSelection select_frames(const Session& session, const PanoramaParams& params) {
  if (params.range_start > params.range_end) fail(ErrorCode::InvalidRange, "range start exceeds range end");
  if (params.sample_stride < 1) fail(ErrorCode::InvalidRange, "sample stride must be at least 1");
  FrameSelection sel;
  int position = 0;
  for (const auto& f : session.frames) {
    if (f.id < params.range_start || f.id > params.range_end) continue;
    if (position++ % params.sample_stride == 0) sel.frame_ids.push_back(f.id);
  }
  if (sel.frame_ids.empty()) fail(ErrorCode::InvalidRange, "range selects no frames");
  if (params.base_frame_id) {
    if (std::find(sel.frame_ids.begin(), sel.frame_ids.end(), *params.base_frame_id) == sel.frame_ids.end()) {
      fail(ErrorCode::InvalidRange, "base frame " + std::to_string(*params.base_frame_id) +
                                        " is not among the selected frames");
    }
    sel.base_frame_id = *params.base_frame_id;
  } else {
    sel.base_frame_id = sel.frame_ids[(sel.frame_ids.size() - 1) / 2];
  }
  return sel;
}

CanvasLayout plan_layout(std::span<const Homography> homographies, int frame_width, int frame_height) {
  if (homographies.empty()) fail(ErrorCode::InvalidArgument, "layout needs at least one frame");
  double min_x = std::numeric_limits<double>::infinity(), min_y = min_x;
  double max_x = -min_x, max_y = -min_x;
  for (const auto& h : homographies) {
    Quad corners;
    try {
      corners = project_corners(h, frame_width, frame_height);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::PointAtInfinity) throw;
      fail(ErrorCode::CanvasTooLarge, "a frame corner maps to infinity");
    }
    for (const Vec2& c : corners) {
      min_x = std::min(min_x, c.x);
      min_y = std::min(min_y, c.y);
      max_x = std::max(max_x, c.x);
      max_y = std::max(max_y, c.y);
    }
  }
  const double w = std::ceil(max_x - min_x - 1e-9);
  const double h = std::ceil(max_y - min_y - 1e-9);
  if (!std::isfinite(w) || !std::isfinite(h) || w * h > kMaxCanvasPixels) {
    fail(ErrorCode::CanvasTooLarge, "canvas would exceed 64 MP");
  }
  CanvasLayout layout;
  layout.width = std::max(1, static_cast<int>(w));
  layout.height = std::max(1, static_cast<int>(h));
  layout.offset = {-min_x, -min_y};
  return layout;
}

Tile warp_frame(const Image& rgb, const Homography& h, const CanvasLayout& canvas, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) fail(ErrorCode::InvalidArgument, "alpha must lie in (0, 1]");
  const int src_w = rgb.width(), src_h = rgb.height();
  const Quad quad = project_corners(h, src_w, src_h);
  double min_x = std::numeric_limits<double>::infinity(), min_y = min_x, max_x = -min_x, max_y = -min_x;
  for (const Vec2& c : quad) {
    min_x = std::min(min_x, c.x + canvas.offset.x);
    min_y = std::min(min_y, c.y + canvas.offset.y);
    max_x = std::max(max_x, c.x + canvas.offset.x);
    max_y = std::max(max_y, c.y + canvas.offset.y);
  }
  const int x0 = std::clamp(static_cast<int>(std::floor(min_x)), 0, canvas.width);
  const int y0 = std::clamp(static_cast<int>(std::floor(min_y)), 0, canvas.height);
  const int x1 = std::clamp(static_cast<int>(std::ceil(max_x)), 0, canvas.width);
  const int y1 = std::clamp(static_cast<int>(std::ceil(max_y)), 0, canvas.height);

  Tile tile;
  tile.x0 = x0;
  tile.y0 = y0;
  tile.rgba = Image(x1 - x0, y1 - y0, 4, 0);
  const Mat3 inv = h.inverse().matrix();
  const auto opacity = static_cast<std::uint8_t>(std::lround(255.0 * alpha));
  const int channels = rgb.channels();

  for (int py = y0; py < y1; ++py) {
    for (int px = x0; px < x1; ++px) {
      const Vec2 b{px + 0.5 - canvas.offset.x, py + 0.5 - canvas.offset.y};
      const double w = inv(2, 0) * b.x + inv(2, 1) * b.y + inv(2, 2);
      if (!(w > 1e-12)) continue;
      const double u = (inv(0, 0) * b.x + inv(0, 1) * b.y + inv(0, 2)) / w;
      const double v = (inv(1, 0) * b.x + inv(1, 1) * b.y + inv(1, 2)) / w;
      if (!(u >= 0.0 && u < src_w && v >= 0.0 && v < src_h)) continue;
      const double sx = u - 0.5, sy = v - 0.5;
      const double fx0 = std::floor(sx), fy0 = std::floor(sy);
      const double fx = sx - fx0, fy = sy - fy0;
      const int ix0 = std::clamp(static_cast<int>(fx0), 0, src_w - 1);
      const int iy0 = std::clamp(static_cast<int>(fy0), 0, src_h - 1);
      const int ix1 = std::clamp(static_cast<int>(fx0) + 1, 0, src_w - 1);
      const int iy1 = std::clamp(static_cast<int>(fy0) + 1, 0, src_h - 1);
      std::uint8_t* out = &tile.rgba.at(px - x0, py - y0, 0);
      for (int c = 0; c < 3; ++c) {
        const int sc = channels == 1 ? 0 : c;
        const double top = rgb.at(ix0, iy0, sc) * (1.0 - fx) + rgb.at(ix1, iy0, sc) * fx;
        const double bottom = rgb.at(ix0, iy1, sc) * (1.0 - fx) + rgb.at(ix1, iy1, sc) * fx;
        out[c] = static_cast<std::uint8_t>(std::clamp(std::lround(top * (1.0 - fy) + bottom * fy), 0L, 255L));
      }
      out[3] = opacity;
    }
  }
  return tile;
}

void composite_over(Image& canvas, const Tile& tile) {
  for (int y = 0; y < tile.rgba.height(); ++y) {
    const int cy = tile.y0 + y;
    if (cy < 0 || cy >= canvas.height()) continue;
    for (int x = 0; x < tile.rgba.width(); ++x) {
      const int cx = tile.x0 + x;
      if (cx < 0 || cx >= canvas.width()) continue;
      const std::uint8_t* s = tile.rgba.row(y) + static_cast<std::size_t>(x) * 4;
      if (s[3] == 0) continue;
      std::uint8_t* d = &canvas.at(cx, cy, 0);
      if (s[3] == 255 || d[3] == 0) {
        std::copy(s, s + 4, d);
        continue;
      }
      const double sa = s[3] / 255.0, da = d[3] / 255.0;
      const double oa = sa + da * (1.0 - sa);
      for (int c = 0; c < 3; ++c) {
        const double v = (s[c] * sa + d[c] * da * (1.0 - sa)) / oa;
        d[c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
      d[3] = static_cast<std::uint8_t>(std::clamp(std::lround(oa * 255.0), 0L, 255L));
    }
  }
}

Image composite(std::span<const Tile> tiles, int canvas_width, int canvas_height) {
  Image canvas(canvas_width, canvas_height, 4, 0);
  for (const auto& t : tiles) composite_over(canvas, t);
  return canvas;
}

TransformedDetection transform_detection(const Detection& d, const Placement& placement, Vec2 canvas_offset) {
  if (!placement.included() || !placement.homography) {
    fail(ErrorCode::DetectionOnExcludedFrame,
         "frame " + std::to_string(placement.frame_id) + " is not part of the panorama");
  }
  if (d.matched_frame_id != placement.frame_id) {
    fail(ErrorCode::InvalidArgument, "detection belongs to a different frame");
  }
  TransformedDetection out;
  out.detection = d;
  out.quad = project_quad(*placement.homography, d.bbox.corners());
  for (Vec2& p : out.quad) p = p + canvas_offset;
  out.centroid = quad_mean(out.quad);
  return out;
}

std::vector<TransformedDetection> transform_predictions(const Session& session, const Panorama& panorama) {
  std::map<int, const Placement*> included;
  for (const auto& p : panorama.placements) {
    if (p.included()) included[p.frame_id] = &p;
  }
  std::vector<TransformedDetection> out;
  for (const auto& d : session.predictions) {
    auto it = included.find(d.matched_frame_id);
    if (it == included.end()) continue;
    try {
      out.push_back(transform_detection(d, *it->second, panorama.offset));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::PointAtInfinity) throw;
    }
  }
  return out;
}

namespace {

ExclusionReason exclusion_for(RemovalReason r) {
  switch (r) {
    case RemovalReason::StretchOutlier: return ExclusionReason::StretchOutlier;
    case RemovalReason::VerticalFlip: return ExclusionReason::VerticalFlip;
    case RemovalReason::HorizontalFlip: return ExclusionReason::HorizontalFlip;
    case RemovalReason::BothFlips: return ExclusionReason::BothFlips;
    case RemovalReason::Twisted: return ExclusionReason::Twisted;
  }
  return ExclusionReason::Twisted;
}

std::uint64_t frame_seed(std::uint64_t seed, int frame_id) {
  // splitmix64 step so neighbouring frames get unrelated RANSAC streams.
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(frame_id) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void estimate_placement(Placement& pl, const Image& image, const FeatureSet& base_features,
                        const PanoramaParams& params) {
  FeatureSet features;
  try {
    features = detect_and_describe(image, params.detector, {}, params.max_features);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ImageTooSmall) throw;
  }
  features.frame_id = pl.frame_id;
  const auto exclude = [&](ExclusionReason r) {
    pl.status = PlacementStatus::Excluded;
    pl.reason = r;
  };
  if (base_features.size() < 2 || features.size() < 4) return exclude(ExclusionReason::TooFewMatches);

  const auto candidates = match_descriptors(features, base_features);
  const auto matches = lowe_ratio_filter(candidates, params.lowe_ratio);
  pl.match_count = static_cast<int>(matches.size());
  if (static_cast<int>(matches.size()) < std::max(4, params.min_inliers)) {
    return exclude(ExclusionReason::TooFewMatches);
  }
  std::vector<PointPair> pairs;
  pairs.reserve(matches.size());
  for (const auto& m : matches) {
    const Keypoint& q = features.keypoints[static_cast<std::size_t>(m.query_idx)];
    const Keypoint& t = base_features.keypoints[static_cast<std::size_t>(m.train_idx)];
    // Keypoints are pixel centres; homographies act on continuous coordinates.
    pairs.push_back({Vec2{q.x + 0.5, q.y + 0.5}, Vec2{t.x + 0.5, t.y + 0.5}});
  }

  RansacResult ransac;
  try {
    ransac = ransac_homography(pairs, {params.ransac_thresh, params.ransac_confidence, params.ransac_max_iters},
                               frame_seed(params.seed, pl.frame_id));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoModelFound && e.code() != ErrorCode::DegenerateConfiguration) throw;
    return exclude(ExclusionReason::NoModelFound);
  }
  pl.inlier_count = ransac.inlier_count();
  if (pl.inlier_count < params.min_inliers) return exclude(ExclusionReason::TooFewMatches);

  std::vector<PointPair> inliers;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (ransac.inlier_mask[i]) inliers.push_back(pairs[i]);
  }
  pl.homography = ransac.homography;
  try {
    pl.homography = refine_lm(ransac.homography, inliers).homography;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::SingularNormalEquations) throw;
  }
}

}  // namespace

Panorama build_panorama(const Session& session, const PanoramaParams& params) {
  if (!(params.alpha > 0.0 && params.alpha <= 1.0)) fail(ErrorCode::InvalidArgument, "alpha must lie in (0, 1]");
  if (!(params.lowe_ratio > 0.0 && params.lowe_ratio < 1.0)) {
    fail(ErrorCode::InvalidArgument, "Lowe ratio must lie in (0, 1)");
  }
  if (!(params.ransac_thresh > 0.0)) fail(ErrorCode::InvalidArgument, "RANSAC threshold must be positive");
  const FrameSelection sel = select_frames(session, params);
  const FrameRef& base_ref = session.frame(sel.base_frame_id);

  Panorama pano;
  pano.frame_width = base_ref.width;
  pano.frame_height = base_ref.height;
  pano.base_frame_id = sel.base_frame_id;

  std::map<int, Image> images;
  try {
    images[sel.base_frame_id] = load_image(session.image_path(base_ref));
  } catch (const Error& e) {
    fail(ErrorCode::BaseFrameUnstitchable, e.what());
  }
  FeatureSet base_features;
  try {
    base_features = detect_and_describe(images[sel.base_frame_id], params.detector, {}, params.max_features);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ImageTooSmall) throw;
  }

  for (int id : sel.frame_ids) {
    Placement pl;
    pl.frame_id = id;
    if (id == sel.base_frame_id) {
      pl.homography = Homography::identity();
    } else {
      try {
        images[id] = load_image(session.image_path(session.frame(id)));
        estimate_placement(pl, images[id], base_features, params);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::ImageIo && e.code() != ErrorCode::MissingFile) throw;
        pl.status = PlacementStatus::Excluded;
        pl.reason = ExclusionReason::ImageUnreadable;
      }
    }
    pano.placements.push_back(std::move(pl));
  }

  std::vector<FrameHomography> candidates;
  for (const auto& pl : pano.placements) {
    if (pl.included()) candidates.push_back({pl.frame_id, *pl.homography});
  }
  pano.filter_report = filter_frames(candidates, session.intrinsics, sel.base_frame_id, pano.frame_width,
                                     pano.frame_height, params.filters, params.seed);
  for (const auto& r : pano.filter_report.removed) {
    for (auto& pl : pano.placements) {
      if (pl.frame_id == r.frame_id) {
        pl.status = PlacementStatus::Excluded;
        pl.reason = exclusion_for(r.reason);
      }
    }
  }

  std::vector<Homography> kept;
  for (const auto& pl : pano.placements) {
    if (pl.included()) kept.push_back(*pl.homography);
  }
  if (kept.empty()) fail(ErrorCode::AllFramesExcluded, "no frame survived estimation and filtering");
  const CanvasLayout layout = plan_layout(kept, pano.frame_width, pano.frame_height);
  pano.canvas_width = layout.width;
  pano.canvas_height = layout.height;
  pano.offset = layout.offset;

  pano.image = Image(layout.width, layout.height, 4, 0);
  for (auto& pl : pano.placements) {
    if (pl.homography) {
      try {
        Quad q = project_corners(*pl.homography, pano.frame_width, pano.frame_height);
        for (Vec2& p : q) p = p + pano.offset;
        pl.quad = q;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::PointAtInfinity) throw;
      }
    }
    if (!pl.included()) continue;
    composite_over(pano.image, warp_frame(images.at(pl.frame_id), *pl.homography, layout, params.alpha));
  }
  return pano;
}

}  // namespace egopano
