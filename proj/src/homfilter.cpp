#include "egopano/homfilter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <Eigen/LU>

#include "egopano/error.hpp"
#include "egopano/random.hpp"

namespace egopano {

std::string_view to_string(FlipClass c) {
  switch (c) {
    case FlipClass::None: return "None";
    case FlipClass::VerticalFlip: return "VerticalFlip";
    case FlipClass::HorizontalFlip: return "HorizontalFlip";
    case FlipClass::BothFlips: return "BothFlips";
    case FlipClass::Twisted: return "Twisted";
  }
  return "None";
}

std::string_view to_string(RemovalReason r) {
  switch (r) {
    case RemovalReason::StretchOutlier: return "StretchOutlier";
    case RemovalReason::VerticalFlip: return "VerticalFlip";
    case RemovalReason::HorizontalFlip: return "HorizontalFlip";
    case RemovalReason::BothFlips: return "BothFlips";
    case RemovalReason::Twisted: return "Twisted";
  }
  return "StretchOutlier";
}

std::string_view to_string(StretchReference r) { return r == StretchReference::Origin ? "origin" : "unit"; }

std::string_view to_string(CalibrationConvention c) {
  return c == CalibrationConvention::KHKinv ? "K*H*K^-1" : "K^-1*H*K";
}

ScaleSignature scale_signature(int frame_id, const Homography& h, const Intrinsics& k,
                               CalibrationConvention convention) {
  Mat3 calibrated;
  if (convention == CalibrationConvention::KHKinv) {
    calibrated = calibrate_homography(h.matrix(), k);
  } else {
    if (!k.valid()) fail(ErrorCode::InvalidArgument, "intrinsics need positive focal lengths");
    calibrated = k.matrix().inverse() * h.matrix() * k.matrix();
  }
  const SVD3 d = svd3(calibrated);
  return {frame_id, d.sigma(0), d.sigma(1)};
}

namespace {

double sq_dist(Vec2 a, Vec2 b) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return dx * dx + dy * dy;
}

int nearest(const std::vector<Vec2>& centers, Vec2 p) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centers.size(); ++c) {
    const double d = sq_dist(centers[c], p);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace

Clustering kmeans(std::span<const Vec2> points, int k, std::uint64_t seed, int max_iterations) {
  const std::size_t n = points.size();
  if (n == 0) fail(ErrorCode::InvalidArgument, "k-means needs at least one point");
  if (k < 1) fail(ErrorCode::InvalidArgument, "k must be at least 1");

  Rng rng(seed);
  std::vector<Vec2> centers{points[static_cast<std::size_t>(uniform_index(rng, n))]};
  std::vector<double> min_d(n);
  for (std::size_t i = 0; i < n; ++i) min_d[i] = sq_dist(points[i], centers[0]);
  while (static_cast<int>(centers.size()) < k) {
    std::size_t far = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (min_d[i] > min_d[far]) far = i;
    }
    if (!(min_d[far] > 0.0)) break;
    centers.push_back(points[far]);
    for (std::size_t i = 0; i < n; ++i) min_d[i] = std::min(min_d[i], sq_dist(points[i], points[far]));
  }

  std::vector<int> assignment(n);
  for (std::size_t i = 0; i < n; ++i) assignment[i] = nearest(centers, points[i]);
  for (int iter = 0; iter < max_iterations; ++iter) {
    std::vector<Vec2> sums(centers.size());
    std::vector<int> counts(centers.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums[static_cast<std::size_t>(assignment[i])] = sums[static_cast<std::size_t>(assignment[i])] + points[i];
      ++counts[static_cast<std::size_t>(assignment[i])];
    }
    for (std::size_t c = 0; c < centers.size(); ++c) {
      if (counts[c] > 0) centers[c] = (1.0 / counts[c]) * sums[c];
    }
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const int a = nearest(centers, points[i]);
      if (a != assignment[i]) {
        assignment[i] = a;
        changed = true;
      }
    }
    if (!changed) break;
  }

  // Drop clusters that ended up empty and renumber densely.
  std::vector<int> remap(centers.size(), -1);
  Clustering out;
  for (std::size_t i = 0; i < n; ++i) {
    auto& slot = remap[static_cast<std::size_t>(assignment[i])];
    if (slot < 0) slot = 0;
  }
  for (std::size_t c = 0; c < centers.size(); ++c) {
    if (remap[c] >= 0) {
      remap[c] = static_cast<int>(out.centroids.size());
      out.centroids.push_back(centers[c]);
    }
  }
  // Centroids are exact means of their members.
  std::vector<Vec2> sums(out.centroids.size());
  std::vector<int> counts(out.centroids.size(), 0);
  out.assignment.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = remap[static_cast<std::size_t>(assignment[i])];
    out.assignment[i] = c;
    sums[static_cast<std::size_t>(c)] = sums[static_cast<std::size_t>(c)] + points[i];
    ++counts[static_cast<std::size_t>(c)];
  }
  for (std::size_t c = 0; c < out.centroids.size(); ++c) out.centroids[c] = (1.0 / counts[c]) * sums[c];
  out.k = static_cast<int>(out.centroids.size());
  return out;
}

double within_cluster_ss(std::span<const Vec2> points, const Clustering& c) {
  double wss = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    wss += sq_dist(points[i], c.centroids[static_cast<std::size_t>(c.assignment[i])]);
  }
  return wss;
}

Clustering kmeans_elbow(std::span<const Vec2> points, const KMeansOptions& options, std::uint64_t seed) {
  if (points.empty()) fail(ErrorCode::InvalidArgument, "k-means needs at least one point");
  if (options.k_max < 1) fail(ErrorCode::InvalidArgument, "k_max must be at least 1");
  const int k_limit = std::min<int>(options.k_max, static_cast<int>(points.size()));
  std::vector<Clustering> runs;
  std::vector<double> wss;
  for (int k = 1; k <= k_limit; ++k) {
    runs.push_back(kmeans(points, k, seed, options.max_iterations));
    wss.push_back(within_cluster_ss(points, runs.back()));
  }
  constexpr double kEps = 1e-12;
  const double floor = static_cast<double>(points.size()) * std::max(options.wss_floor_per_point, 0.0);
  const double total = std::max({wss[0], floor, kEps});
  int chosen = k_limit;
  for (int k = 1; k < k_limit; ++k) {
    const double drop = (wss[static_cast<std::size_t>(k - 1)] - wss[static_cast<std::size_t>(k)]) / total;
    if (drop < options.elbow_drop_threshold) {
      chosen = k;
      break;
    }
  }
  Clustering out = runs[static_cast<std::size_t>(chosen - 1)];
  out.wss_by_k = wss;
  return out;
}

StretchResult filter_stretched(std::span<const ScaleSignature> signatures, int base_frame_id,
                               const StretchOptions& options, std::uint64_t seed) {
  auto base = std::find_if(signatures.begin(), signatures.end(),
                           [&](const ScaleSignature& s) { return s.frame_id == base_frame_id; });
  if (base == signatures.end()) fail(ErrorCode::BaseFrameMissing, "base frame has no scale signature");
  const auto base_idx = static_cast<std::size_t>(base - signatures.begin());

  std::vector<Vec2> points;
  points.reserve(signatures.size());
  for (const auto& s : signatures) points.push_back({s.sigma1, s.sigma2});

  StretchResult result;
  result.signatures.assign(signatures.begin(), signatures.end());
  result.clustering = kmeans_elbow(points, options.kmeans, seed);

  const Vec2 reference = options.reference == StretchReference::Origin ? Vec2{0.0, 0.0} : Vec2{1.0, 1.0};
  int closest = 0;
  double closest_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < result.clustering.centroids.size(); ++c) {
    const double d = distance(result.clustering.centroids[c], reference);
    if (d < closest_d) {
      closest_d = d;
      closest = static_cast<int>(c);
    }
  }
  const int base_cluster = result.clustering.assignment[base_idx];
  result.retained_cluster = closest;
  if (base_cluster != closest) {
    result.retained_cluster = base_cluster;
    result.base_guard_triggered = true;
  }
  for (std::size_t i = 0; i < signatures.size(); ++i) {
    if (result.clustering.assignment[i] == result.retained_cluster) {
      result.kept.push_back(signatures[i].frame_id);
    } else {
      result.removed.push_back({signatures[i].frame_id, RemovalReason::StretchOutlier});
    }
  }
  return result;
}

FlipClass detect_flip(const Homography& h, double width, double height) {
  const Quad corners{Vec2{0.0, 0.0}, Vec2{width, 0.0}, Vec2{width, height}, Vec2{0.0, height}};
  bool positive = false, negative = false;
  for (const Vec2& c : corners) {
    const double w = projective_depth(h.matrix(), c);
    positive = positive || w > 0.0;
    negative = negative || w < 0.0;
  }
  const Quad q = project_quad(h, corners);
  // The outline passes through the line at infinity: it cannot be a proper quad.
  if (positive && negative) return FlipClass::Twisted;

  const bool c1 = q[2].y < q[1].y;
  const bool c2 = q[3].y < q[0].y;
  const bool c3 = q[1].x < q[0].x;
  const bool c4 = q[2].x < q[3].x;
  if (c1 != c2 || c3 != c4) return FlipClass::Twisted;
  if (c1 && c3) return FlipClass::BothFlips;
  if (c1) return FlipClass::VerticalFlip;
  if (c3) return FlipClass::HorizontalFlip;
  return FlipClass::None;
}

namespace {

RemovalReason reason_for(FlipClass c) {
  switch (c) {
    case FlipClass::VerticalFlip: return RemovalReason::VerticalFlip;
    case FlipClass::HorizontalFlip: return RemovalReason::HorizontalFlip;
    case FlipClass::BothFlips: return RemovalReason::BothFlips;
    default: return RemovalReason::Twisted;
  }
}

}  // namespace

FilterReport filter_frames(std::span<const FrameHomography> frames, const Intrinsics& k, int base_frame_id,
                           double width, double height, const FilterOptions& options, std::uint64_t seed) {
  const bool has_base = std::any_of(frames.begin(), frames.end(),
                                    [&](const FrameHomography& f) { return f.frame_id == base_frame_id; });
  if (!has_base) fail(ErrorCode::BaseFrameMissing, "base frame not among the filtered frames");

  FilterReport report;
  std::vector<const FrameHomography*> survivors;
  for (const auto& f : frames) {
    FlipClass cls = FlipClass::None;
    if (options.flip_on) {
      try {
        cls = detect_flip(f.homography, width, height);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::PointAtInfinity) throw;
        cls = FlipClass::Twisted;
      }
      report.flip_classes.push_back(cls);
    }
    if (cls != FlipClass::None && f.frame_id != base_frame_id) {
      report.removed.push_back({f.frame_id, reason_for(cls)});
    } else {
      survivors.push_back(&f);
    }
  }

  if (options.stretch_on) {
    std::vector<ScaleSignature> signatures;
    signatures.reserve(survivors.size());
    for (const auto* f : survivors) {
      signatures.push_back(scale_signature(f->frame_id, f->homography, k, options.stretch.convention));
    }
    StretchResult stretch = filter_stretched(signatures, base_frame_id, options.stretch, seed);
    report.kept = std::move(stretch.kept);
    report.removed.insert(report.removed.end(), stretch.removed.begin(), stretch.removed.end());
    report.clustering = std::move(stretch.clustering);
    report.signatures = std::move(stretch.signatures);
    report.retained_cluster = stretch.retained_cluster;
    report.base_guard_triggered = stretch.base_guard_triggered;
  } else {
    for (const auto* f : survivors) report.kept.push_back(f->frame_id);
  }

  // Report removals in input order.
  std::map<int, std::size_t> position;
  for (std::size_t i = 0; i < frames.size(); ++i) position.emplace(frames[i].frame_id, i);
  std::stable_sort(report.removed.begin(), report.removed.end(),
                   [&](const Removal& a, const Removal& b) { return position[a.frame_id] < position[b.frame_id]; });
  return report;
}

}  // namespace egopano
