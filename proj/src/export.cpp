#include "egopano/export.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>

#include "egopano/error.hpp"

namespace egopano {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) h = (h ^ c) * 1099511628211ULL;
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace {

Json bbox_json(const BBox& b) { return Json::array({b.x1, b.y1, b.x2, b.y2}); }

Json detection_json(const Detection& d) {
  return Json{{"t", d.timestamp}, {"label", d.label}, {"bbox", bbox_json(d.bbox)},
              {"confidence", d.confidence}, {"frame_id", d.matched_frame_id}};
}

Json vec_json(Vec2 v) { return Json::array({v.x, v.y}); }

Json quad_json(const Quad& q) {
  Json a = Json::array();
  for (const auto& p : q) a.push_back(vec_json(p));
  return a;
}

Vec2 vec_from(const Json& j) {
  if (!j.is_array() || j.size() != 2) fail(ErrorCode::MalformedRecord, "expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

Quad quad_from(const Json& j) {
  if (!j.is_array() || j.size() != 4) fail(ErrorCode::MalformedRecord, "expected four quad corners");
  Quad q;
  for (std::size_t i = 0; i < 4; ++i) q[i] = vec_from(j[i]);
  return q;
}

StretchReference parse_reference(const std::string& s) {
  if (s == to_string(StretchReference::Origin)) return StretchReference::Origin;
  if (s == to_string(StretchReference::Unit)) return StretchReference::Unit;
  fail(ErrorCode::InvalidArgument, "unknown stretch reference '" + s + "'");
}

CalibrationConvention parse_convention(const std::string& s) {
  if (s == to_string(CalibrationConvention::KHKinv)) return CalibrationConvention::KHKinv;
  if (s == to_string(CalibrationConvention::KinvHK)) return CalibrationConvention::KinvHK;
  fail(ErrorCode::InvalidArgument, "unknown calibration convention '" + s + "'");
}

RemovalReason parse_removal(const std::string& s) {
  for (auto r : {RemovalReason::StretchOutlier, RemovalReason::VerticalFlip, RemovalReason::HorizontalFlip,
                 RemovalReason::BothFlips, RemovalReason::Twisted}) {
    if (s == to_string(r)) return r;
  }
  fail(ErrorCode::MalformedRecord, "unknown removal reason '" + s + "'");
}

FlipClass parse_flip(const std::string& s) {
  for (auto c : {FlipClass::None, FlipClass::VerticalFlip, FlipClass::HorizontalFlip, FlipClass::BothFlips,
                 FlipClass::Twisted}) {
    if (s == to_string(c)) return c;
  }
  fail(ErrorCode::MalformedRecord, "unknown flip class '" + s + "'");
}

template <class T>
T field(const Json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::MalformedRecord, std::string("missing or ill-typed field '") + key + "'");
  }
}

}  // namespace

std::string session_fingerprint(const Session& s) {
  Json meta;
  Json frames = Json::array();
  for (const auto& f : s.frames) {
    frames.push_back({{"id", f.id}, {"t", f.timestamp}, {"w", f.width}, {"h", f.height}, {"path", f.image_path}});
  }
  meta["frames"] = frames;
  Json preds = Json::array(), truths = Json::array();
  for (const auto& d : s.predictions) preds.push_back(detection_json(d));
  for (const auto& d : s.ground_truth) truths.push_back(detection_json(d));
  meta["predictions"] = preds;
  meta["ground_truth"] = truths;
  meta["intrinsics"] = {s.intrinsics.fx, s.intrinsics.fy, s.intrinsics.cx, s.intrinsics.cy, s.intrinsics.skew};
  meta["vocabulary"] = s.vocabulary;
  std::uint64_t h = fnv1a64(meta.dump());
  for (const auto& f : s.frames) {
    std::ifstream in(s.image_path(f), std::ios::binary);
    if (!in) fail(ErrorCode::MissingFile, "cannot read " + s.image_path(f).string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    h = fnv1a64(bytes, h);
  }
  return hex64(h);
}

Json params_to_json(const PanoramaParams& p) {
  Json j;
  j["range"] = {p.range_start, p.range_end};
  j["base_frame_id"] = p.base_frame_id ? Json(*p.base_frame_id) : Json(nullptr);
  j["sample_stride"] = p.sample_stride;
  j["detector"] = std::string(to_string(p.detector));
  j["max_features"] = p.max_features;
  j["lowe_ratio"] = p.lowe_ratio;
  j["ransac_thresh"] = p.ransac_thresh;
  j["ransac_confidence"] = p.ransac_confidence;
  j["ransac_max_iters"] = p.ransac_max_iters;
  j["min_inliers"] = p.min_inliers;
  j["alpha"] = p.alpha;
  j["filter_stretch"] = p.filters.stretch_on;
  j["filter_flips"] = p.filters.flip_on;
  j["kmax"] = p.filters.stretch.kmeans.k_max;
  j["elbow_drop"] = p.filters.stretch.kmeans.elbow_drop_threshold;
  j["wss_floor"] = p.filters.stretch.kmeans.wss_floor_per_point;
  j["stretch_reference"] = std::string(to_string(p.filters.stretch.reference));
  j["calibration"] = std::string(to_string(p.filters.stretch.convention));
  j["seed"] = p.seed;
  return j;
}

PanoramaParams default_params(const Session& session) {
  if (session.frames.empty()) fail(ErrorCode::EmptyFrameList, "session has no frames");
  PanoramaParams p;
  p.range_start = session.frames.front().id;
  p.range_end = session.frames.back().id;
  return p;
}

PanoramaParams params_from_json(const Json& j, const Session& session) {
  if (!j.is_object()) fail(ErrorCode::InvalidArgument, "panorama params must be a JSON object");
  static const std::set<std::string> known = {
      "range",        "base_frame_id", "sample_stride", "detector",          "max_features",
      "lowe_ratio",   "ransac_thresh", "ransac_confidence", "ransac_max_iters", "min_inliers",
      "alpha",        "filter_stretch", "filter_flips",  "kmax",              "elbow_drop",    "wss_floor",
      "stretch_reference", "calibration", "seed"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) fail(ErrorCode::InvalidArgument, "unknown panorama parameter '" + key + "'");
  }
  PanoramaParams p = default_params(session);
  try {
    if (j.contains("range")) {
      const auto& r = j.at("range");
      if (!r.is_array() || r.size() != 2) fail(ErrorCode::InvalidArgument, "range must be [start, end]");
      p.range_start = r[0].get<int>();
      p.range_end = r[1].get<int>();
    }
    if (j.contains("base_frame_id") && !j.at("base_frame_id").is_null()) p.base_frame_id = j.at("base_frame_id").get<int>();
    if (j.contains("sample_stride")) p.sample_stride = j.at("sample_stride").get<int>();
    if (j.contains("detector")) p.detector = parse_detector_kind(j.at("detector").get<std::string>());
    if (j.contains("max_features")) p.max_features = j.at("max_features").get<int>();
    if (j.contains("lowe_ratio")) p.lowe_ratio = j.at("lowe_ratio").get<double>();
    if (j.contains("ransac_thresh")) p.ransac_thresh = j.at("ransac_thresh").get<double>();
    if (j.contains("ransac_confidence")) p.ransac_confidence = j.at("ransac_confidence").get<double>();
    if (j.contains("ransac_max_iters")) p.ransac_max_iters = j.at("ransac_max_iters").get<int>();
    if (j.contains("min_inliers")) p.min_inliers = j.at("min_inliers").get<int>();
    if (j.contains("alpha")) p.alpha = j.at("alpha").get<double>();
    if (j.contains("filter_stretch")) p.filters.stretch_on = j.at("filter_stretch").get<bool>();
    if (j.contains("filter_flips")) p.filters.flip_on = j.at("filter_flips").get<bool>();
    if (j.contains("kmax")) p.filters.stretch.kmeans.k_max = j.at("kmax").get<int>();
    if (j.contains("elbow_drop")) p.filters.stretch.kmeans.elbow_drop_threshold = j.at("elbow_drop").get<double>();
    if (j.contains("wss_floor")) p.filters.stretch.kmeans.wss_floor_per_point = j.at("wss_floor").get<double>();
    if (j.contains("stretch_reference")) {
      p.filters.stretch.reference = parse_reference(j.at("stretch_reference").get<std::string>());
    }
    if (j.contains("calibration")) p.filters.stretch.convention = parse_convention(j.at("calibration").get<std::string>());
    if (j.contains("seed")) p.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("ill-typed panorama parameter: ") + e.what());
  }
  return p;
}

std::string panorama_id(const std::string& fingerprint, const PanoramaParams& params) {
  return hex64(fnv1a64(params_to_json(params).dump(), fnv1a64(fingerprint)));
}

Json session_meta_json(const Session& s, const std::string& session_id) {
  Json j;
  j["session_id"] = session_id;
  j["frame_count"] = s.frames.size();
  Json frames = Json::array();
  for (const auto& f : s.frames) {
    frames.push_back({{"id", f.id}, {"timestamp", f.timestamp}, {"width", f.width}, {"height", f.height}});
  }
  j["frames"] = frames;
  j["vocabulary"] = s.vocabulary;
  j["intrinsics"] = {{"fx", s.intrinsics.fx}, {"fy", s.intrinsics.fy}, {"cx", s.intrinsics.cx},
                     {"cy", s.intrinsics.cy}, {"skew", s.intrinsics.skew}};
  j["prediction_count"] = s.predictions.size();
  j["ground_truth_count"] = s.ground_truth.size();
  return j;
}

Json panorama_to_json(const Panorama& pano, const PanoramaParams& params, const std::string& pid,
                      const std::string& session_id) {
  Json j;
  j["format"] = "egopano.panorama/1";
  j["panorama_id"] = pid;
  j["session_id"] = session_id;
  j["params"] = params_to_json(params);
  j["canvas"] = {{"width", pano.canvas_width}, {"height", pano.canvas_height}};
  j["offset"] = vec_json(pano.offset);
  j["frame_size"] = {{"width", pano.frame_width}, {"height", pano.frame_height}};
  j["base_frame_id"] = pano.base_frame_id;
  Json placements = Json::array();
  for (const auto& p : pano.placements) {
    Json e;
    e["frame_id"] = p.frame_id;
    e["status"] = p.included() ? "Included" : "Excluded";
    e["reason"] = p.included() ? Json(nullptr) : Json(std::string(to_string(p.reason)));
    if (p.homography) {
      Json h = Json::array();
      for (double v : p.homography->row_major()) h.push_back(v);
      e["homography"] = h;
    } else {
      e["homography"] = nullptr;
    }
    e["quad"] = p.quad ? quad_json(*p.quad) : Json(nullptr);
    e["match_count"] = p.match_count;
    e["inlier_count"] = p.inlier_count;
    placements.push_back(e);
  }
  j["placements"] = placements;

  const FilterReport& r = pano.filter_report;
  Json report;
  report["kept"] = r.kept;
  Json removed = Json::array();
  for (const auto& rm : r.removed) removed.push_back({{"frame_id", rm.frame_id}, {"reason", to_string(rm.reason)}});
  report["removed"] = removed;
  if (r.clustering) {
    Json c;
    c["k"] = r.clustering->k;
    Json centroids = Json::array();
    for (const auto& v : r.clustering->centroids) centroids.push_back(vec_json(v));
    c["centroids"] = centroids;
    c["assignment"] = r.clustering->assignment;
    c["wss_by_k"] = r.clustering->wss_by_k;
    report["clustering"] = c;
  } else {
    report["clustering"] = nullptr;
  }
  Json sigs = Json::array();
  for (const auto& s : r.signatures) {
    sigs.push_back({{"frame_id", s.frame_id}, {"sigma1", s.sigma1}, {"sigma2", s.sigma2}});
  }
  report["signatures"] = sigs;
  Json flips = Json::array();
  for (auto c : r.flip_classes) flips.push_back(to_string(c));
  report["flip_classes"] = flips;
  report["retained_cluster"] = r.retained_cluster;
  report["base_guard_triggered"] = r.base_guard_triggered;
  j["filter_report"] = report;
  return j;
}

PanoramaDocument panorama_from_json(const Json& j) {
  PanoramaDocument doc;
  try {
    if (field<std::string>(j, "format") != "egopano.panorama/1") {
      fail(ErrorCode::MalformedRecord, "not a panorama document");
    }
    doc.panorama_id = field<std::string>(j, "panorama_id");
    doc.session_id = field<std::string>(j, "session_id");
    Panorama& p = doc.panorama;
    p.canvas_width = field<int>(j.at("canvas"), "width");
    p.canvas_height = field<int>(j.at("canvas"), "height");
    p.offset = vec_from(j.at("offset"));
    p.frame_width = field<int>(j.at("frame_size"), "width");
    p.frame_height = field<int>(j.at("frame_size"), "height");
    p.base_frame_id = field<int>(j, "base_frame_id");
    for (const auto& e : j.at("placements")) {
      Placement pl;
      pl.frame_id = field<int>(e, "frame_id");
      const auto status = field<std::string>(e, "status");
      if (status != "Included" && status != "Excluded") fail(ErrorCode::MalformedRecord, "bad placement status");
      pl.status = status == "Included" ? PlacementStatus::Included : PlacementStatus::Excluded;
      if (!e.at("reason").is_null()) pl.reason = parse_exclusion_reason(e.at("reason").get<std::string>());
      if (!e.at("homography").is_null()) {
        const auto v = e.at("homography").get<std::vector<double>>();
        if (v.size() != 9) fail(ErrorCode::MalformedRecord, "homography needs 9 values");
        std::array<double, 9> a;
        std::copy(v.begin(), v.end(), a.begin());
        pl.homography = Homography::from_row_major(a);
      }
      if (!e.at("quad").is_null()) pl.quad = quad_from(e.at("quad"));
      pl.match_count = field<int>(e, "match_count");
      pl.inlier_count = field<int>(e, "inlier_count");
      p.placements.push_back(pl);
    }
    const Json& r = j.at("filter_report");
    p.filter_report.kept = r.at("kept").get<std::vector<int>>();
    for (const auto& rm : r.at("removed")) {
      p.filter_report.removed.push_back({field<int>(rm, "frame_id"), parse_removal(field<std::string>(rm, "reason"))});
    }
    if (!r.at("clustering").is_null()) {
      Clustering c;
      c.k = field<int>(r.at("clustering"), "k");
      for (const auto& v : r.at("clustering").at("centroids")) c.centroids.push_back(vec_from(v));
      c.assignment = r.at("clustering").at("assignment").get<std::vector<int>>();
      c.wss_by_k = r.at("clustering").at("wss_by_k").get<std::vector<double>>();
      p.filter_report.clustering = c;
    }
    for (const auto& s : r.at("signatures")) {
      p.filter_report.signatures.push_back(
          {field<int>(s, "frame_id"), field<double>(s, "sigma1"), field<double>(s, "sigma2")});
    }
    for (const auto& c : r.at("flip_classes")) p.filter_report.flip_classes.push_back(parse_flip(c.get<std::string>()));
    p.filter_report.retained_cluster = field<int>(r, "retained_cluster");
    p.filter_report.base_guard_triggered = field<bool>(r, "base_guard_triggered");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::MalformedRecord, std::string("panorama document: ") + e.what());
  }
  return doc;
}

Json matrix_to_json(const TimelineMatrix& m) {
  Json j;
  j["metric"] = std::string(to_string(m.metric));
  j["labels"] = m.labels;
  j["frame_ids"] = m.frame_ids;
  Json rows = Json::array();
  for (std::size_t r = 0; r < m.labels.size(); ++r) {
    Json row = Json::array();
    for (std::size_t c = 0; c < m.frame_ids.size(); ++c) {
      const auto& v = m.at(r, c);
      row.push_back(v ? Json(*v) : Json(nullptr));
    }
    rows.push_back(row);
  }
  j["values"] = rows;
  return j;
}

Json classification_to_json(std::span<const ClassificationCounts> counts) {
  Json a = Json::array();
  for (const auto& c : counts) {
    a.push_back({{"frame_id", c.frame_id}, {"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}});
  }
  return a;
}

Json events_to_json(std::span<const PoiEvent> events) {
  Json a = Json::array();
  for (const auto& e : events) {
    a.push_back({{"kind", to_string(e.kind)}, {"frame_id", e.frame_id}, {"label", e.label}, {"detail", e.detail}});
  }
  return a;
}

Json chains_to_json(std::span<const ArrowChain> chains) {
  Json a = Json::array();
  for (const auto& c : chains) {
    Json nodes = Json::array();
    for (const auto& n : c.nodes) nodes.push_back({{"frame_id", n.frame_id}, {"centroid", vec_json(n.centroid)}});
    a.push_back({{"label", c.label}, {"chain_id", c.chain_id}, {"nodes", nodes}});
  }
  return a;
}

Json distance_to_json(std::span<const DistanceSeries> series) {
  Json a = Json::array();
  for (const auto& s : series) {
    Json steps = Json::array();
    for (const auto& st : s.steps) {
      steps.push_back({{"chain_id", st.chain_id},
                       {"from_frame_id", st.from_frame_id},
                       {"to_frame_id", st.to_frame_id},
                       {"distance", st.distance}});
    }
    a.push_back({{"label", s.label}, {"steps", steps}});
  }
  return a;
}

Json analytics_to_json(const Session& session, const std::string& session_id, const AnalyticsOptions& options,
                       const PanoramaDocument* panorama) {
  Json j;
  j["format"] = "egopano.analytics/1";
  j["session_id"] = session_id;
  j["parameters"] = {{"iou_threshold", options.iou_threshold}, {"missing_frames", options.missing_frames}};
  j["conventions"] = {
      {"true_negative", "vocabulary labels absent from both streams in the frame"},
      {"matching", "greedy max-IoU, same label, IoU >= threshold"},
      {"summary_aggregation", "max over same-label instances in a frame"},
      {"distance_source", "predictions only"},
      {"chain_tie_break", "lowest (distance, instance index, chain id)"},
  };
  j["vocabulary"] = session.vocabulary;
  j["summary"] = {{"confidence", matrix_to_json(summary_matrix(session, TimelineMetric::Confidence))},
                  {"iou", matrix_to_json(summary_matrix(session, TimelineMetric::IoU))}};
  j["classification"] = classification_to_json(classify_session(session, options.iou_threshold));
  j["events"] = events_to_json(poi_events(session, options.missing_frames));
  if (panorama) {
    const auto transformed = transform_predictions(session, panorama->panorama);
    const auto chains = arrow_chains_by_label(transformed);
    j["panorama"] = {{"panorama_id", panorama->panorama_id},
                     {"chains", chains_to_json(chains)},
                     {"distance", distance_to_json(distance_series(chains))}};
  } else {
    j["panorama"] = nullptr;
  }
  return j;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace egopano
