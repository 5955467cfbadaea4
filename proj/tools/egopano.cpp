// egopano: batch stitching, overlay rendering, analytics export and the HTTP service.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "egopano/error.hpp"
#include "egopano/export.hpp"
#include "egopano/overlay.hpp"
#include "egopano/service.hpp"

namespace fs = std::filesystem;
using namespace egopano;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct StitchFlags {
  std::string session;
  std::string range;
  int stride = 1;
  std::optional<int> base;
  std::string detector = "ORB";
  int max_features = kDefaultMaxFeatures;
  double lowe_ratio = 0.75;
  double ransac_thresh = 3.0;
  int min_inliers = 10;
  double alpha = 1.0;
  bool no_filter_stretch = false;
  bool no_filter_flips = false;
  int kmax = 8;
  std::uint64_t seed = 0;
  std::string style = "boxes";
  double min_confidence = 0.0;
  std::string labels;
  std::optional<int> highlight;
  std::string out = ".";
};

struct AnalyticsFlags {
  std::string session;
  std::string panorama;
  double iou_threshold = kDefaultIouThreshold;
  int missing_frames = kDefaultMissingFrames;
  std::string out = ".";
};

struct ServeFlags {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::vector<std::string> allow;
  std::size_t cache_size = 16;
  std::uint64_t seed = 0;
};

void diagnose(std::string_view code, const std::string& message) {
  Json j{{"error", {{"code", std::string(code)}, {"message", message}}}};
  std::cerr << j.dump() << "\n";
}

void warn(const std::string& message) { std::cerr << Json{{"warning", message}}.dump() << "\n"; }

std::vector<std::string> split_labels(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, ',')) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

void write_bytes(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out << bytes;
  if (!out) fail(ErrorCode::ImageIo, "cannot write " + path.string());
}

// "a:b" with integer frame ids.
std::pair<int, int> parse_range(const std::string& s) {
  static const std::regex re(R"(^\s*(-?\d+)\s*:\s*(-?\d+)\s*$)");
  std::smatch m;
  if (!std::regex_match(s, m, re)) fail(ErrorCode::InvalidRange, "--range must look like START:END");
  const int a = std::stoi(m[1]), b = std::stoi(m[2]);
  if (a > b) fail(ErrorCode::InvalidRange, "--range start " + std::to_string(a) + " exceeds end " + std::to_string(b));
  return {a, b};
}

PanoramaParams stitch_params(const StitchFlags& f, const Session& s) {
  PanoramaParams p = default_params(s);
  if (!f.range.empty()) std::tie(p.range_start, p.range_end) = parse_range(f.range);
  p.sample_stride = f.stride;
  p.base_frame_id = f.base;
  p.detector = parse_detector_kind(f.detector);
  p.max_features = f.max_features;
  p.lowe_ratio = f.lowe_ratio;
  p.ransac_thresh = f.ransac_thresh;
  p.min_inliers = f.min_inliers;
  p.alpha = f.alpha;
  p.filters.stretch_on = !f.no_filter_stretch;
  p.filters.flip_on = !f.no_filter_flips;
  p.filters.stretch.kmeans.k_max = f.kmax;
  p.seed = f.seed;
  return p;
}

OverlaySpec overlay_spec(const StitchFlags& f) {
  OverlaySpec spec;
  spec.style = parse_overlay_style(f.style);
  spec.min_confidence = f.min_confidence;
  if (!f.labels.empty()) spec.label_filter = split_labels(f.labels);
  spec.highlighted_frame = f.highlight;
  validate(spec);
  return spec;
}

int cmd_stitch(const StitchFlags& f) {
  // Flag-only checks run before any file is touched.
  if (!f.range.empty()) parse_range(f.range);
  const OverlaySpec spec = overlay_spec(f);

  const Session session = load_session(f.session);
  const PanoramaParams params = stitch_params(f, session);
  select_frames(session, params);
  const std::string sid = session_fingerprint(session);
  const std::string pid = panorama_id(sid, params);

  const Panorama pano = build_panorama(session, params);
  const auto detections = transform_predictions(session, pano);
  const Palette palette = Palette::for_labels(labels_by_first_appearance(session));
  for (const auto& w : palette.warnings()) warn(w);
  const Image overlay = render_overlay(pano, detections, spec, palette);

  const fs::path out(f.out);
  fs::create_directories(out);
  save_png(pano.image, out / "panorama.png");
  save_png(overlay, out / "overlay.png");
  write_bytes(out / "panorama.json", dump(panorama_to_json(pano, params, pid, sid)));
  for (const auto& p : pano.placements) {
    if (!p.included()) warn("frame " + std::to_string(p.frame_id) + " excluded: " + std::string(to_string(p.reason)));
  }
  return kExitOk;
}

int cmd_analytics(const AnalyticsFlags& f) {
  if (!(f.iou_threshold > 0.0 && f.iou_threshold < 1.0)) fail(ErrorCode::InvalidArgument, "--iou-threshold must lie in (0, 1)");
  if (f.missing_frames < 1) fail(ErrorCode::InvalidArgument, "--missing-frames must be at least 1");
  const Session session = load_session(f.session);
  const std::string sid = session_fingerprint(session);
  std::optional<PanoramaDocument> doc;
  if (!f.panorama.empty()) {
    std::ifstream in(f.panorama);
    if (!in) fail(ErrorCode::MissingFile, "cannot read " + f.panorama);
    Json j;
    try {
      j = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::MalformedRecord, f.panorama + ": " + e.what());
    }
    doc = panorama_from_json(j);
    if (doc->session_id != sid) fail(ErrorCode::InvalidArgument, "--panorama was built from a different session");
  }
  const fs::path out(f.out);
  fs::create_directories(out);
  const AnalyticsOptions options{f.iou_threshold, f.missing_frames};
  write_bytes(out / "analytics.json", dump(analytics_to_json(session, sid, options, doc ? &*doc : nullptr)));
  return kExitOk;
}

Service* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

int cmd_serve(const ServeFlags& f) {
  ServiceConfig config;
  for (const auto& a : f.allow) config.allowed_roots.push_back(a);
  config.cache_size = f.cache_size;
  config.default_seed = f.seed;
  Service service(config);
  g_service = &service;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << Json{{"listening", f.host + ":" + std::to_string(f.port)}}.dump() << "\n";
  service.listen(f.host, f.port);
  g_service = nullptr;
  return kExitOk;
}

int exit_code_for(ErrorCode code) {
  return code == ErrorCode::InvalidRange || code == ErrorCode::InvalidArgument ? kExitUsage : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Egocentric video panoramas with detection overlays and analytics"};
  app.require_subcommand(1);

  StitchFlags sf;
  auto* stitch = app.add_subcommand("stitch", "Build panorama.png, overlay.png and panorama.json");
  stitch->add_option("--session", sf.session, "Session directory")->required();
  stitch->add_option("--range", sf.range, "Frame id range START:END (inclusive)");
  stitch->add_option("--stride", sf.stride, "Keep every Nth frame of the range")->check(CLI::PositiveNumber);
  stitch->add_option("--base", sf.base, "Base frame id (default: middle of the range)");
  stitch->add_option("--detector", sf.detector, "Feature detector");
  stitch->add_option("--max-features", sf.max_features, "Keypoints kept per frame");
  stitch->add_option("--lowe-ratio", sf.lowe_ratio, "Ratio-test threshold")->check(CLI::Range(0.0, 1.0));
  stitch->add_option("--ransac-thresh", sf.ransac_thresh, "RANSAC inlier threshold in pixels")->check(CLI::PositiveNumber);
  stitch->add_option("--min-inliers", sf.min_inliers, "Inliers needed to place a frame");
  stitch->add_option("--alpha", sf.alpha, "Frame opacity")->check(CLI::Range(0.0, 1.0));
  stitch->add_flag("--no-filter-stretch", sf.no_filter_stretch, "Skip stretch clustering");
  stitch->add_flag("--no-filter-flips", sf.no_filter_flips, "Skip flip detection");
  stitch->add_option("--kmax", sf.kmax, "Largest k tried by the elbow rule")->check(CLI::PositiveNumber);
  stitch->add_option("--seed", sf.seed, "Random seed");
  stitch->add_option("--style", sf.style, "Overlay style")->check(CLI::IsMember({"boxes", "centroids", "arrows"}));
  stitch->add_option("--min-confidence", sf.min_confidence, "Hide predictions below this confidence");
  stitch->add_option("--labels", sf.labels, "Comma-separated labels to draw");
  stitch->add_option("--highlight-frame", sf.highlight, "Outline this frame");
  stitch->add_option("--out", sf.out, "Output directory");

  AnalyticsFlags af;
  auto* analytics = app.add_subcommand("analytics", "Write analytics.json");
  analytics->add_option("--session", af.session, "Session directory")->required();
  analytics->add_option("--panorama", af.panorama, "panorama.json for chains and distance series");
  analytics->add_option("--iou-threshold", af.iou_threshold, "IoU needed for a true positive");
  analytics->add_option("--missing-frames", af.missing_frames, "Absent frames before a MissingLabel event");
  analytics->add_option("--out", af.out, "Output directory");

  ServeFlags vf;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--host", vf.host, "Bind address")->envname("EGOPANO_HOST");
  serve->add_option("--port", vf.port, "Port")->envname("EGOPANO_PORT");
  serve->add_option("--allow", vf.allow, "Allowed session root (repeatable)")->envname("EGOPANO_ALLOW")->delimiter(':');
  serve->add_option("--cache-size", vf.cache_size, "Completed panoramas kept in memory")->envname("EGOPANO_CACHE_SIZE");
  serve->add_option("--seed", vf.seed, "Seed for jobs that omit one")->envname("EGOPANO_SEED");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (stitch->parsed()) return cmd_stitch(sf);
    if (analytics->parsed()) return cmd_analytics(af);
    return cmd_serve(vf);
  } catch (const Error& e) {
    diagnose(to_string(e.code()), e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    diagnose("Internal", e.what());
    return kExitRuntime;
  }
}
