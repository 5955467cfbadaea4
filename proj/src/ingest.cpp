#include "egopano/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "egopano/error.hpp"
#include "egopano/image.hpp"

namespace egopano {

using nlohmann::json;
namespace fs = std::filesystem;

Mat3 Intrinsics::matrix() const {
  Mat3 k;
  k << fx, skew, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

const FrameRef& Session::frame(int frame_id) const {
  const int idx = frame_index(frame_id);
  if (idx < 0) fail(ErrorCode::InvalidArgument, "unknown frame id " + std::to_string(frame_id));
  return frames[static_cast<std::size_t>(idx)];
}

int Session::frame_index(int frame_id) const {
  auto it = std::lower_bound(frames.begin(), frames.end(), frame_id,
                             [](const FrameRef& f, int id) { return f.id < id; });
  if (it == frames.end() || it->id != frame_id) return -1;
  return static_cast<int>(it - frames.begin());
}

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::MissingFile, path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedRecord, path.filename().string() + ": " + e.what());
  }
}

[[noreturn]] void malformed(const fs::path& file, std::size_t line, const std::string& what) {
  std::ostringstream msg;
  msg << file.filename().string() << " line " << line << ": " << what;
  fail(ErrorCode::MalformedRecord, msg.str());
}

double number_field(const json& obj, const char* key, const fs::path& file, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_number()) malformed(file, line, std::string("missing numeric field '") + key + "'");
  const double v = it->get<double>();
  if (!std::isfinite(v)) malformed(file, line, std::string("non-finite '") + key + "'");
  return v;
}

std::vector<Detection> read_detections(const fs::path& file, DetectionSource source) {
  std::ifstream in(file);
  if (!in) fail(ErrorCode::MissingFile, file.string());
  std::vector<Detection> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(text);
    } catch (const json::exception&) {
      malformed(file, line, "not a JSON object");
    }
    if (!rec.is_object()) malformed(file, line, "not a JSON object");
    Detection d;
    d.source = source;
    d.timestamp = number_field(rec, "t", file, line);
    auto label = rec.find("label");
    if (label == rec.end() || !label->is_string() || label->get<std::string>().empty()) {
      malformed(file, line, "missing or empty label");
    }
    d.label = label->get<std::string>();
    auto bbox = rec.find("bbox");
    if (bbox == rec.end() || !bbox->is_array() || bbox->size() != 4) malformed(file, line, "bbox must have 4 numbers");
    std::array<double, 4> b{};
    for (std::size_t i = 0; i < 4; ++i) {
      if (!(*bbox)[i].is_number()) malformed(file, line, "bbox must have 4 numbers");
      b[i] = (*bbox)[i].get<double>();
      if (!std::isfinite(b[i])) malformed(file, line, "non-finite bbox");
    }
    d.bbox = {b[0], b[1], b[2], b[3]};
    if (!(d.bbox.x1 < d.bbox.x2) || !(d.bbox.y1 < d.bbox.y2)) malformed(file, line, "bbox requires x1 < x2 and y1 < y2");
    if (rec.contains("confidence")) {
      d.confidence = number_field(rec, "confidence", file, line);
    } else if (source == DetectionSource::Prediction) {
      malformed(file, line, "missing numeric field 'confidence'");
    }
    if (d.confidence < 0.0 || d.confidence > 1.0) malformed(file, line, "confidence outside [0, 1]");
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace

std::vector<Detection> match_detections_to_frames(std::vector<Detection> detections,
                                                  std::span<const FrameRef> frames) {
  if (frames.empty()) fail(ErrorCode::EmptyFrameList, "cannot match detections without frames");
  std::stable_sort(detections.begin(), detections.end(),
                   [](const Detection& a, const Detection& b) { return a.timestamp < b.timestamp; });
  for (Detection& d : detections) {
    // First frame with timestamp >= t; the answer is it or its predecessor.
    auto it = std::lower_bound(frames.begin(), frames.end(), d.timestamp,
                               [](const FrameRef& f, double t) { return f.timestamp < t; });
    if (it == frames.end()) {
      d.matched_frame_id = frames.back().id;
      continue;
    }
    // Walk back over equal timestamps so ties resolve to the earliest frame.
    while (it != frames.begin() && std::prev(it)->timestamp == it->timestamp) --it;
    if (it == frames.begin()) {
      d.matched_frame_id = it->id;
      continue;
    }
    auto prev = std::prev(it);
    while (prev != frames.begin() && std::prev(prev)->timestamp == prev->timestamp) --prev;
    const double after = it->timestamp - d.timestamp;
    const double before = d.timestamp - prev->timestamp;
    d.matched_frame_id = before <= after ? prev->id : it->id;
  }
  return detections;
}

Intrinsics default_intrinsics(int width, int height) {
  if (width <= 0 || height <= 0) fail(ErrorCode::InvalidArgument, "image dimensions must be positive");
  Intrinsics k;
  k.fx = k.fy = static_cast<double>(width);
  k.cx = width / 2.0;
  k.cy = height / 2.0;
  k.skew = 0.0;
  return k;
}

std::vector<std::string> session_vocabulary(const Session& session) {
  std::set<std::string> labels;
  for (const auto& d : session.predictions) labels.insert(d.label);
  for (const auto& d : session.ground_truth) labels.insert(d.label);
  return {labels.begin(), labels.end()};
}

Session load_session(const fs::path& dir) {
  Session s;
  s.root = dir;
  const fs::path frames_file = dir / "frames.json";
  const fs::path detections_file = dir / "detections.jsonl";
  if (!fs::exists(frames_file)) fail(ErrorCode::MissingFile, frames_file.string());
  if (!fs::is_directory(dir / "frames")) fail(ErrorCode::MissingFile, (dir / "frames").string());
  if (!fs::exists(detections_file)) fail(ErrorCode::MissingFile, detections_file.string());

  const json frames = read_json_file(frames_file);
  if (!frames.is_array()) fail(ErrorCode::MalformedRecord, "frames.json must be an array");
  std::size_t index = 0;
  for (const json& f : frames) {
    ++index;
    if (!f.is_object() || !f.contains("id") || !f["id"].is_number_integer() || !f.contains("file") ||
        !f["file"].is_string()) {
      malformed(frames_file, index, "frame entries need integer 'id', number 't' and string 'file'");
    }
    FrameRef ref;
    ref.id = f["id"].get<int>();
    if (ref.id < 0) malformed(frames_file, index, "frame id must be >= 0");
    ref.timestamp = number_field(f, "t", frames_file, index);
    ref.image_path = f["file"].get<std::string>();
    s.frames.push_back(std::move(ref));
  }
  if (s.frames.empty()) fail(ErrorCode::EmptyFrameList, "frames.json lists no frames");

  std::stable_sort(s.frames.begin(), s.frames.end(), [](const FrameRef& a, const FrameRef& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < s.frames.size(); ++i) {
    if (s.frames[i].id == s.frames[i - 1].id) {
      fail(ErrorCode::MalformedRecord, "duplicate frame id " + std::to_string(s.frames[i].id));
    }
    if (s.frames[i].timestamp < s.frames[i - 1].timestamp) {
      fail(ErrorCode::NonMonotoneTimestamps, "frame " + std::to_string(s.frames[i].id) + " precedes frame " +
                                                 std::to_string(s.frames[i - 1].id) + " in time");
    }
  }
  for (FrameRef& ref : s.frames) {
    const fs::path image = dir / ref.image_path;
    if (!fs::exists(image)) fail(ErrorCode::MissingFile, image.string());
    std::tie(ref.width, ref.height) = probe_image_size(image);
    if (ref.width <= 0 || ref.height <= 0) fail(ErrorCode::ImageIo, "bad dimensions in " + image.string());
    if (ref.width != s.frames.front().width || ref.height != s.frames.front().height) {
      fail(ErrorCode::InconsistentFrameDimensions,
           ref.image_path + " is " + std::to_string(ref.width) + "x" + std::to_string(ref.height) + ", expected " +
               std::to_string(s.frames.front().width) + "x" + std::to_string(s.frames.front().height));
    }
  }

  s.predictions = match_detections_to_frames(read_detections(detections_file, DetectionSource::Prediction), s.frames);
  if (fs::exists(dir / "groundtruth.jsonl")) {
    s.ground_truth =
        match_detections_to_frames(read_detections(dir / "groundtruth.jsonl", DetectionSource::GroundTruth), s.frames);
  }

  if (fs::exists(dir / "intrinsics.json")) {
    const json k = read_json_file(dir / "intrinsics.json");
    if (!k.is_object()) fail(ErrorCode::MalformedRecord, "intrinsics.json must be an object");
    const fs::path kf = dir / "intrinsics.json";
    s.intrinsics.fx = number_field(k, "fx", kf, 1);
    s.intrinsics.fy = number_field(k, "fy", kf, 1);
    s.intrinsics.cx = number_field(k, "cx", kf, 1);
    s.intrinsics.cy = number_field(k, "cy", kf, 1);
    s.intrinsics.skew = k.contains("skew") ? number_field(k, "skew", kf, 1) : 0.0;
    if (!s.intrinsics.valid()) fail(ErrorCode::MalformedRecord, "intrinsics.json: fx and fy must be positive");
  } else {
    s.intrinsics = default_intrinsics(s.frames.front().width, s.frames.front().height);
  }

  std::set<std::string> vocab;
  if (fs::exists(dir / "vocabulary.json")) {
    const json v = read_json_file(dir / "vocabulary.json");
    if (!v.is_array()) fail(ErrorCode::MalformedRecord, "vocabulary.json must be an array of strings");
    for (const json& label : v) {
      if (!label.is_string() || label.get<std::string>().empty()) {
        fail(ErrorCode::MalformedRecord, "vocabulary.json must be an array of non-empty strings");
      }
      vocab.insert(label.get<std::string>());
    }
  }
  // The vocabulary always covers every observed label.
  for (const auto& label : session_vocabulary(s)) vocab.insert(label);
  s.vocabulary.assign(vocab.begin(), vocab.end());
  return s;
}

namespace {

json detection_record(const Detection& d) {
  return json{{"t", d.timestamp},
              {"label", d.label},
              {"bbox", {d.bbox.x1, d.bbox.y1, d.bbox.x2, d.bbox.y2}},
              {"confidence", d.confidence}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::ImageIo, "cannot write " + path.string());
  out << text;
}

}  // namespace

void save_session_metadata(const Session& session, const fs::path& dir) {
  fs::create_directories(dir);
  json frames = json::array();
  for (const auto& f : session.frames) frames.push_back({{"id", f.id}, {"t", f.timestamp}, {"file", f.image_path}});
  write_text(dir / "frames.json", frames.dump(2) + "\n");

  auto write_stream = [&](const fs::path& path, const std::vector<Detection>& stream) {
    std::string text;
    for (const auto& d : stream) text += detection_record(d).dump() + "\n";
    write_text(path, text);
  };
  write_stream(dir / "detections.jsonl", session.predictions);
  write_stream(dir / "groundtruth.jsonl", session.ground_truth);

  const Intrinsics& k = session.intrinsics;
  write_text(dir / "intrinsics.json",
             json{{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"skew", k.skew}}.dump(2) + "\n");
  write_text(dir / "vocabulary.json", json(session.vocabulary).dump(2) + "\n");
}

}  // namespace egopano
