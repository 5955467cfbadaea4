#include "egopano/service.hpp"

#include <algorithm>
#include <sstream>

#include <httplib.h>

#include "egopano/error.hpp"

namespace egopano {

namespace fs = std::filesystem;

std::string_view to_string(JobState s) {
  switch (s) {
    case JobState::Queued: return "Queued";
    case JobState::Running: return "Running";
    case JobState::Done: return "Done";
    case JobState::Failed: return "Failed";
  }
  return "Queued";
}

Json job_to_json(const JobStatus& job) {
  Json j;
  j["job_id"] = job.job_id;
  j["session_id"] = job.session_id;
  j["state"] = std::string(to_string(job.state));
  j["panorama_id"] = job.state == JobState::Done ? Json(job.panorama_id) : Json(nullptr);
  if (job.state == JobState::Failed) {
    j["error"] = {{"code", job.error_code}, {"message", job.error_message}};
  } else {
    j["error"] = nullptr;
  }
  j["created_at"] = job.created_at;
  j["finished_at"] = job.finished_at ? Json(*job.finished_at) : Json(nullptr);
  return j;
}

int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::SessionNotFound:
    case ErrorCode::PanoramaNotFound:
    case ErrorCode::JobNotFound: return 404;
    case ErrorCode::NotAllowed: return 403;
    case ErrorCode::ImageIo:
    case ErrorCode::SingularNormalEquations: return 500;
    default: return 400;
  }
}

struct Service::SessionHandle {
  std::string id;
  fs::path root;
  Session session;
};

struct Service::PanoramaEntry {
  std::string id;
  std::string session_id;
  PanoramaParams params;
  Panorama panorama;
  std::vector<std::uint8_t> png;
  std::vector<TransformedDetection> detections;
  Palette palette;
  Json report;
};

struct Service::Job {
  JobStatus status;
  PanoramaParams params;
};

namespace {

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

bool within(const fs::path& root, const fs::path& allowed) {
  auto r = root.begin();
  for (auto a = allowed.begin(); a != allowed.end(); ++a, ++r) {
    if (a->empty()) continue;  // trailing separator
    if (r == root.end() || *r != *a) return false;
  }
  return true;
}

std::optional<std::string> query_value(const QueryParams& q, const std::string& key) {
  auto it = q.find(key);
  if (it == q.end() || it->second.empty()) return std::nullopt;
  return it->second;
}

int parse_int(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::InvalidArgument, std::string(what) + " must be an integer");
}

double parse_double(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::InvalidArgument, std::string(what) + " must be a number");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string part;
  std::istringstream in(s);
  while (std::getline(in, part, sep)) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

HttpResponse json_response(const Json& j, int status = 200) { return {status, "application/json", dump(j)}; }

HttpResponse png_response(const std::vector<std::uint8_t>& bytes) {
  return {200, "image/png", std::string(bytes.begin(), bytes.end())};
}

HttpResponse error_response(ErrorCode code, const std::string& message) {
  return json_response(Json{{"error", {{"code", std::string(to_string(code))}, {"message", message}}}},
                       http_status_for(code));
}

}  // namespace

Service::Service(ServiceConfig config) : config_(std::move(config)) {
  for (auto& root : config_.allowed_roots) root = fs::weakly_canonical(fs::absolute(root));
  worker_ = std::thread([this] { worker_loop(); });
}

Service::~Service() {
  stop();
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  changed_.notify_all();
  worker_.join();
}

std::string Service::open_session(const fs::path& root) {
  const fs::path canonical = fs::weakly_canonical(fs::absolute(root));
  if (!config_.allowed_roots.empty() &&
      std::none_of(config_.allowed_roots.begin(), config_.allowed_roots.end(),
                   [&](const fs::path& a) { return within(canonical, a); })) {
    fail(ErrorCode::NotAllowed, "session root " + canonical.string() + " is outside the allow-list");
  }
  auto handle = std::make_shared<SessionHandle>();
  handle->root = canonical;
  handle->session = load_session(canonical);
  handle->id = session_fingerprint(handle->session);
  std::lock_guard lock(mutex_);
  auto [it, inserted] = sessions_.emplace(handle->id, handle);
  return it->first;
}

std::shared_ptr<const Service::SessionHandle> Service::session_handle(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) fail(ErrorCode::SessionNotFound, "unknown session " + id);
  return it->second;
}

std::shared_ptr<const Service::PanoramaEntry> Service::entry(const std::string& panorama_id) const {
  std::lock_guard lock(mutex_);
  auto it = cache_.find(panorama_id);
  if (it == cache_.end()) fail(ErrorCode::PanoramaNotFound, "unknown panorama " + panorama_id);
  return it->second;
}

Json Service::session_meta(const std::string& session_id) const {
  const auto h = session_handle(session_id);
  return session_meta_json(h->session, h->id);
}

std::vector<std::uint8_t> Service::frame_png(const std::string& session_id, int frame_id) const {
  const auto h = session_handle(session_id);
  if (h->session.frame_index(frame_id) < 0) {
    fail(ErrorCode::InvalidArgument, "session has no frame " + std::to_string(frame_id));
  }
  return encode_png(load_image(h->session.image_path(h->session.frame(frame_id))));
}

Json Service::timeline_summary(const std::string& session_id, TimelineMetric metric) const {
  return matrix_to_json(summary_matrix(session_handle(session_id)->session, metric));
}

Json Service::timeline_classification(const std::string& session_id, double iou_threshold) const {
  return classification_to_json(classify_session(session_handle(session_id)->session, iou_threshold));
}

Json Service::timeline_distance(const std::string& session_id, const std::optional<std::string>& panorama_id) const {
  session_handle(session_id);
  if (!panorama_id) fail(ErrorCode::MissingPanorama, "distance series need a panorama_id");
  const auto e = entry(*panorama_id);
  if (e->session_id != session_id) fail(ErrorCode::PanoramaNotFound, "panorama belongs to another session");
  return panorama_distance(*panorama_id);
}

Json Service::events(const std::string& session_id, int missing_frames) const {
  return events_to_json(poi_events(session_handle(session_id)->session, missing_frames));
}

std::string Service::submit_panorama(const std::string& session_id, const Json& params_json) {
  const auto h = session_handle(session_id);
  Json with_seed = params_json.is_null() ? Json::object() : params_json;
  if (with_seed.is_object() && !with_seed.contains("seed")) with_seed["seed"] = config_.default_seed;
  const PanoramaParams params = params_from_json(with_seed, h->session);
  select_frames(h->session, params);
  if (!(params.lowe_ratio > 0.0 && params.lowe_ratio < 1.0)) fail(ErrorCode::InvalidArgument, "lowe_ratio must lie in (0, 1)");
  if (!(params.alpha > 0.0 && params.alpha <= 1.0)) fail(ErrorCode::InvalidArgument, "alpha must lie in (0, 1]");
  if (!(params.ransac_thresh > 0.0)) fail(ErrorCode::InvalidArgument, "ransac_thresh must be positive");
  if (params.filters.stretch.kmeans.k_max < 1) fail(ErrorCode::InvalidArgument, "kmax must be at least 1");
  const std::string pid = panorama_id(h->id, params);

  std::lock_guard lock(mutex_);
  auto known = job_for_panorama_.find(pid);
  if (known != job_for_panorama_.end()) {
    const auto& job = jobs_.at(known->second);
    const bool live = job->status.state == JobState::Queued || job->status.state == JobState::Running;
    if (live || (job->status.state == JobState::Done && cache_.count(pid))) return job->status.job_id;
  }
  auto job = std::make_shared<Job>();
  job->status.job_id = "job-" + std::to_string(next_job_++);
  job->status.session_id = h->id;
  job->status.panorama_id = pid;
  job->status.created_at = now_seconds();
  job->params = params;
  jobs_[job->status.job_id] = job;
  job_for_panorama_[pid] = job->status.job_id;
  queue_.push_back(job->status.job_id);
  changed_.notify_all();
  return job->status.job_id;
}

JobStatus Service::job(const std::string& job_id) const {
  std::lock_guard lock(mutex_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) fail(ErrorCode::JobNotFound, "unknown job " + job_id);
  return it->second->status;
}

JobStatus Service::wait(const std::string& job_id, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) fail(ErrorCode::JobNotFound, "unknown job " + job_id);
  const auto job = it->second;
  changed_.wait_for(lock, timeout, [&] {
    return job->status.state == JobState::Done || job->status.state == JobState::Failed;
  });
  return job->status;
}

void Service::worker_loop() {
  for (;;) {
    std::string job_id;
    {
      std::unique_lock lock(mutex_);
      changed_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      job_id = queue_.front();
      queue_.pop_front();
      jobs_.at(job_id)->status.state = JobState::Running;
    }
    changed_.notify_all();
    run_job(job_id);
    changed_.notify_all();
  }
}

void Service::run_job(const std::string& job_id) {
  std::shared_ptr<Job> job;
  {
    std::lock_guard lock(mutex_);
    job = jobs_.at(job_id);
  }
  const std::string session_id = job->status.session_id;
  const std::string pid = job->status.panorama_id;
  std::optional<std::pair<std::string, std::string>> error;
  std::shared_ptr<PanoramaEntry> built;
  try {
    const auto h = session_handle(session_id);
    built = std::make_shared<PanoramaEntry>();
    built->id = pid;
    built->session_id = session_id;
    built->params = job->params;
    built->panorama = build_panorama(h->session, job->params);
    built->png = encode_png(built->panorama.image);
    built->detections = transform_predictions(h->session, built->panorama);
    const auto labels = labels_by_first_appearance(h->session);
    built->palette = Palette::for_labels(labels);
    built->report = panorama_to_json(built->panorama, job->params, pid, session_id);
  } catch (const Error& e) {
    error = {std::string(to_string(e.code())), e.what()};
  } catch (const std::exception& e) {
    error = {"Internal", e.what()};
  }

  std::lock_guard lock(mutex_);
  ++builds_;
  job->status.finished_at = now_seconds();
  if (error) {
    job->status.state = JobState::Failed;
    job->status.error_code = error->first;
    job->status.error_message = error->second;
    return;
  }
  if (!cache_.count(pid)) {
    cache_[pid] = built;
    cache_order_.push_back(pid);
    while (cache_order_.size() > std::max<std::size_t>(config_.cache_size, 1)) {
      cache_.erase(cache_order_.front());
      cache_order_.pop_front();
    }
  }
  job->status.state = JobState::Done;
}

std::size_t Service::builds_run() const {
  std::lock_guard lock(mutex_);
  return builds_;
}

std::vector<std::uint8_t> Service::panorama_png(const std::string& panorama_id) const {
  return entry(panorama_id)->png;
}

std::vector<std::uint8_t> Service::overlay_png(const std::string& panorama_id, const OverlaySpec& spec) const {
  validate(spec);
  const auto e = entry(panorama_id);
  return encode_png(render_overlay(e->panorama, e->detections, spec, e->palette));
}

Json Service::panorama_report(const std::string& panorama_id) const { return entry(panorama_id)->report; }

Json Service::panorama_distance(const std::string& panorama_id) const {
  const auto e = entry(panorama_id);
  const auto chains = arrow_chains_by_label(e->detections);
  return Json{{"panorama_id", e->id}, {"chains", chains_to_json(chains)},
              {"distance", distance_to_json(distance_series(chains))}};
}

HttpResponse Service::handle(const std::string& method, const std::string& path, const QueryParams& query,
                             const std::string& body) {
  try {
    return route(method, path, query, body);
  } catch (const Error& e) {
    return error_response(e.code(), e.what());
  } catch (const std::exception& e) {
    return json_response(Json{{"error", {{"code", "Internal"}, {"message", e.what()}}}}, 500);
  }
}

HttpResponse Service::route(const std::string& method, const std::string& path, const QueryParams& query,
                            const std::string& body) {
  const auto parts = split(path, '/');
  auto parse_body = [&]() -> Json {
    if (body.empty()) return Json::object();
    try {
      return Json::parse(body);
    } catch (const nlohmann::json::exception&) {
      fail(ErrorCode::InvalidArgument, "request body is not valid JSON");
    }
  };
  const auto not_found = [&]() {
    return json_response(Json{{"error", {{"code", "NoRoute"}, {"message", "no route for " + method + " " + path}}}}, 404);
  };

  if (method == "POST") {
    if (parts.size() == 1 && parts[0] == "sessions") {
      const Json j = parse_body();
      if (!j.contains("root") || !j["root"].is_string()) fail(ErrorCode::InvalidArgument, "body needs a 'root' string");
      const std::string id = open_session(j["root"].get<std::string>());
      Json out = session_meta(id);
      return json_response(out, 201);
    }
    if (parts.size() == 3 && parts[0] == "sessions" && parts[2] == "panoramas") {
      const std::string job_id = submit_panorama(parts[1], parse_body());
      return json_response(job_to_json(job(job_id)), 202);
    }
    return not_found();
  }
  if (method != "GET") return not_found();

  if (parts.size() >= 3 && parts[0] == "sessions") {
    const std::string& sid = parts[1];
    if (parts.size() == 3 && parts[2] == "meta") return json_response(session_meta(sid));
    if (parts.size() == 4 && parts[2] == "frames") return png_response(frame_png(sid, parse_int(parts[3], "frame id")));
    if (parts.size() == 3 && parts[2] == "events") {
      const auto n = query_value(query, "missing");
      return json_response(events(sid, n ? parse_int(*n, "missing") : kDefaultMissingFrames));
    }
    if (parts.size() == 4 && parts[2] == "timeline") {
      if (parts[3] == "summary") {
        const auto m = query_value(query, "metric");
        return json_response(timeline_summary(sid, m ? parse_timeline_metric(*m) : TimelineMetric::Confidence));
      }
      if (parts[3] == "classification") {
        const auto t = query_value(query, "iou_threshold");
        return json_response(timeline_classification(sid, t ? parse_double(*t, "iou_threshold") : kDefaultIouThreshold));
      }
      if (parts[3] == "distance") return json_response(timeline_distance(sid, query_value(query, "panorama_id")));
    }
    return not_found();
  }
  if (parts.size() == 2 && parts[0] == "jobs") return json_response(job_to_json(job(parts[1])));
  if (parts.size() == 3 && parts[0] == "panoramas") {
    const std::string& pid = parts[1];
    if (parts[2] == "image") return png_response(panorama_png(pid));
    if (parts[2] == "report") return json_response(panorama_report(pid));
    if (parts[2] == "distance") return json_response(panorama_distance(pid));
    if (parts[2] == "overlay") {
      OverlaySpec spec;
      if (auto s = query_value(query, "style")) spec.style = parse_overlay_style(*s);
      if (auto c = query_value(query, "min_conf")) spec.min_confidence = parse_double(*c, "min_conf");
      if (auto l = query_value(query, "labels")) spec.label_filter = split(*l, ',');
      if (auto f = query_value(query, "highlight")) spec.highlighted_frame = parse_int(*f, "highlight");
      return png_response(overlay_png(pid, spec));
    }
  }
  return not_found();
}

void Service::listen(const std::string& host, int port) {
  httplib::Server server;
  auto forward = [this](const httplib::Request& req, httplib::Response& res) {
    QueryParams q(req.params.begin(), req.params.end());
    const HttpResponse r = handle(req.method, req.path, q, req.body);
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  server.Get(".*", forward);
  server.Post(".*", forward);
  {
    std::lock_guard lock(mutex_);
    server_ = &server;
  }
  const bool ok = server.listen(host, port);
  {
    std::lock_guard lock(mutex_);
    server_ = nullptr;
  }
  if (!ok) fail(ErrorCode::InvalidArgument, "cannot listen on " + host + ":" + std::to_string(port));
}

void Service::stop() {
  std::lock_guard lock(mutex_);
  if (server_) static_cast<httplib::Server*>(server_)->stop();
}

}  // namespace egopano
