#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "egopano/error.hpp"
#include "egopano/export.hpp"
#include "egopano/overlay.hpp"

namespace egopano {

struct ServiceConfig {
  std::vector<std::filesystem::path> allowed_roots;  // empty: any directory
  std::size_t cache_size = 16;                       // completed panoramas kept
  std::uint64_t default_seed = 0;                    // used when params omit "seed"
};

enum class JobState { Queued, Running, Done, Failed };

std::string_view to_string(JobState s);

struct JobStatus {
  std::string job_id;
  std::string session_id;
  std::string panorama_id;  // target id; the result once Done
  JobState state = JobState::Queued;
  std::string error_code;
  std::string error_message;
  double created_at = 0.0;  // seconds since the epoch
  std::optional<double> finished_at;
};

Json job_to_json(const JobStatus& job);

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

using QueryParams = std::multimap<std::string, std::string>;

int http_status_for(ErrorCode code);

class Service {
 public:
  explicit Service(ServiceConfig config = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  std::string open_session(const std::filesystem::path& root);
  Json session_meta(const std::string& session_id) const;
  std::vector<std::uint8_t> frame_png(const std::string& session_id, int frame_id) const;
  Json timeline_summary(const std::string& session_id, TimelineMetric metric) const;
  Json timeline_classification(const std::string& session_id, double iou_threshold) const;
  Json timeline_distance(const std::string& session_id, const std::optional<std::string>& panorama_id) const;
  Json events(const std::string& session_id, int missing_frames) const;

  std::string submit_panorama(const std::string& session_id, const Json& params);
  JobStatus job(const std::string& job_id) const;
  JobStatus wait(const std::string& job_id, std::chrono::milliseconds timeout = std::chrono::minutes(10)) const;

  std::vector<std::uint8_t> panorama_png(const std::string& panorama_id) const;
  std::vector<std::uint8_t> overlay_png(const std::string& panorama_id, const OverlaySpec& spec) const;
  Json panorama_report(const std::string& panorama_id) const;
  Json panorama_distance(const std::string& panorama_id) const;

  // Number of panorama builds executed so far.
  std::size_t builds_run() const;

  // Routes one request; every error becomes a JSON body with a matching status.
  HttpResponse handle(const std::string& method, const std::string& path, const QueryParams& query,
                      const std::string& body);

  // Blocks serving HTTP until stop() is called from another thread.
  void listen(const std::string& host, int port);
  void stop();

 private:
  struct SessionHandle;
  struct PanoramaEntry;
  struct Job;

  std::shared_ptr<const SessionHandle> session_handle(const std::string& id) const;
  std::shared_ptr<const PanoramaEntry> entry(const std::string& panorama_id) const;
  void worker_loop();
  void run_job(const std::string& job_id);
  HttpResponse route(const std::string& method, const std::string& path, const QueryParams& query,
                     const std::string& body);

  ServiceConfig config_;
  mutable std::mutex mutex_;
  mutable std::condition_variable changed_;
  std::map<std::string, std::shared_ptr<const SessionHandle>> sessions_;
  std::map<std::string, std::shared_ptr<const PanoramaEntry>> cache_;
  std::deque<std::string> cache_order_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  std::map<std::string, std::string> job_for_panorama_;
  std::deque<std::string> queue_;
  std::uint64_t next_job_ = 1;
  std::size_t builds_ = 0;
  bool stopping_ = false;
  std::thread worker_;
  void* server_ = nullptr;  // httplib::Server while listening
};

}  // namespace egopano
