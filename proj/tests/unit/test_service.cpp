#include <gtest/gtest.h>

#include <thread>

#include "egopano/service.hpp"
#include "synth.hpp"

// After Eigen: the socket headers define macros that collide with its internals.
#include <httplib.h>

using namespace egopano;

namespace {

const std::string kSmall = R"({"range": [0, 9], "sample_stride": 3})";

Json body_of(const HttpResponse& r) { return Json::parse(r.body); }

std::string error_code(const HttpResponse& r) { return body_of(r)["error"]["code"].get<std::string>(); }

std::string open_fixture(Service& svc) {
  const HttpResponse r = svc.handle("POST", "/sessions", {}, Json{{"root", EGOPANO_FIXTURE_DIR}}.dump());
  EXPECT_EQ(r.status, 201) << r.body;
  return body_of(r)["session_id"].get<std::string>();
}

std::string build(Service& svc, const std::string& sid, const std::string& params) {
  const HttpResponse r = svc.handle("POST", "/sessions/" + sid + "/panoramas", {}, params);
  EXPECT_EQ(r.status, 202) << r.body;
  const std::string job = body_of(r)["job_id"].get<std::string>();
  const JobStatus done = svc.wait(job);
  EXPECT_EQ(done.state, JobState::Done) << done.error_message;
  return done.panorama_id;
}

}  // namespace

TEST(Service, OpenSessionAndMeta) {
  Service svc;
  const std::string sid = open_fixture(svc);
  EXPECT_EQ(sid.size(), 16u);
  EXPECT_EQ(open_fixture(svc), sid);
  const HttpResponse meta = svc.handle("GET", "/sessions/" + sid + "/meta", {}, "");
  ASSERT_EQ(meta.status, 200);
  EXPECT_EQ(body_of(meta)["frame_count"], 30);
  EXPECT_EQ(body_of(meta), session_meta_json(load_session(EGOPANO_FIXTURE_DIR), sid));

  const auto empty = synth::temp_dir("svc_missing");
  const HttpResponse missing = svc.handle("POST", "/sessions", {}, Json{{"root", empty.string()}}.dump());
  EXPECT_EQ(missing.status, 400);
  EXPECT_EQ(error_code(missing), "MissingFile");

  EXPECT_EQ(svc.handle("GET", "/sessions/nope/meta", {}, "").status, 404);
  EXPECT_EQ(error_code(svc.handle("GET", "/sessions/nope/meta", {}, "")), "SessionNotFound");
  EXPECT_EQ(svc.handle("GET", "/nowhere", {}, "").status, 404);
  EXPECT_EQ(svc.handle("POST", "/sessions", {}, "{not json").status, 400);
}

TEST(Service, AllowList) {
  ServiceConfig cfg;
  cfg.allowed_roots = {synth::temp_dir("svc_allowed")};
  Service svc(cfg);
  const HttpResponse r = svc.handle("POST", "/sessions", {}, Json{{"root", EGOPANO_FIXTURE_DIR}}.dump());
  EXPECT_EQ(r.status, 403);
  EXPECT_EQ(error_code(r), "NotAllowed");
}

TEST(Service, FramePng) {
  Service svc;
  const std::string sid = open_fixture(svc);
  const HttpResponse r = svc.handle("GET", "/sessions/" + sid + "/frames/4", {}, "");
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.content_type, "image/png");
  const Session s = load_session(EGOPANO_FIXTURE_DIR);
  const std::vector<std::uint8_t> bytes(r.body.begin(), r.body.end());
  EXPECT_EQ(decode_png(bytes), load_image(s.image_path(s.frame(4))));
  EXPECT_EQ(svc.handle("GET", "/sessions/" + sid + "/frames/99", {}, "").status, 400);
}

TEST(Service, DuplicateSubmitHitsCache) {
  Service svc;
  const std::string sid = open_fixture(svc);
  const std::string pid = build(svc, sid, kSmall);
  const std::size_t builds = svc.builds_run();
  const HttpResponse again = svc.handle("POST", "/sessions/" + sid + "/panoramas", {}, kSmall);
  ASSERT_EQ(again.status, 202);
  EXPECT_EQ(body_of(again)["state"], "Done");
  EXPECT_EQ(body_of(again)["panorama_id"], pid);
  EXPECT_EQ(svc.builds_run(), builds);

  const HttpResponse job = svc.handle("GET", "/jobs/" + body_of(again)["job_id"].get<std::string>(), {}, "");
  EXPECT_EQ(body_of(job)["state"], "Done");
  EXPECT_EQ(svc.handle("GET", "/jobs/job-999", {}, "").status, 404);

  const HttpResponse report = svc.handle("GET", "/panoramas/" + pid + "/report", {}, "");
  ASSERT_EQ(report.status, 200);
  EXPECT_EQ(body_of(report)["panorama_id"], pid);
  EXPECT_EQ(svc.handle("GET", "/panoramas/ffff/report", {}, "").status, 404);
}

TEST(Service, SubmitValidation) {
  Service svc;
  const std::string sid = open_fixture(svc);
  const auto post = [&](const std::string& body) {
    return svc.handle("POST", "/sessions/" + sid + "/panoramas", {}, body);
  };
  EXPECT_EQ(error_code(post(R"({"range": [0, 9], "base_frame_id": 20})")), "InvalidRange");
  EXPECT_EQ(error_code(post(R"({"range": [9, 0]})")), "InvalidRange");
  EXPECT_EQ(error_code(post(R"({"lowe_ratio": 1.5})")), "InvalidArgument");
  EXPECT_EQ(error_code(post(R"({"alpha": 0})")), "InvalidArgument");
  EXPECT_EQ(error_code(post(R"({"bogus": 1})")), "InvalidArgument");
  EXPECT_EQ(post(R"({"range": [0, 9], "base_frame_id": 20})").status, 400);
  EXPECT_EQ(svc.handle("POST", "/sessions/zzz/panoramas", {}, kSmall).status, 404);
}

TEST(Service, OverlayNeverTouchesPanorama) {
  Service svc;
  const std::string sid = open_fixture(svc);
  const std::string pid = build(svc, sid, kSmall);
  const std::string image = svc.handle("GET", "/panoramas/" + pid + "/image", {}, "").body;
  const std::string report = svc.handle("GET", "/panoramas/" + pid + "/report", {}, "").body;
  const std::size_t builds = svc.builds_run();

  const auto overlay = [&](QueryParams q) { return svc.handle("GET", "/panoramas/" + pid + "/overlay", q, ""); };
  const HttpResponse boxes = overlay({{"style", "boxes"}});
  const HttpResponse cents = overlay({{"style", "centroids"}});
  const HttpResponse arrows = overlay({{"style", "arrows"}, {"labels", "person,cup"}, {"highlight", "3"}});
  ASSERT_EQ(boxes.status, 200);
  ASSERT_EQ(cents.status, 200);
  ASSERT_EQ(arrows.status, 200);
  EXPECT_NE(boxes.body, cents.body);
  EXPECT_EQ(overlay({{"style", "centroids"}}).body, cents.body);
  EXPECT_EQ(overlay({{"min_conf", "1.01"}}).status, 400);
  EXPECT_EQ(overlay({{"style", "sparkles"}}).status, 400);

  EXPECT_EQ(svc.handle("GET", "/panoramas/" + pid + "/image", {}, "").body, image);
  EXPECT_EQ(svc.handle("GET", "/panoramas/" + pid + "/report", {}, "").body, report);
  EXPECT_EQ(svc.builds_run(), builds);

  const std::vector<std::uint8_t> png(boxes.body.begin(), boxes.body.end());
  const Image decoded = decode_png(png);
  const std::vector<std::uint8_t> pano_bytes(image.begin(), image.end());
  const Image pano = decode_png(pano_bytes);
  EXPECT_EQ(decoded.width(), pano.width());
  EXPECT_EQ(decoded.height(), pano.height());
  EXPECT_EQ(decoded.channels(), 4);
}

TEST(Service, TimelineMatchesLibrary) {
  Service svc;
  const std::string sid = open_fixture(svc);
  const Session s = load_session(EGOPANO_FIXTURE_DIR);
  const auto get = [&](const std::string& path, QueryParams q = {}) {
    return svc.handle("GET", "/sessions/" + sid + path, q, "");
  };
  EXPECT_EQ(body_of(get("/timeline/summary", {{"metric", "iou"}})), matrix_to_json(summary_matrix(s, TimelineMetric::IoU)));
  EXPECT_EQ(body_of(get("/timeline/summary")), matrix_to_json(summary_matrix(s, TimelineMetric::Confidence)));
  EXPECT_EQ(body_of(get("/timeline/classification", {{"iou_threshold", "0.3"}})),
            classification_to_json(classify_session(s, 0.3)));
  EXPECT_EQ(body_of(get("/events", {{"missing", "4"}})), events_to_json(poi_events(s, 4)));
  EXPECT_EQ(get("/timeline/summary", {{"metric", "f1"}}).status, 400);
  EXPECT_EQ(get("/timeline/classification", {{"iou_threshold", "abc"}}).status, 400);

  const HttpResponse no_pano = get("/timeline/distance");
  EXPECT_EQ(no_pano.status, 400);
  EXPECT_EQ(error_code(no_pano), "MissingPanorama");

  const std::string pid = build(svc, sid, kSmall);
  const HttpResponse dist = get("/timeline/distance", {{"panorama_id", pid}});
  ASSERT_EQ(dist.status, 200);
  EXPECT_EQ(body_of(dist), body_of(svc.handle("GET", "/panoramas/" + pid + "/distance", {}, "")));
  Json pj = Json::parse(kSmall);
  pj["seed"] = 0;
  const PanoramaParams p = params_from_json(pj, s);
  const auto chains = arrow_chains_by_label(transform_predictions(s, build_panorama(s, p)));
  EXPECT_EQ(body_of(dist)["distance"], distance_to_json(distance_series(chains)));
}

TEST(Service, EmptySessionIouMatrix) {
  synth::SessionSpec spec;
  spec.frames = {synth::make_scene(64, 48, 1), synth::make_scene(64, 48, 2)};
  const auto dir = synth::write_session(spec, synth::temp_dir("svc_empty"));
  Service svc;
  const std::string sid = svc.open_session(dir);
  const Json m = svc.timeline_summary(sid, TimelineMetric::IoU);
  EXPECT_TRUE(m["labels"].empty());
  EXPECT_TRUE(m["values"].empty());
  EXPECT_EQ(m["frame_ids"].size(), 2u);
}

TEST(Service, ConcurrentDistinctSubmits) {
  Service svc;
  const std::string sid = open_fixture(svc);
  const std::vector<std::string> params{R"({"range": [0, 9], "sample_stride": 3, "seed": 1})",
                                        R"({"range": [10, 19], "sample_stride": 3, "seed": 2})"};
  std::vector<std::string> jobs(2);
  std::vector<std::thread> threads;
  for (int i = 0; i < 2; ++i) {
    threads.emplace_back([&, i] { jobs[static_cast<std::size_t>(i)] = svc.submit_panorama(sid, Json::parse(params[static_cast<std::size_t>(i)])); });
  }
  for (auto& t : threads) t.join();
  const JobStatus a = svc.wait(jobs[0]), b = svc.wait(jobs[1]);
  ASSERT_EQ(a.state, JobState::Done);
  ASSERT_EQ(b.state, JobState::Done);
  EXPECT_NE(a.panorama_id, b.panorama_id);

  // Each result equals a build on a fresh service.
  for (int i = 0; i < 2; ++i) {
    Service fresh;
    const std::string fsid = open_fixture(fresh);
    const std::string pid = build(fresh, fsid, params[static_cast<std::size_t>(i)]);
    EXPECT_EQ(pid, i == 0 ? a.panorama_id : b.panorama_id);
    EXPECT_EQ(fresh.panorama_png(pid), svc.panorama_png(pid));
  }
}

TEST(Service, CacheEvictionRebuilds) {
  ServiceConfig cfg;
  cfg.cache_size = 1;
  Service svc(cfg);
  const std::string sid = open_fixture(svc);
  const std::string first = build(svc, sid, kSmall);
  const std::string second = build(svc, sid, R"({"range": [10, 19], "sample_stride": 3})");
  EXPECT_EQ(svc.handle("GET", "/panoramas/" + first + "/image", {}, "").status, 404);
  EXPECT_EQ(svc.handle("GET", "/panoramas/" + second + "/image", {}, "").status, 200);
  const std::size_t builds = svc.builds_run();
  EXPECT_EQ(build(svc, sid, kSmall), first);
  EXPECT_EQ(svc.builds_run(), builds + 1);
}

TEST(Service, JobJsonShape) {
  JobStatus j;
  j.job_id = "job-1";
  j.session_id = "s";
  j.panorama_id = "p";
  j.state = JobState::Running;
  Json out = job_to_json(j);
  EXPECT_TRUE(out["panorama_id"].is_null());
  EXPECT_TRUE(out["error"].is_null());
  j.state = JobState::Failed;
  j.error_code = "AllFramesExcluded";
  out = job_to_json(j);
  EXPECT_EQ(out["error"]["code"], "AllFramesExcluded");
  EXPECT_EQ(http_status_for(ErrorCode::PanoramaNotFound), 404);
  EXPECT_EQ(http_status_for(ErrorCode::NotAllowed), 403);
  EXPECT_EQ(http_status_for(ErrorCode::InvalidRange), 400);
}

TEST(Service, RealSocket) {
  Service svc;
  const int port = 23000 + static_cast<int>(::getpid() % 2000);
  std::thread server([&] { svc.listen("127.0.0.1", port); });
  httplib::Client client("127.0.0.1", port);
  httplib::Result res;
  for (int i = 0; i < 200 && !res; ++i) {
    res = client.Post("/sessions", Json{{"root", EGOPANO_FIXTURE_DIR}}.dump(), "application/json");
    if (!res) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 201);
  const std::string sid = Json::parse(res->body)["session_id"].get<std::string>();
  auto meta = client.Get("/sessions/" + sid + "/meta");
  ASSERT_TRUE(meta);
  EXPECT_EQ(meta->status, 200);
  EXPECT_EQ(Json::parse(meta->body)["frame_count"], 30);
  auto missing = client.Get("/jobs/none");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  svc.stop();
  server.join();
}
