#include <gtest/gtest.h>

#include <Eigen/LU>
#include <algorithm>
#include <map>
#include <set>
#include <tuple>

#include "egopano/analytics.hpp"
#include "egopano/error.hpp"
#include "random_geometry.hpp"
#include "synth.hpp"

using namespace egopano;

namespace {

Detection det(int frame, std::string label, BBox box, double conf = 0.9,
              DetectionSource src = DetectionSource::Prediction) {
  Detection d;
  d.timestamp = frame;
  d.label = std::move(label);
  d.bbox = box;
  d.confidence = conf;
  d.source = src;
  d.matched_frame_id = frame;
  return d;
}

Session empty_session(int frames) {
  Session s;
  for (int i = 0; i < frames; ++i) s.frames.push_back({i, static_cast<double>(i), 100, 100, ""});
  return s;
}

BBox random_box(Rng& rng, double extent = 50) {
  const double x = uniform_real(rng, 0, extent), y = uniform_real(rng, 0, extent);
  return {x, y, x + uniform_real(rng, 1, 30), y + uniform_real(rng, 1, 30)};
}

Session random_session(Rng& rng, int frames, int labels, int preds, int truths) {
  Session s = empty_session(frames);
  const std::vector<std::string> names{"mug", "knife", "bowl", "pan", "spoon", "plate"};
  for (int i = 0; i < preds; ++i) {
    s.predictions.push_back(det(static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(frames))),
                                names[uniform_index(rng, static_cast<std::uint64_t>(labels))], random_box(rng),
                                uniform01(rng)));
  }
  for (int i = 0; i < truths; ++i) {
    s.ground_truth.push_back(det(static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(frames))),
                                 names[uniform_index(rng, static_cast<std::uint64_t>(labels))], random_box(rng), 1.0,
                                 DetectionSource::GroundTruth));
  }
  auto by_time = [](const Detection& a, const Detection& b) { return a.timestamp < b.timestamp; };
  std::stable_sort(s.predictions.begin(), s.predictions.end(), by_time);
  std::stable_sort(s.ground_truth.begin(), s.ground_truth.end(), by_time);
  s.vocabulary = session_vocabulary(s);
  s.vocabulary.push_back("zzz-unseen");
  return s;
}

TransformedDetection tdet(int frame, const std::string& label, Vec2 c) {
  TransformedDetection t;
  t.detection = det(frame, label, {c.x - 1, c.y - 1, c.x + 1, c.y + 1});
  t.centroid = c;
  t.quad = t.detection.bbox.corners();
  return t;
}

}  // namespace

TEST(Iou, Examples) {
  EXPECT_EQ(iou({0, 0, 2, 2}, {0, 0, 2, 2}), 1.0);
  EXPECT_EQ(iou({0, 0, 2, 2}, {5, 5, 6, 6}), 0.0);
  EXPECT_EQ(iou({0, 0, 2, 2}, {2, 0, 4, 2}), 0.0);
  EXPECT_NEAR(iou({0, 0, 2, 2}, {1, 1, 3, 3}), 1.0 / 7.0, 1e-15);
  EXPECT_NEAR(iou({0, 0, 2, 2}, {1, 1, 3, 3}), 0.142857, 1e-6);
}

TEST(Iou, Properties) {
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const BBox a = random_box(rng), b = random_box(rng);
    const double v = iou(a, b);
    EXPECT_EQ(v, iou(b, a));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_EQ(iou(a, a), 1.0);
    const bool disjoint = a.x2 <= b.x1 || b.x2 <= a.x1 || a.y2 <= b.y1 || b.y2 <= a.y1;
    EXPECT_EQ(v == 0.0, disjoint);
    if (!(a == b)) EXPECT_LT(v, 1.0);
  }
}

TEST(SummaryMatrix, Examples) {
  Session s = empty_session(3);
  s.predictions = {det(0, "mug", {0, 0, 10, 10}, 0.9)};
  // Truth box shares 6 of 10 columns: IoU 0.6.
  s.ground_truth = {det(0, "mug", {0, 0, 10, 6}, 1.0, DetectionSource::GroundTruth)};
  s.vocabulary = {"mug"};
  const TimelineMatrix c = summary_matrix(s, TimelineMetric::Confidence);
  const TimelineMatrix u = summary_matrix(s, TimelineMetric::IoU);
  ASSERT_EQ(c.labels, std::vector<std::string>{"mug"});
  EXPECT_EQ(c.at(0, 0), 0.9);
  EXPECT_NEAR(*u.at(0, 0), 0.6, 1e-12);
  for (int col = 1; col < 3; ++col) {
    EXPECT_FALSE(c.at(0, static_cast<std::size_t>(col)).has_value());
    EXPECT_FALSE(u.at(0, static_cast<std::size_t>(col)).has_value());
  }
  const TimelineMatrix e = summary_matrix(empty_session(4), TimelineMetric::IoU);
  EXPECT_TRUE(e.labels.empty());
  EXPECT_EQ(e.frame_ids.size(), 4u);
  EXPECT_TRUE(e.values.empty());
}

TEST(SummaryMatrix, BruteForceOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const Session s = random_session(rng, 1 + static_cast<int>(uniform_index(rng, 8)), 4,
                                     static_cast<int>(uniform_index(rng, 25)), static_cast<int>(uniform_index(rng, 25)));
    for (auto metric : {TimelineMetric::Confidence, TimelineMetric::IoU}) {
      const TimelineMatrix m = summary_matrix(s, metric);
      ASSERT_EQ(m.values.size(), m.labels.size() * m.frame_ids.size());
      for (std::size_t r = 0; r < m.labels.size(); ++r) {
        for (std::size_t c = 0; c < m.frame_ids.size(); ++c) {
          std::optional<double> expected;
          for (const auto& p : s.predictions) {
            if (p.label != m.labels[r] || p.matched_frame_id != m.frame_ids[c]) continue;
            if (metric == TimelineMetric::Confidence) {
              expected = std::max(expected.value_or(-1.0), p.confidence);
              continue;
            }
            for (const auto& t : s.ground_truth) {
              if (t.label == p.label && t.matched_frame_id == p.matched_frame_id) {
                expected = std::max(expected.value_or(-1.0), iou(p.bbox, t.bbox));
              }
            }
          }
          EXPECT_EQ(m.at(r, c), expected);
          if (expected) {
            EXPECT_GE(*expected, 0.0);
            EXPECT_LE(*expected, 1.0);
          }
        }
      }
      // Rows by first appearance over both streams, unseen vocabulary last.
      std::vector<std::string> order;
      // Same-time ties: predictions before truths, then alphabetical.
      std::vector<std::tuple<double, int, std::string>> all;
      for (const auto& d : s.predictions) all.emplace_back(d.timestamp, 0, d.label);
      for (const auto& d : s.ground_truth) all.emplace_back(d.timestamp, 1, d.label);
      std::sort(all.begin(), all.end());
      for (const auto& [t, rank, label] : all) {
        if (std::find(order.begin(), order.end(), label) == order.end()) order.push_back(label);
      }
      for (const auto& v : s.vocabulary) {
        if (std::find(order.begin(), order.end(), v) == order.end()) order.push_back(v);
      }
      EXPECT_EQ(m.labels, order);
    }
  }
}

TEST(Classify, Examples) {
  const std::vector<std::string> vocab{"cup", "knife", "mug"};
  const std::vector<Detection> p1{det(0, "mug", {0, 0, 4, 4})};
  const std::vector<Detection> t1{det(0, "mug", {0, 0, 4, 4})};
  EXPECT_EQ(classify_detections(0, p1, t1, 0.5, vocab), (ClassificationCounts{0, 1, 0, 0, 2}));

  const std::vector<Detection> t2{};
  EXPECT_EQ(classify_detections(0, p1, t2, 0.5, vocab), (ClassificationCounts{0, 0, 1, 0, 2}));

  // Both predictions clear the threshold; enumerating both assignments, the
  // higher-IoU one (0.81 vs 0.64) wins.
  const std::vector<Detection> p3{det(0, "mug", {0, 0, 10, 8}), det(0, "mug", {0, 0, 10, 9})};
  const std::vector<Detection> t3{det(0, "mug", {0, 0, 10, 10})};
  EXPECT_NEAR(iou(p3[0].bbox, t3[0].bbox), 0.8, 1e-12);
  EXPECT_NEAR(iou(p3[1].bbox, t3[0].bbox), 0.9, 1e-12);
  EXPECT_EQ(classify_detections(0, p3, t3, 0.5, vocab), (ClassificationCounts{0, 1, 1, 0, 2}));

  const std::vector<Detection> wrong_label{det(0, "cup", {0, 0, 4, 4})};
  EXPECT_EQ(classify_detections(0, wrong_label, t1, 0.5, vocab), (ClassificationCounts{0, 0, 1, 1, 1}));

  EXPECT_THROW(classify_detections(0, p1, t1, 1.0, vocab), Error);
  EXPECT_THROW(classify_detections(0, p1, t1, 0.0, vocab), Error);
}

TEST(Classify, GreedyChoosesMaxIouPairs) {
  // Greedy takes the 0.9 pair first, leaving pred1 to truth1.
  const std::vector<Detection> preds{det(0, "a", {0, 0, 10, 9}), det(0, "a", {0, 0, 10, 6})};
  const std::vector<Detection> truths{det(0, "a", {0, 0, 10, 10}), det(0, "a", {0, 0, 10, 7.4})};
  const std::vector<std::string> vocab{"a"};
  // pred0: 0.9 vs truth0, 0.822 vs truth1; pred1: 0.6 vs truth0, 0.81 vs truth1.
  const ClassificationCounts c = classify_detections(0, preds, truths, 0.5, vocab);
  EXPECT_EQ(c.tp, 2);
  const ClassificationCounts high = classify_detections(0, preds, truths, 0.85, vocab);
  EXPECT_EQ(high.tp, 1);
}

TEST(Classify, InvariantsAndMonotoneThreshold) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const Session s = random_session(rng, 5, 5, 40, 40);
    int prev_tp = std::numeric_limits<int>::max();
    std::vector<int> tps;
    for (double th : {0.05, 0.2, 0.4, 0.5, 0.7, 0.9, 0.99}) {
      const auto counts = classify_session(s, th);
      ASSERT_EQ(counts.size(), 5u);
      int tp_total = 0;
      for (std::size_t f = 0; f < counts.size(); ++f) {
        const auto& c = counts[f];
        int np = 0, nt = 0;
        std::set<std::string> present;
        for (const auto& d : s.predictions) {
          if (d.matched_frame_id == c.frame_id) ++np, present.insert(d.label);
        }
        for (const auto& d : s.ground_truth) {
          if (d.matched_frame_id == c.frame_id) ++nt, present.insert(d.label);
        }
        EXPECT_EQ(c.tp + c.fn, nt);
        EXPECT_EQ(c.tp + c.fp, np);
        EXPECT_EQ(c.tn, static_cast<int>(s.vocabulary.size() - present.size()));
        EXPECT_GE(std::min({c.tp, c.fp, c.fn, c.tn}), 0);
        tp_total += c.tp;
      }
      EXPECT_LE(tp_total, prev_tp);
      prev_tp = tp_total;
    }
  }
}

TEST(ArrowChains, Examples) {
  std::vector<TransformedDetection> one;
  for (int f = 0; f < 6; ++f) one.push_back(tdet(f, "cup", {f * 10.0, 5}));
  const auto single = arrow_chains(one);
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(single[0].nodes.size(), 6u);

  const std::vector<TransformedDetection> three{tdet(0, "cup", {0, 0}), tdet(0, "cup", {50, 0}), tdet(0, "cup", {0, 50})};
  EXPECT_EQ(arrow_chains(three).size(), 3u);
  EXPECT_TRUE(arrow_chains({}).empty());
}

TEST(ArrowChains, TwoParallelTracks) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<TransformedDetection> dets;
    Vec2 a{0, 0}, b{0, 100 + uniform_real(rng, 0, 50)};
    std::vector<Vec2> truth_a, truth_b;
    for (int f = 0; f < 30; ++f) {
      const Vec2 step{uniform_real(rng, 0, 7), uniform_real(rng, -7, 7)};
      a = a + step;
      b = b + step;
      const bool a_first = uniform01(rng) < 0.5;
      const bool drop = f > 0 && uniform01(rng) < 0.2;
      if (a_first) dets.push_back(tdet(f, "cup", a)), truth_a.push_back(a);
      if (!drop) dets.push_back(tdet(f, "cup", b)), truth_b.push_back(b);
      if (!a_first) dets.push_back(tdet(f, "cup", a)), truth_a.push_back(a);
    }
    const auto chains = arrow_chains(dets);
    ASSERT_EQ(chains.size(), 2u) << trial;
    for (const auto& chain : chains) {
      std::vector<Vec2> pts;
      for (const auto& n : chain.nodes) pts.push_back(n.centroid);
      EXPECT_TRUE(pts == truth_a || pts == truth_b);
    }
  }
}

TEST(ArrowChains, PartitionAndTimeOrder) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<TransformedDetection> dets;
    for (int f = 0; f < 20; ++f) {
      const int m = static_cast<int>(uniform_index(rng, 4));
      for (int i = 0; i < m; ++i) {
        dets.push_back(tdet(f, i % 2 ? "cup" : "mug", {uniform_real(rng, 0, 300), uniform_real(rng, 0, 300)}));
      }
    }
    const auto chains = arrow_chains_by_label(dets);
    std::size_t total = 0;
    std::map<std::string, std::size_t> per_label;
    for (const auto& c : chains) {
      total += c.nodes.size();
      per_label[c.label] += c.nodes.size();
      for (std::size_t n = 1; n < c.nodes.size(); ++n) EXPECT_LT(c.nodes[n - 1].frame_id, c.nodes[n].frame_id);
    }
    EXPECT_EQ(total, dets.size());
    for (const auto& [label, count] : per_label) {
      EXPECT_EQ(count, static_cast<std::size_t>(std::count_if(dets.begin(), dets.end(), [&](const auto& d) {
                  return d.detection.label == label;
                })));
    }
  }
}

TEST(DistanceSeries, Examples) {
  const std::vector<TransformedDetection> still{tdet(0, "cup", {4, 4}), tdet(1, "cup", {4, 4}), tdet(2, "cup", {4, 4})};
  const auto chains = arrow_chains(still);
  const auto s = distance_series(chains);
  ASSERT_EQ(s.size(), 1u);
  ASSERT_EQ(s[0].steps.size(), 2u);
  for (const auto& st : s[0].steps) EXPECT_EQ(st.distance, 0.0);

  const std::vector<TransformedDetection> step{tdet(3, "cup", {0, 0}), tdet(5, "cup", {3, 4})};
  const auto s2 = distance_series(arrow_chains(step));
  ASSERT_EQ(s2[0].steps.size(), 1u);
  EXPECT_EQ(s2[0].steps[0].distance, 5.0);
  EXPECT_EQ(s2[0].steps[0].from_frame_id, 3);
  EXPECT_EQ(s2[0].steps[0].to_frame_id, 5);
}

TEST(DistanceSeries, KnownPathIdentityAndProjective) {
  Rng rng(6);
  std::vector<Vec2> path{{200, 150}};
  for (int f = 1; f < 25; ++f) path.push_back(path.back() + Vec2{uniform_real(rng, -12, 12), uniform_real(rng, -12, 12)});
  for (bool projective : {false, true}) {
    std::vector<TransformedDetection> dets;
    for (int f = 0; f < 25; ++f) {
      Placement pl;
      pl.frame_id = f;
      pl.homography = projective ? Homography(synth::random_homography(rng, 1e-4)) : Homography::identity();
      // A small box in frame space whose image lands on the path point.
      const Vec2 src = project_point(pl.homography->inverse(), path[static_cast<std::size_t>(f)]);
      Detection d = det(f, "cup", {src.x - 1.5, src.y - 1.5, src.x + 1.5, src.y + 1.5});
      dets.push_back(transform_detection(d, pl, {0, 0}));
    }
    const auto s = distance_series(arrow_chains(dets));
    ASSERT_EQ(s.size(), 1u);
    ASSERT_EQ(s[0].steps.size(), 24u);
    for (std::size_t i = 0; i < 24; ++i) {
      EXPECT_NEAR(s[0].steps[i].distance, distance(path[i], path[i + 1]), projective ? 2.0 : 1e-6);
    }
  }
}

TEST(DistanceSeries, TranslationInvariant) {
  Rng rng(7);
  std::vector<TransformedDetection> a, b;
  const Vec2 off{uniform_real(rng, -500, 500), uniform_real(rng, -500, 500)};
  for (int f = 0; f < 40; ++f) {
    for (int i = 0; i < 2; ++i) {
      const Vec2 c{uniform_real(rng, 0, 200), uniform_real(rng, 0, 200)};
      a.push_back(tdet(f, "cup", c));
      b.push_back(tdet(f, "cup", c + off));
    }
  }
  const auto sa = distance_series(arrow_chains(a)), sb = distance_series(arrow_chains(b));
  ASSERT_EQ(sa[0].steps.size(), sb[0].steps.size());
  for (std::size_t i = 0; i < sa[0].steps.size(); ++i) {
    EXPECT_GE(sa[0].steps[i].distance, 0.0);
    EXPECT_NEAR(sa[0].steps[i].distance, sb[0].steps[i].distance, 1e-9);
  }
}

TEST(PoiEvents, Examples) {
  Session s = empty_session(40);
  s.predictions = {det(12, "mug", {0, 0, 1, 1})};
  const auto e = poi_events(s, 15);
  ASSERT_EQ(e.size(), 2u);
  EXPECT_EQ(e[0], (PoiEvent{PoiKind::NewLabel, 12, "mug", "first detection"}));
  EXPECT_EQ(e[1].kind, PoiKind::MissingLabel);
  EXPECT_EQ(e[1].frame_id, 27);

  Session d = empty_session(35);
  d.predictions = {det(30, "cup", {0, 0, 1, 1}), det(30, "cup", {2, 2, 3, 3})};
  const auto de = poi_events(d, 15);
  ASSERT_EQ(de.size(), 2u);
  EXPECT_EQ(de[1], (PoiEvent{PoiKind::DuplicateLabel, 30, "cup", "2"}));

  EXPECT_THROW(poi_events(s, 0), Error);
}

TEST(PoiEvents, ReplayOracle) {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const int frames = 1 + static_cast<int>(uniform_index(rng, 60));
    const int threshold = 1 + static_cast<int>(uniform_index(rng, 8));
    Session s = empty_session(frames);
    const std::vector<std::string> labels{"a", "b", "c"};
    for (int f = 0; f < frames; ++f) {
      for (const auto& l : labels) {
        const double u = uniform01(rng);
        const int count = u < 0.6 ? 0 : (u < 0.9 ? 1 : 2 + static_cast<int>(uniform_index(rng, 2)));
        for (int i = 0; i < count; ++i) s.predictions.push_back(det(f, l, {0, 0, 1, 1}));
      }
    }
    // Independent replay: per label, walk the frames and count.
    std::vector<PoiEvent> expected;
    for (int f = 0; f < frames; ++f) {
      for (const auto& l : labels) {
        int count = 0;
        bool seen_before = false;
        for (const auto& d : s.predictions) {
          if (d.label != l) continue;
          count += d.matched_frame_id == f;
          seen_before = seen_before || d.matched_frame_id < f;
        }
        if (count > 0 && !seen_before) expected.push_back({PoiKind::NewLabel, f, l, "first detection"});
        if (count >= 2) expected.push_back({PoiKind::DuplicateLabel, f, l, std::to_string(count)});
        if (count == 0 && f >= threshold) {
          // Missing when frames f-threshold+1..f are empty and f-threshold had the label.
          bool streak = true;
          for (int g = f - threshold + 1; g <= f; ++g) {
            for (const auto& d : s.predictions) streak = streak && !(d.label == l && d.matched_frame_id == g);
          }
          bool anchor = false;
          for (const auto& d : s.predictions) anchor = anchor || (d.label == l && d.matched_frame_id == f - threshold);
          if (streak && anchor) {
            expected.push_back({PoiKind::MissingLabel, f, l, "absent for " + std::to_string(threshold) + " frames"});
          }
        }
      }
    }
    std::stable_sort(expected.begin(), expected.end(), [](const PoiEvent& x, const PoiEvent& y) {
      return std::tie(x.frame_id, x.kind, x.label) < std::tie(y.frame_id, y.kind, y.label);
    });
    EXPECT_EQ(poi_events(s, threshold), expected) << "trial " << trial;
  }
}

TEST(PoiEvents, SessionLevelInvariants) {
  Rng rng(9);
  const Session s = random_session(rng, 50, 5, 80, 0);
  const auto events = poi_events(s, 4);
  std::map<std::string, int> new_frame;
  for (const auto& e : events) {
    if (e.kind == PoiKind::NewLabel) {
      EXPECT_FALSE(new_frame.count(e.label));
      new_frame[e.label] = e.frame_id;
    }
    if (e.kind == PoiKind::MissingLabel) {
      ASSERT_TRUE(new_frame.count(e.label));
      EXPECT_GT(e.frame_id, new_frame[e.label]);
    }
  }
  std::set<std::string> labels;
  for (const auto& d : s.predictions) labels.insert(d.label);
  EXPECT_EQ(new_frame.size(), labels.size());
}
