#include "egopano/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <tuple>

#include "egopano/error.hpp"

namespace egopano {

std::string_view to_string(TimelineMetric m) { return m == TimelineMetric::Confidence ? "confidence" : "iou"; }

TimelineMetric parse_timeline_metric(std::string_view s) {
  if (s == "confidence") return TimelineMetric::Confidence;
  if (s == "iou") return TimelineMetric::IoU;
  fail(ErrorCode::InvalidArgument, "metric must be 'confidence' or 'iou'");
}

std::string_view to_string(PoiKind k) {
  switch (k) {
    case PoiKind::NewLabel: return "NewLabel";
    case PoiKind::DuplicateLabel: return "DuplicateLabel";
    case PoiKind::MissingLabel: return "MissingLabel";
  }
  return "NewLabel";
}

double iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

namespace {

// Detections of one stream bucketed by frame position.
std::vector<std::vector<const Detection*>> by_frame(const Session& s, const std::vector<Detection>& stream) {
  std::vector<std::vector<const Detection*>> out(s.frames.size());
  for (const auto& d : stream) {
    const int idx = s.frame_index(d.matched_frame_id);
    if (idx >= 0) out[static_cast<std::size_t>(idx)].push_back(&d);
  }
  return out;
}

std::vector<Detection> copy_of(const std::vector<const Detection*>& v) {
  std::vector<Detection> out;
  out.reserve(v.size());
  for (const auto* d : v) out.push_back(*d);
  return out;
}

}  // namespace

std::vector<std::string> labels_by_first_appearance(const Session& session) {
  std::map<std::string, std::pair<double, int>> first;  // label -> (time, stream order)
  auto visit = [&](const std::vector<Detection>& stream, int stream_rank) {
    for (const auto& d : stream) {
      auto key = std::pair{d.timestamp, stream_rank};
      auto [it, inserted] = first.emplace(d.label, key);
      if (!inserted && key < it->second) it->second = key;
    }
  };
  visit(session.predictions, 0);
  visit(session.ground_truth, 1);
  std::vector<std::pair<std::pair<double, int>, std::string>> ordered;
  for (const auto& [label, key] : first) ordered.push_back({key, label});
  std::sort(ordered.begin(), ordered.end());
  std::vector<std::string> labels;
  for (const auto& [key, label] : ordered) labels.push_back(label);
  for (const auto& label : session.vocabulary) {
    if (!first.count(label)) labels.push_back(label);
  }
  return labels;
}

TimelineMatrix summary_matrix(const Session& session, TimelineMetric metric) {
  TimelineMatrix m;
  m.metric = metric;
  m.labels = labels_by_first_appearance(session);
  for (const auto& f : session.frames) m.frame_ids.push_back(f.id);
  m.values.assign(m.labels.size() * m.frame_ids.size(), std::nullopt);

  std::map<std::string, std::size_t> row;
  for (std::size_t i = 0; i < m.labels.size(); ++i) row[m.labels[i]] = i;
  const auto preds = by_frame(session, session.predictions);
  const auto truths = by_frame(session, session.ground_truth);

  for (std::size_t col = 0; col < m.frame_ids.size(); ++col) {
    auto cell = [&](const std::string& label) -> std::optional<double>& {
      return m.values[row.at(label) * m.frame_ids.size() + col];
    };
    if (metric == TimelineMetric::Confidence) {
      for (const auto* p : preds[col]) {
        auto& c = cell(p->label);
        c = c ? std::max(*c, p->confidence) : p->confidence;
      }
    } else {
      for (const auto* p : preds[col]) {
        for (const auto* t : truths[col]) {
          if (t->label != p->label) continue;
          auto& c = cell(p->label);
          const double v = iou(p->bbox, t->bbox);
          c = c ? std::max(*c, v) : v;
        }
      }
    }
  }
  return m;
}

ClassificationCounts classify_detections(int frame_id, std::span<const Detection> predictions,
                                         std::span<const Detection> truths, double iou_threshold,
                                         std::span<const std::string> vocabulary) {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) {
    fail(ErrorCode::InvalidArgument, "IoU threshold must lie in (0, 1)");
  }
  struct Candidate {
    double overlap;
    std::size_t pred, truth;
  };
  std::vector<Candidate> candidates;
  for (std::size_t p = 0; p < predictions.size(); ++p) {
    for (std::size_t t = 0; t < truths.size(); ++t) {
      if (predictions[p].label != truths[t].label) continue;
      const double v = iou(predictions[p].bbox, truths[t].bbox);
      if (v >= iou_threshold) candidates.push_back({v, p, t});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.overlap != b.overlap) return a.overlap > b.overlap;
    if (a.pred != b.pred) return a.pred < b.pred;
    return a.truth < b.truth;
  });
  std::vector<bool> pred_used(predictions.size(), false), truth_used(truths.size(), false);
  ClassificationCounts counts;
  counts.frame_id = frame_id;
  for (const auto& c : candidates) {
    if (pred_used[c.pred] || truth_used[c.truth]) continue;
    pred_used[c.pred] = truth_used[c.truth] = true;
    ++counts.tp;
  }
  counts.fp = static_cast<int>(predictions.size()) - counts.tp;
  counts.fn = static_cast<int>(truths.size()) - counts.tp;

  std::set<std::string> present;
  for (const auto& d : predictions) present.insert(d.label);
  for (const auto& d : truths) present.insert(d.label);
  int tn = 0;
  for (const auto& label : vocabulary) tn += present.count(label) ? 0 : 1;
  counts.tn = tn;
  return counts;
}

std::vector<ClassificationCounts> classify_session(const Session& session, double iou_threshold) {
  const auto preds = by_frame(session, session.predictions);
  const auto truths = by_frame(session, session.ground_truth);
  std::vector<ClassificationCounts> out;
  out.reserve(session.frames.size());
  for (std::size_t i = 0; i < session.frames.size(); ++i) {
    const auto p = copy_of(preds[i]);
    const auto t = copy_of(truths[i]);
    out.push_back(classify_detections(session.frames[i].id, p, t, iou_threshold, session.vocabulary));
  }
  return out;
}

std::vector<ArrowChain> arrow_chains(std::span<const TransformedDetection> detections) {
  std::vector<ArrowChain> chains;
  std::size_t i = 0;
  while (i < detections.size()) {
    std::size_t j = i;
    const int frame = detections[i].detection.matched_frame_id;
    while (j < detections.size() && detections[j].detection.matched_frame_id == frame) ++j;
    const std::size_t m = j - i;
    const std::size_t existing = chains.size();

    struct Pairing {
      double dist;
      std::size_t instance, chain;
    };
    std::vector<Pairing> pairings;
    pairings.reserve(m * existing);
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t c = 0; c < existing; ++c) {
        pairings.push_back({distance(detections[i + a].centroid, chains[c].nodes.back().centroid), a, c});
      }
    }
    std::sort(pairings.begin(), pairings.end(), [](const Pairing& x, const Pairing& y) {
      return std::tie(x.dist, x.instance, x.chain) < std::tie(y.dist, y.instance, y.chain);
    });
    std::vector<bool> instance_done(m, false), chain_done(existing, false);
    for (const auto& p : pairings) {
      if (instance_done[p.instance] || chain_done[p.chain]) continue;
      instance_done[p.instance] = chain_done[p.chain] = true;
      chains[p.chain].nodes.push_back({frame, detections[i + p.instance].centroid});
    }
    for (std::size_t a = 0; a < m; ++a) {
      if (instance_done[a]) continue;
      ArrowChain chain;
      chain.label = detections[i + a].detection.label;
      chain.chain_id = static_cast<int>(chains.size());
      chain.nodes.push_back({frame, detections[i + a].centroid});
      chains.push_back(std::move(chain));
    }
    i = j;
  }
  return chains;
}

std::vector<ArrowChain> arrow_chains_by_label(std::span<const TransformedDetection> detections) {
  std::map<std::string, std::vector<TransformedDetection>> grouped;
  for (const auto& d : detections) grouped[d.detection.label].push_back(d);
  std::vector<ArrowChain> out;
  for (auto& [label, group] : grouped) {
    std::stable_sort(group.begin(), group.end(), [](const TransformedDetection& a, const TransformedDetection& b) {
      return a.detection.timestamp < b.detection.timestamp;
    });
    auto chains = arrow_chains(group);
    out.insert(out.end(), std::make_move_iterator(chains.begin()), std::make_move_iterator(chains.end()));
  }
  return out;
}

std::vector<DistanceSeries> distance_series(std::span<const ArrowChain> chains) {
  std::vector<DistanceSeries> out;
  std::map<std::string, std::size_t> index;
  for (const auto& chain : chains) {
    auto [it, inserted] = index.emplace(chain.label, out.size());
    if (inserted) out.push_back({chain.label, {}});
    auto& series = out[it->second];
    for (std::size_t n = 1; n < chain.nodes.size(); ++n) {
      series.steps.push_back({chain.chain_id, chain.nodes[n - 1].frame_id, chain.nodes[n].frame_id,
                              distance(chain.nodes[n - 1].centroid, chain.nodes[n].centroid)});
    }
  }
  return out;
}

std::vector<PoiEvent> poi_events(const Session& session, int missing_threshold) {
  if (missing_threshold < 1) fail(ErrorCode::InvalidArgument, "missing threshold must be at least 1");
  std::set<std::string> labels;
  for (const auto& d : session.predictions) labels.insert(d.label);
  const auto preds = by_frame(session, session.predictions);

  struct State {
    bool seen = false;
    bool armed = false;
    int absent = 0;
  };
  std::map<std::string, State> state;
  std::vector<PoiEvent> events;
  for (std::size_t f = 0; f < session.frames.size(); ++f) {
    const int frame_id = session.frames[f].id;
    std::map<std::string, int> counts;
    for (const auto* d : preds[f]) ++counts[d->label];
    std::vector<PoiEvent> frame_events;
    for (const auto& label : labels) {
      State& st = state[label];
      const int count = counts.count(label) ? counts[label] : 0;
      if (count > 0) {
        if (!st.seen) frame_events.push_back({PoiKind::NewLabel, frame_id, label, "first detection"});
        if (count >= 2) frame_events.push_back({PoiKind::DuplicateLabel, frame_id, label, std::to_string(count)});
        st.seen = true;
        st.armed = true;
        st.absent = 0;
      } else if (st.seen) {
        ++st.absent;
        if (st.armed && st.absent == missing_threshold) {
          frame_events.push_back(
              {PoiKind::MissingLabel, frame_id, label, "absent for " + std::to_string(missing_threshold) + " frames"});
          st.armed = false;
        }
      }
    }
    std::stable_sort(frame_events.begin(), frame_events.end(), [](const PoiEvent& a, const PoiEvent& b) {
      return std::tie(a.kind, a.label) < std::tie(b.kind, b.label);
    });
    events.insert(events.end(), frame_events.begin(), frame_events.end());
  }
  return events;
}

}  // namespace egopano
