#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include <json.hpp>

#include "egopano/analytics.hpp"
#include "egopano/compositor.hpp"
#include "egopano/ingest.hpp"

namespace egopano {

using Json = nlohmann::ordered_json;

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 14695981039346656037ULL);
std::string hex64(std::uint64_t v);

// Hash of the session metadata plus the bytes of every frame image.
std::string session_fingerprint(const Session& session);

Json params_to_json(const PanoramaParams& p);
// Missing keys take defaults; a missing range spans the whole session.
// Unknown keys and ill-typed values raise InvalidArgument.
PanoramaParams params_from_json(const Json& j, const Session& session);
PanoramaParams default_params(const Session& session);

std::string panorama_id(const std::string& session_fingerprint, const PanoramaParams& params);

Json session_meta_json(const Session& session, const std::string& session_id);

Json panorama_to_json(const Panorama& pano, const PanoramaParams& params, const std::string& panorama_id,
                      const std::string& session_id);

// Geometry and placements of a panorama.json document; the raster is left empty.
struct PanoramaDocument {
  std::string panorama_id;
  std::string session_id;
  Panorama panorama;
};

PanoramaDocument panorama_from_json(const Json& j);

Json matrix_to_json(const TimelineMatrix& m);
Json classification_to_json(std::span<const ClassificationCounts> counts);
Json events_to_json(std::span<const PoiEvent> events);
Json chains_to_json(std::span<const ArrowChain> chains);
Json distance_to_json(std::span<const DistanceSeries> series);

struct AnalyticsOptions {
  double iou_threshold = kDefaultIouThreshold;
  int missing_frames = kDefaultMissingFrames;
};

Json analytics_to_json(const Session& session, const std::string& session_id, const AnalyticsOptions& options,
                       const PanoramaDocument* panorama);

// Two-space indented dump with a trailing newline.
std::string dump(const Json& j);

}  // namespace egopano
