#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "egopano/analytics.hpp"
#include "egopano/error.hpp"
#include "egopano/export.hpp"
#include "egopano/geometry.hpp"
#include "egopano/service.hpp"

namespace py = pybind11;
using namespace egopano;

namespace {

// JSON crosses the boundary as text; the Python side decodes it.
std::string stitch(const std::filesystem::path& dir, const std::string& params_json, py::bytes& png) {
  const Session session = load_session(dir);
  const Json raw = params_json.empty() ? Json::object() : Json::parse(params_json);
  const PanoramaParams params = params_from_json(raw, session);
  const std::string sid = session_fingerprint(session);
  Panorama pano;
  {
    py::gil_scoped_release release;
    pano = build_panorama(session, params);
  }
  const auto bytes = encode_png(pano.image);
  png = py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  return dump(panorama_to_json(pano, params, panorama_id(sid, params), sid));
}

std::string analytics(const std::filesystem::path& dir, const std::string& panorama_json, double iou_threshold,
                      int missing_frames) {
  const Session session = load_session(dir);
  std::optional<PanoramaDocument> doc;
  if (!panorama_json.empty()) doc = panorama_from_json(Json::parse(panorama_json));
  return dump(analytics_to_json(session, session_fingerprint(session), {iou_threshold, missing_frames},
                                doc ? &*doc : nullptr));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  static py::exception<Error> error(m, "EgopanoError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetObject(error.ptr(), py::make_tuple(std::string(to_string(e.code())), e.what()).ptr());
    } catch (const nlohmann::json::exception& e) {
      PyErr_SetObject(error.ptr(), py::make_tuple("MalformedRecord", e.what()).ptr());
    }
  });

  m.def("session_meta", [](const std::filesystem::path& dir) {
    const Session s = load_session(dir);
    return dump(session_meta_json(s, session_fingerprint(s)));
  });
  m.def("stitch", [](const std::filesystem::path& dir, const std::string& params_json) {
    py::bytes png;
    std::string report = stitch(dir, params_json, png);
    return py::make_tuple(png, report);
  });
  m.def("analytics", &analytics, py::arg("session_dir"), py::arg("panorama_json") = "",
        py::arg("iou_threshold") = kDefaultIouThreshold, py::arg("missing_frames") = kDefaultMissingFrames);

  m.def("svd3", [](const Mat3& a) {
    const SVD3 d = svd3(a);
    return py::make_tuple(d.U, d.sigma, d.V);
  });
  m.def("iou", [](std::array<double, 4> a, std::array<double, 4> b) {
    return iou({a[0], a[1], a[2], a[3]}, {b[0], b[1], b[2], b[3]});
  });

  py::class_<Service>(m, "Service")
      .def(py::init([](std::vector<std::filesystem::path> roots, std::size_t cache_size, std::uint64_t seed) {
             return std::make_unique<Service>(ServiceConfig{std::move(roots), cache_size, seed});
           }),
           py::arg("allowed_roots") = std::vector<std::filesystem::path>{}, py::arg("cache_size") = 16,
           py::arg("seed") = 0)
      .def("open_session", &Service::open_session)
      .def("builds_run", &Service::builds_run)
      .def(
          "request",
          [](Service& svc, const std::string& method, const std::string& path,
             const std::map<std::string, std::string>& query, const std::string& body) {
            HttpResponse r;
            {
              py::gil_scoped_release release;
              r = svc.handle(method, path, QueryParams(query.begin(), query.end()), body);
            }
            return py::make_tuple(r.status, r.content_type, py::bytes(r.body));
          },
          py::arg("method"), py::arg("path"), py::arg("query") = std::map<std::string, std::string>{},
          py::arg("body") = "");
}
