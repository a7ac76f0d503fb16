// Python bindings. Images cross the boundary as uint8 numpy arrays shaped
// (H, W) or (H, W, C); masks as bool (H, W); probability maps as float (H, W).

#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>

#include "amdprep/dataset.hpp"
#include "amdprep/error.hpp"
#include "amdprep/evaluation.hpp"
#include "amdprep/geometry.hpp"
#include "amdprep/pipeline.hpp"
#include "amdprep/png_io.hpp"
#include "amdprep/raster.hpp"
#include "amdprep/remote_store.hpp"
#include "amdprep/sync_service.hpp"

namespace py = pybind11;
using namespace amdprep;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using BoolArray = py::array_t<bool, py::array::c_style | py::array::forcecast>;

ImageBuffer to_image(const U8Array& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw Error(Errc::InvalidImage, "image must have shape (H, W) or (H, W, C)");
  const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  if (c != 1 && c != 3) throw Error(Errc::InvalidImage, "image must have 1 or 3 channels");
  return ImageBuffer(w, h, c, std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
}

U8Array from_image(const ImageBuffer& img) {
  std::vector<py::ssize_t> shape{img.height(), img.width()};
  if (img.channels() != 1) shape.push_back(img.channels());
  U8Array out(shape);
  std::copy(img.data().begin(), img.data().end(), out.mutable_data());
  return out;
}

BinaryMask to_mask(const BoolArray& a) {
  if (a.ndim() != 2) throw Error(Errc::InvalidImage, "mask must have shape (H, W)");
  std::vector<std::uint8_t> bits(a.data(), a.data() + a.size());
  return BinaryMask(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), std::move(bits));
}

BoolArray from_mask(const BinaryMask& m) {
  BoolArray out({m.height(), m.width()});
  std::transform(m.bits().begin(), m.bits().end(), out.mutable_data(), [](std::uint8_t b) { return b != 0; });
  return out;
}

ProbabilityMap to_map(const F64Array& a) {
  if (a.ndim() != 2) throw Error(Errc::InvalidImage, "probability map must have shape (H, W)");
  return ProbabilityMap(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)),
                        std::vector<double>(a.data(), a.data() + a.size()));
}

std::vector<PointPair> to_pairs(const F64Array& source, const F64Array& target) {
  if (source.ndim() != 2 || source.shape(1) != 2 || target.ndim() != 2 || target.shape(1) != 2 ||
      source.shape(0) != target.shape(0)) {
    throw Error(Errc::InvalidArgument, "source and target must both have shape (N, 2)");
  }
  std::vector<PointPair> pairs;
  for (py::ssize_t i = 0; i < source.shape(0); ++i) {
    pairs.push_back({{source.at(i, 0), source.at(i, 1)}, {target.at(i, 0), target.at(i, 1)}});
  }
  return pairs;
}

py::bytes to_bytes(std::span<const std::uint8_t> b) {
  return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
}

std::vector<std::uint8_t> from_bytes(const py::bytes& b) {
  const std::string_view s = b;
  return {s.begin(), s.end()};
}

py::dict manifest_dict(const SetManifest& m) {
  py::dict d;
  d["id"] = m.id;
  d["revision"] = m.revision;
  d["label"] = std::string(label_name(m.label));
  d["created_at"] = m.created_at;
  d["residual_max_px"] = m.residual_max_px;
  d["residual_mean_px"] = m.residual_mean_px;
  d["checksums"] = m.checksums;
  return d;
}

py::dict record_dict(const RemoteSetRecord& r) {
  py::dict d;
  d["id"] = r.id;
  d["revision"] = r.revision;
  d["manifest"] = manifest_dict(r.manifest);
  d["location"] = r.location;
  d["uploaded_at"] = r.uploaded_at;
  return d;
}

// A store and the HTTP service in front of it, owned together.
struct Server {
  Server(const std::filesystem::path& data_dir, const std::string& host, int port)
      : store(data_dir), service(store, {.host = host, .port = port, .ui_dir = {}, .threads = 8}) {}
  RemoteStore store;
  SyncService service;
};

}  // namespace

PYBIND11_MODULE(_amdprep, m) {
  m.doc() = "AMD fundus dataset preparation and evaluation";

  static py::exception<Error> base_error(m, "AmdprepError", PyExc_RuntimeError);
  static py::exception<RevisionConflict> conflict_error(m, "RevisionConflictError", base_error.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    auto raise = [](py::handle type, const Error& e) {
      py::object exc = type(e.what());
      exc.attr("code") = std::string(errc_name(e.code()));
      exc.attr("invariant") = e.invariant().empty() ? py::object(py::none()) : py::object(py::str(e.invariant()));
      return exc;
    };
    try {
      if (p) std::rethrow_exception(p);
    } catch (const RevisionConflict& e) {
      py::object exc = raise(conflict_error, e);
      exc.attr("current_revision") = e.current_revision();
      PyErr_SetObject(conflict_error.ptr(), exc.ptr());
    } catch (const Error& e) {
      PyErr_SetObject(base_error.ptr(), raise(base_error, e).ptr());
    }
  });

  // geometry
  py::class_<SimilarityTransform>(m, "SimilarityTransform")
      .def(py::init<>())
      .def(py::init<double, double, double, double>(), py::arg("scale"), py::arg("rotation"), py::arg("tx") = 0.0,
           py::arg("ty") = 0.0)
      .def_property_readonly("scale", &SimilarityTransform::scale)
      .def_property_readonly("rotation", &SimilarityTransform::rotation)
      .def_property_readonly("tx", &SimilarityTransform::tx)
      .def_property_readonly("ty", &SimilarityTransform::ty)
      .def("apply",
           [](const SimilarityTransform& t, const F64Array& pts) {
             if (pts.ndim() != 2 || pts.shape(1) != 2) throw Error(Errc::InvalidArgument, "points must have shape (N, 2)");
             F64Array out({pts.shape(0), py::ssize_t{2}});
             for (py::ssize_t i = 0; i < pts.shape(0); ++i) {
               const Point2 q = apply_point(t, {pts.at(i, 0), pts.at(i, 1)});
               out.mutable_at(i, 0) = q.x;
               out.mutable_at(i, 1) = q.y;
             }
             return out;
           })
      .def("inverse", [](const SimilarityTransform& t) { return invert(t); })
      .def("compose", [](const SimilarityTransform& outer, const SimilarityTransform& inner) { return compose(outer, inner); },
           py::arg("inner"), "outer.compose(inner) applies inner first")
      .def(py::self == py::self)
      .def("__repr__", [](const SimilarityTransform& t) {
        return "SimilarityTransform(scale=" + std::to_string(t.scale()) + ", rotation=" + std::to_string(t.rotation()) +
               ", tx=" + std::to_string(t.tx()) + ", ty=" + std::to_string(t.ty()) + ")";
      });

  m.def("estimate_similarity",
        [](const F64Array& source, const F64Array& target) { return estimate_similarity(to_pairs(source, target)); },
        py::arg("source"), py::arg("target"), "Least-squares similarity mapping source points onto target points.");
  m.def("residuals",
        [](const SimilarityTransform& t, const F64Array& source, const F64Array& target) {
          return residuals(t, to_pairs(source, target));
        },
        py::arg("transform"), py::arg("source"), py::arg("target"));

  // raster
  m.def("warp", [](const U8Array& img, const SimilarityTransform& t, int width, int height) {
    return from_image(warp(to_image(img), t, width, height));
  }, py::arg("image"), py::arg("transform"), py::arg("width"), py::arg("height"));
  m.def("equalize_histogram", [](const U8Array& img) { return from_image(equalize_histogram(to_image(img))); });
  m.def("center_crop_scale", [](const U8Array& img, int width, int height) {
    return from_image(center_crop_scale(to_image(img), width, height));
  }, py::arg("image"), py::arg("width") = kSetSize, py::arg("height") = kSetSize);
  m.def("normalization_transform", &normalization_transform, py::arg("width"), py::arg("height"),
        py::arg("out_width") = kSetSize, py::arg("out_height") = kSetSize);
  m.def("binarize", [](const F64Array& map, double threshold) { return from_mask(binarize(to_map(map), threshold)); },
        py::arg("map"), py::arg("threshold"));
  m.def("overlay",
        [](const U8Array& rgb, const BoolArray& mask, std::array<std::uint8_t, 3> tint, double alpha) {
          return from_image(overlay(to_image(rgb), to_mask(mask), {tint[0], tint[1], tint[2]}, alpha));
        },
        py::arg("rgb"), py::arg("mask"), py::arg("tint") = std::array<std::uint8_t, 3>{255, 0, 0},
        py::arg("alpha") = kDefaultOverlayAlpha);
  m.def("read_png", [](const std::filesystem::path& p) { return from_image(read_png(p)); });
  m.def("write_png", [](const std::filesystem::path& p, const U8Array& img) { write_png(p, to_image(img)); });
  m.def("encode_png", [](const U8Array& img) { return to_bytes(encode_png(to_image(img))); });
  m.def("decode_png", [](const py::bytes& b) { return from_image(decode_png(from_bytes(b))); });

  // evaluation
  py::class_<ConfusionCounts>(m, "ConfusionCounts")
      .def(py::init<>())
      .def(py::init([](std::uint64_t tp, std::uint64_t fp, std::uint64_t tn, std::uint64_t fn) {
             return ConfusionCounts{tp, fp, tn, fn};
           }),
           py::arg("tp"), py::arg("fp"), py::arg("tn"), py::arg("fn"))
      .def_readwrite("tp", &ConfusionCounts::tp)
      .def_readwrite("fp", &ConfusionCounts::fp)
      .def_readwrite("tn", &ConfusionCounts::tn)
      .def_readwrite("fn", &ConfusionCounts::fn)
      .def_property_readonly("total", &ConfusionCounts::total)
      .def(py::self == py::self);
  py::class_<Metrics>(m, "Metrics")
      .def_readonly("sensitivity", &Metrics::sensitivity)
      .def_readonly("specificity", &Metrics::specificity)
      .def_readonly("accuracy", &Metrics::accuracy)
      .def_readonly("dice", &Metrics::dice)
      .def_readonly("dice_both_empty", &Metrics::dice_both_empty);
  py::class_<MetricsRow>(m, "MetricsRow")
      .def_readonly("model", &MetricsRow::model)
      .def_readonly("threshold", &MetricsRow::threshold)
      .def_readonly("counts", &MetricsRow::counts)
      .def_readonly("metrics", &MetricsRow::metrics)
      .def_readonly("images", &MetricsRow::images)
      .def_readonly("empty_images", &MetricsRow::empty_images);

  m.attr("DEFAULT_THRESHOLDS") = std::vector<double>(kDefaultThresholds.begin(), kDefaultThresholds.end());
  m.def("confusion", [](const BoolArray& pred, const BoolArray& truth) { return confusion(to_mask(pred), to_mask(truth)); },
        py::arg("pred"), py::arg("truth"));
  m.def("metrics_from_counts", &metrics_from_counts);
  m.def("sweep",
        [](const std::vector<std::pair<std::string, std::vector<F64Array>>>& predictions,
           const std::vector<BoolArray>& truths, const std::vector<double>& thresholds, const std::string& aggregation) {
          std::vector<ModelPredictions> preds;
          for (const auto& [name, maps] : predictions) {
            ModelPredictions mp{name, {}};
            for (const auto& a : maps) mp.maps.push_back(to_map(a));
            preds.push_back(std::move(mp));
          }
          std::vector<BinaryMask> masks;
          for (const auto& t : truths) masks.push_back(to_mask(t));
          Aggregation agg;
          if (aggregation == "micro") agg = Aggregation::Micro;
          else if (aggregation == "macro") agg = Aggregation::Macro;
          else throw Error(Errc::InvalidArgument, "aggregation must be 'micro' or 'macro'");
          py::gil_scoped_release release;
          return sweep(preds, masks, thresholds, agg);
        },
        py::arg("predictions"), py::arg("truths"),
        py::arg("thresholds") = std::vector<double>(kDefaultThresholds.begin(), kDefaultThresholds.end()),
        py::arg("aggregation") = "micro",
        "predictions: sequence of (model name, list of probability maps), one map per truth mask.");
  m.def("render_report",
        [](const std::vector<MetricsRow>& rows, const std::string& format) {
          if (format == "markdown") return render_report(rows, ReportFormat::Markdown);
          if (format == "csv") return render_report(rows, ReportFormat::Csv);
          throw Error(Errc::InvalidArgument, "format must be 'markdown' or 'csv'");
        },
        py::arg("rows"), py::arg("format") = "markdown");

  // pipeline
  m.def("run_case",
        [](const U8Array& rgb, double score, std::optional<F64Array> seg_map, double gate, double seg_threshold) {
          std::optional<ProbabilityMap> map;
          if (seg_map) map = to_map(*seg_map);
          const auto r = run_case(to_image(rgb), score, map, {.gate = gate, .seg_threshold = seg_threshold});
          py::dict d;
          d["score"] = r.score;
          d["decision"] = r.decision;
          d["mask"] = r.mask ? py::object(from_mask(*r.mask)) : py::object(py::none());
          d["overlay"] = r.overlay ? py::object(from_image(*r.overlay)) : py::object(py::none());
          return d;
        },
        py::arg("rgb"), py::arg("score"), py::arg("seg_map") = py::none(), py::arg("gate") = 0.5,
        py::arg("seg_threshold") = 0.05);
  m.def("run_batch",
        [](const std::filesystem::path& manifest, const std::filesystem::path& out_dir, unsigned threads) {
          BatchReport r;
          {
            py::gil_scoped_release release;
            r = run_batch(manifest, out_dir, {}, threads);
          }
          py::dict d;
          d["positives"] = r.positives;
          d["negatives"] = r.negatives;
          d["failures"] = r.failures;
          py::list errors;
          for (const auto& c : r.cases) {
            if (!c.result) errors.append(py::make_tuple(c.id, c.error));
          }
          d["errors"] = errors;
          return d;
        },
        py::arg("manifest"), py::arg("out_dir"), py::arg("threads") = 4);

  // dataset
  py::class_<TrainingSet>(m, "TrainingSet")
      .def_readonly("id", &TrainingSet::id)
      .def_property_readonly("rgb", [](const TrainingSet& s) { return from_image(s.rgb); })
      .def_property_readonly("contrast", [](const TrainingSet& s) { return from_image(s.contrast); })
      .def_property_readonly("mask", [](const TrainingSet& s) { return from_image(s.mask); })
      .def_readonly("transform", &TrainingSet::transform)
      .def_readonly("revision", &TrainingSet::revision)
      .def_property_readonly("label", [](const TrainingSet& s) { return std::string(label_name(s.label)); })
      .def(py::self == py::self);

  m.def("valid_set_id", &valid_set_id);
  m.def("assemble_set",
        [](const U8Array& rgb, const U8Array& contrast, const F64Array& source, const F64Array& target,
           const BoolArray& mask, const std::string& label, std::optional<std::string> id) {
          return assemble_set(to_image(rgb), to_image(contrast), to_pairs(source, target), to_mask(mask),
                              parse_label(label), std::move(id));
        },
        py::arg("rgb"), py::arg("contrast"), py::arg("source"), py::arg("target"), py::arg("mask"),
        py::arg("label") = "amd", py::arg("id") = py::none(),
        "source points lie in the contrast image, target points in the raw RGB image.");
  m.def("assemble_healthy_set",
        [](const U8Array& rgb, std::optional<std::string> id) { return assemble_healthy_set(to_image(rgb), std::move(id)); },
        py::arg("rgb"), py::arg("id") = py::none());
  m.def("save_set", [](const TrainingSet& s, const std::filesystem::path& root) { return manifest_dict(save_set(s, root)); },
        py::arg("set"), py::arg("store_root"));
  m.def("load_set", &load_set, py::arg("store_root"), py::arg("id"));
  m.def("list_sets", [](const std::filesystem::path& root) {
    const auto listing = list_sets(root);
    py::list ok, bad;
    for (const auto& man : listing.manifests) ok.append(manifest_dict(man));
    for (const auto& c : listing.corrupt) bad.append(py::make_tuple(c.id, c.invariant, c.message));
    return py::make_tuple(ok, bad);
  });
  m.def("pack_bundle", [](const std::filesystem::path& root, const std::string& id) { return to_bytes(pack_bundle(root, id)); },
        py::arg("store_root"), py::arg("id"));
  m.def("install_bundle",
        [](const py::bytes& bundle, const std::filesystem::path& root) {
          return manifest_dict(store_set_files(unpack_bundle(from_bytes(bundle)), root));
        },
        py::arg("bundle"), py::arg("store_root"), "Validates a bundle and installs it under store_root.");

  // sync
  py::class_<Server>(m, "SyncServer")
      .def(py::init<const std::filesystem::path&, const std::string&, int>(), py::arg("data_dir"),
           py::arg("host") = "127.0.0.1", py::arg("port") = 0)
      .def("start", [](Server& s) { s.service.start(); })
      .def("stop", [](Server& s) {
        py::gil_scoped_release release;
        s.service.stop();
      })
      .def_property_readonly("port", [](const Server& s) { return s.service.port(); });

  py::class_<SyncClient>(m, "SyncClient")
      .def(py::init<std::string, int>(), py::arg("host"), py::arg("port"))
      .def("healthy", &SyncClient::healthy, py::call_guard<py::gil_scoped_release>())
      .def("list", [](SyncClient& c) {
        std::vector<RemoteSetRecord> records;
        {
          py::gil_scoped_release release;
          records = c.list();
        }
        py::list out;
        for (const auto& r : records) out.append(record_dict(r));
        return out;
      })
      .def("upload",
           [](SyncClient& c, const std::string& id, const py::bytes& bundle, std::optional<std::int64_t> expected) {
             const auto bytes = from_bytes(bundle);
             RemoteSetRecord r;
             {
               py::gil_scoped_release release;
               r = c.upload(id, bytes, expected);
             }
             return record_dict(r);
           },
           py::arg("id"), py::arg("bundle"), py::arg("expected_revision") = py::none())
      .def("download", [](SyncClient& c, const std::string& id) {
        RemoteStore::Download d;
        {
          py::gil_scoped_release release;
          d = c.download(id);
        }
        return py::make_tuple(record_dict(d.record), to_bytes(d.bundle));
      });
}
