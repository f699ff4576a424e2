#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "fxisort/classifier_ei.hpp"
#include "fxisort/forward_sim.hpp"
#include "fxisort/metrics.hpp"
#include "fxisort/npd.hpp"
#include "fxisort/pipeline.hpp"

namespace py = pybind11;
using namespace fxisort;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using BoolArray = py::array_t<bool, py::array::c_style | py::array::forcecast>;

PyObject* error_type = nullptr;

Pattern to_pattern(const FloatArray& values, const std::optional<BoolArray>& mask) {
  if (values.ndim() != 2) throw py::value_error("frame must be a 2-D array");
  const auto rows = static_cast<int>(values.shape(0));
  const auto cols = static_cast<int>(values.shape(1));
  std::vector<float> data(values.data(), values.data() + values.size());
  PixelMask m(rows, cols, true);
  if (mask) {
    if (mask->ndim() != 2 || mask->shape(0) != rows || mask->shape(1) != cols)
      throw py::value_error("mask shape must match the frame");
    const bool* b = mask->data();
    for (std::size_t i = 0; i < data.size(); ++i) m.set(i, b[i]);
  }
  return Pattern(rows, cols, std::move(data), std::move(m));
}

py::tuple from_pattern(const Pattern& p) {
  FloatArray values({p.rows(), p.cols()});
  BoolArray mask({p.rows(), p.cols()});
  std::copy(p.data().begin(), p.data().end(), values.mutable_data());
  bool* m = mask.mutable_data();
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = p.mask().valid(i);
  return py::make_tuple(values, mask);
}

py::dict meta_dict(const FrameMeta& m) {
  py::dict d;
  d["label"] = std::string(to_string(m.label));
  d["true_diameter"] = m.true_diameter;
  d["true_fluence"] = m.true_fluence;
  d["aspect_ratio"] = m.aspect_ratio;
  d["source_id"] = m.source_id;
  return d;
}

py::dict report_dict(const MatchReport& r) {
  py::dict d;
  d["frame_id"] = r.frame_id;
  d["method"] = r.method;
  d["matched_id"] = r.matched_id;
  d["matched_label"] = r.matched_label;
  d["score"] = r.score;
  d["phi_hat"] = r.phi_hat;
  d["scale_hat"] = r.scale_hat;
  d["diameter_hat"] = r.diameter_hat;
  d["c_error"] = r.c_error;
  d["accepted"] = r.accepted;
  if (!r.error.empty()) d["error"] = r.error;
  return d;
}

py::object json_to_python(const std::string& text) {
  return py::module_::import("json").attr("loads")(text);
}

JobConfig job(const std::string& method, const std::string& model, const std::string& data, int workers,
              bool scale_search, std::optional<double> threshold) {
  JobConfig cfg;
  cfg.method = parse_method(method);
  cfg.model = model;
  cfg.data = data;
  cfg.workers = workers;
  cfg.search_scale = scale_search;
  cfg.threshold = threshold;
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_fxisort, m) {
  m.doc() = "Diffraction pattern synthesis and template classification";

  error_type = PyErr_NewException("fxisort._fxisort.Error", PyExc_RuntimeError, nullptr);
  m.add_object("Error", py::reinterpret_borrow<py::object>(error_type));
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const std::string text = std::string(to_string(e.kind())) + ": " + e.what();
      PyErr_SetString(error_type, text.c_str());
    }
  });

  m.def(
      "generate",
      [](const std::string& recipe, std::uint64_t seed, const std::string& out, int count, int crop, int binning,
         std::optional<double> separation, std::optional<double> photon_budget, bool with_sphere, int workers) {
        DatasetOptions opt;
        opt.preprocess = {crop, binning};
        if (separation) opt.separation = *separation;
        if (photon_budget) opt.model.photon_budget = *photon_budget;
        opt.add_sphere_template = with_sphere;
        opt.workers = workers;
        if (count > 0) {
          opt.sizes.templates = count;
          opt.sizes.homogeneous = count;
          opt.sizes.sizes = count;
        }
        Dataset d;
        {
          py::gil_scoped_release release;
          d = build_dataset(parse_recipe(recipe), seed, opt);
          write_npd(d, out);
        }
        py::dict r;
        r["recipe"] = recipe;
        r["frames"] = d.count();
        r["rows"] = d.rows();
        r["cols"] = d.cols();
        return r;
      },
      py::arg("recipe"), py::arg("seed"), py::arg("out"), py::arg("count") = 0, py::arg("crop") = 480,
      py::arg("bin") = 4, py::arg("separation") = py::none(), py::arg("photon_budget") = py::none(),
      py::arg("with_sphere") = false, py::arg("workers") = 1,
      "Build a dataset recipe (T, D, P, F, S, X) and write it as an NPD directory.");

  m.def(
      "load_dataset",
      [](const std::string& dir) {
        Dataset d;
        {
          py::gil_scoped_release release;
          d = read_npd(dir);
        }
        const py::ssize_t n = static_cast<py::ssize_t>(d.count());
        FloatArray values({n, static_cast<py::ssize_t>(d.rows()), static_cast<py::ssize_t>(d.cols())});
        BoolArray masks({n, static_cast<py::ssize_t>(d.rows()), static_cast<py::ssize_t>(d.cols())});
        float* v = values.mutable_data();
        bool* b = masks.mutable_data();
        py::list meta;
        for (const auto& f : d.frames) {
          v = std::copy(f.data().begin(), f.data().end(), v);
          for (std::size_t i = 0; i < f.size(); ++i) *b++ = f.mask().valid(i);
          meta.append(meta_dict(f.meta()));
        }
        py::dict r;
        r["patterns"] = values;
        r["masks"] = masks;
        r["meta"] = meta;
        r["recipe"] = d.recipe;
        r["seed"] = d.seed;
        return r;
      },
      py::arg("path"), "Read an NPD directory into arrays and per-frame metadata.");

  m.def(
      "diffract",
      [](const std::string& shape, double diameter, double aspect_ratio, std::array<double, 4> orientation,
         int crop, int binning) {
        ParticleSpec spec;
        spec.shape = parse_shape_label(shape);
        spec.diameter = diameter;
        spec.aspect_ratio = aspect_ratio;
        spec.orientation = Quaternion{orientation[0], orientation[1], orientation[2], orientation[3]}.normalized();
        Pattern p;
        {
          py::gil_scoped_release release;
          const ForwardModel model;
          p = preprocess(crop > 0 ? model.diffract_center(spec, crop) : model.diffract(spec), Preprocess{0, binning});
        }
        return from_pattern(p);
      },
      py::arg("shape") = "icosahedron", py::arg("diameter") = 180.0, py::arg("aspect_ratio") = 1.0,
      py::arg("orientation") = std::array<double, 4>{1.0, 0.0, 0.0, 0.0}, py::arg("crop") = 480,
      py::arg("bin") = 4, "Noiseless expected counts and validity mask for one particle.");

  m.def(
      "c_error",
      [](const FloatArray& frame, const FloatArray& templ, std::optional<BoolArray> frame_mask,
         std::optional<BoolArray> template_mask, bool scale_search) {
        const Pattern g = to_pattern(frame, frame_mask);
        const Pattern r = to_pattern(templ, template_mask);
        const CError e = c_error(g, r, scale_search);
        return py::make_tuple(e.value, e.scale, e.phi_hat);
      },
      py::arg("frame"), py::arg("template"), py::arg("frame_mask") = py::none(),
      py::arg("template_mask") = py::none(), py::arg("scale_search") = false,
      "Classification error against a template: (c, scale, phi_hat).");

  m.def(
      "train_ei",
      [](const std::string& train, const std::string& out, int rank) {
        EiModel model;
        {
          py::gil_scoped_release release;
          EiOptions opt;
          opt.rank = rank;
          model = ei_train(read_npd(train), opt);
          save_ei_model(model, out);
        }
        py::dict r;
        r["templates"] = model.size();
        r["rank"] = model.rank();
        r["truncated"] = model.truncated;
        r["eigenvalues"] = std::vector<double>(model.eigenvalues.data(), model.eigenvalues.data() + model.eigenvalues.size());
        return r;
      },
      py::arg("train"), py::arg("out"), py::arg("rank") = 0, "Train an eigen-image model and save it.");

  m.def(
      "classify",
      [](const std::string& model, const std::string& data, const std::string& method, std::optional<std::string> out,
         int workers, bool scale_search, std::optional<double> threshold) {
        const JobConfig cfg = job(method, model, data, workers, scale_search, threshold);
        BatchResult b;
        {
          py::gil_scoped_release release;
          b = run_batch(cfg);
          if (out) write_results_csv(b.reports, *out);
        }
        py::list rows;
        for (const auto& r : b.reports) rows.append(report_dict(r));
        return py::make_tuple(rows, json_to_python(throughput_json(b.throughput)));
      },
      py::arg("model"), py::arg("data"), py::arg("method") = "ei", py::arg("out") = py::none(),
      py::arg("workers") = 1, py::arg("scale_search") = false, py::arg("threshold") = py::none(),
      "Classify every frame; returns (reports, throughput).");

  m.def(
      "evaluate",
      [](const std::string& results, const std::string& truth, std::optional<std::string> out, double bin_width) {
        EvalSummary s;
        {
          py::gil_scoped_release release;
          SummaryOptions opt;
          opt.bin_width = bin_width;
          s = summarize(read_results_csv(results), read_npd_manifest(truth).frames, opt);
          if (out) write_summary(s, *out);
        }
        py::dict r;
        r["method"] = s.method;
        r["frames"] = s.frames;
        r["benchmark_frames"] = s.benchmark_frames;
        r["benchmark_c_error"] = s.benchmark_c_error;
        r["complete_c_error"] = s.complete_c_error;
        r["mean_fluence_error"] = s.mean_fluence_error;
        r["mean_abs_diameter_error"] = s.mean_abs_diameter_error;
        r["errors"] = s.errors;
        py::dict confusion;
        for (const auto& [name, row] : s.confusion) {
          py::dict c;
          c["icosahedron"] = row.icosahedron;
          c["spheroid"] = row.spheroid;
          c["rejected"] = row.rejected;
          c["other"] = row.other;
          c["total"] = row.total;
          confusion[py::str(name)] = c;
        }
        r["confusion"] = confusion;
        py::list bins;
        for (const auto& b : s.size_bins)
          bins.append(py::dict(py::arg("diameter_center") = b.center, py::arg("count") = b.count,
                               py::arg("mean_c_error") = b.mean_c_error,
                               py::arg("mean_fluence_error") = b.mean_fluence_error,
                               py::arg("mean_abs_diameter_error") = b.mean_abs_diameter_error));
        r["size_bins"] = bins;
        return r;
      },
      py::arg("results"), py::arg("truth"), py::arg("out") = py::none(), py::arg("bin_width") = 10.0,
      "Summarize a results CSV against the NPD it was computed on.");

  m.def(
      "bench",
      [](const std::string& model, const std::string& data, const std::string& method, int repeats, int workers,
         std::vector<int> scaling, bool scale_search) {
        const JobConfig cfg = job(method, model, data, workers, scale_search, std::nullopt);
        ThroughputReport r;
        {
          py::gil_scoped_release release;
          r = bench(cfg, repeats, std::move(scaling));
        }
        return json_to_python(throughput_json(r));
      },
      py::arg("model"), py::arg("data"), py::arg("method") = "ei", py::arg("repeats") = 3, py::arg("workers") = 1,
      py::arg("scaling") = std::vector<int>{}, py::arg("scale_search") = false,
      "Median-of-repeats throughput report.");

  m.def("spearman", [](const std::vector<double>& x, const std::vector<double>& y) { return spearman(x, y); },
        py::arg("x"), py::arg("y"));
}
