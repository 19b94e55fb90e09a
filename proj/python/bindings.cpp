#include <sstream>

#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cfcf/cfloss.hpp"
#include "cfcf/corrfilter.hpp"
#include "cfcf/errors.hpp"
#include "cfcf/eval.hpp"
#include "cfcf/spectral.hpp"
#include "cfcf/tracker.hpp"
#ifdef CFCF_HAVE_CLI
#include "cli.hpp"
#endif

namespace py = pybind11;
using namespace cfcf;

namespace {

using RealArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ComplexArray = py::array_t<Complex, py::array::c_style | py::array::forcecast>;

RealGrid to_grid(const RealArray& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
  RealGrid g(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), g.begin());
  return g;
}

FeatureStack to_stack(const RealArray& a) {
  if (a.ndim() == 2) return FeatureStack({to_grid(a)});
  if (a.ndim() != 3) throw py::value_error("expected a (channels, height, width) array");
  const int d = static_cast<int>(a.shape(0));
  const int h = static_cast<int>(a.shape(1));
  const int w = static_cast<int>(a.shape(2));
  FeatureStack s(d, h, w);
  const double* p = a.data();
  for (int l = 0; l < d; ++l) std::copy(p + l * h * w, p + (l + 1) * h * w, s[l].begin());
  return s;
}

template <typename T>
py::array_t<T> to_array(const Grid<T>& g) {
  py::array_t<T> out({g.height(), g.width()});
  std::copy(g.begin(), g.end(), out.mutable_data());
  return out;
}

py::array_t<double> stack_to_array(const FeatureStack& s) {
  py::array_t<double> out({s.channels(), s.height(), s.width()});
  double* p = out.mutable_data();
  for (const auto& m : s) p = std::copy(m.begin(), m.end(), p);
  return out;
}

Box to_box(const std::vector<double>& v) {
  if (v.size() != 4) throw py::value_error("a box is (x, y, w, h)");
  return {v[0], v[1], v[2], v[3]};
}

std::vector<Box> to_boxes(const std::vector<std::vector<double>>& v) {
  std::vector<Box> out;
  for (const auto& b : v) out.push_back(to_box(b));
  return out;
}

}  // namespace

PYBIND11_MODULE(_cfcf, m) {
  m.doc() = "Correlation filter feature learning and tracking";

  static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(error.ptr(), e.what());
    }
  });

  m.def("dft2", [](const RealArray& a) { return to_array(spectral::dft2(to_grid(a))); },
        "Unnormalised 2-D DFT of a real array.");
  m.def("circ_correlate",
        [](const RealArray& a, const RealArray& b) {
          return to_array(spectral::circ_correlate(to_grid(a), to_grid(b)));
        },
        "(a * b)[n] = sum_i a[i] b[(n + i) mod P].");
  m.def("make_desired_response",
        [](int height, int width, int peak_row, int peak_col, std::optional<double> sigma) {
          return to_array(corrfilter::make_desired_response(
                              height, width, peak_row, peak_col,
                              sigma.value_or(corrfilter::default_sigma(height, width)))
                              .grid);
        },
        py::arg("height"), py::arg("width"), py::arg("peak_row"), py::arg("peak_col"),
        py::arg("sigma") = py::none());
  m.def("solve_filter",
        [](const RealArray& y, const RealArray& g, double lambda) {
          std::vector<py::array_t<Complex>> out;
          for (const auto& h : corrfilter::solve_filter(to_stack(y), to_grid(g), lambda)) {
            out.push_back(to_array(h));
          }
          return out;
        },
        py::arg("y"), py::arg("g"), py::arg("lam") = corrfilter::kDefaultLambda,
        "Closed-form multi-channel filter spectra of template maps y (d, h, w).");
  m.def("apply_filter",
        [](const std::vector<ComplexArray>& h, const RealArray& z) {
          SpectralStack hs;
          for (const auto& a : h) {
            if (a.ndim() != 2) throw py::value_error("filters must be 2-D");
            SpectralGrid g(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
            std::copy(a.data(), a.data() + a.size(), g.begin());
            hs.push_back(std::move(g));
          }
          return to_array(corrfilter::apply_filter(hs, to_stack(z)));
        },
        py::arg("h"), py::arg("z"));
  m.def("cf_loss",
        [](const RealArray& x, const RealArray& y, const RealArray& g, const RealArray& g_hat,
           double lambda) {
          const auto r = cfloss::triplet_loss(to_stack(x), to_stack(y), to_grid(g), to_grid(g_hat),
                                              lambda);
          return py::make_tuple(r.loss, stack_to_array(r.grad_x), stack_to_array(r.grad_y));
        },
        py::arg("x"), py::arg("y"), py::arg("g"), py::arg("g_hat"),
        py::arg("lam") = corrfilter::kDefaultLambda,
        "Correlation filter loss and its gradients (loss, dL/dx, dL/dy).");

  m.def("iou",
        [](const std::vector<double>& a, const std::vector<double>& b) {
          return eval::iou(to_box(a), to_box(b));
        });
  m.def("evaluate",
        [](const std::vector<std::vector<double>>& pred, const std::vector<std::vector<double>>& gt) {
          const eval::EvalReport r = eval::evaluate(to_boxes(pred), to_boxes(gt));
          py::dict d;
          d["op"] = r.op;
          d["dp"] = r.dp;
          d["auc"] = r.auc;
          d["frames"] = r.frames;
          d["skipped"] = r.skipped;
          d["iou"] = r.iou;
          d["center_error"] = r.center_error;
          d["success_curve"] = r.success_curve;
          d["precision_curve"] = r.precision_curve;
          return d;
        },
        py::arg("pred"), py::arg("gt"));

  m.def("track_sequence",
        [](const std::filesystem::path& sequence, const std::vector<double>& init,
           const std::filesystem::path& out, const std::string& features,
           std::optional<std::filesystem::path> model, bool window) {
          tracker::TrackerConfig cfg;
          cfg.features = tracker::parse_feature_mode(features);
          cfg.model_path = std::move(model);
          cfg.window = window;
          const auto r = tracker::track_sequence(cfg, sequence, to_box(init), out);
          std::vector<std::vector<double>> boxes;
          for (const Box& b : r.boxes) boxes.push_back({b.x, b.y, b.w, b.h});
          py::dict d;
          d["boxes"] = boxes;
          d["peak_values"] = r.peak_values;
          d["fps"] = r.fps;
          return d;
        },
        py::arg("sequence"), py::arg("init"), py::arg("out"), py::arg("features") = "gray_grads",
        py::arg("model") = py::none(), py::arg("window") = true);

  m.def("run_cli",
        [](std::vector<std::string> args) {
#ifdef CFCF_HAVE_CLI
          args.insert(args.begin(), "cfcf");
          std::ostringstream out;
          std::ostringstream err;
          int code = 0;
          {
            py::gil_scoped_release release;
            code = cli::run(args, out, err);
          }
          return py::make_tuple(code, out.str(), err.str());
#else
          (void)args;
          throw std::runtime_error("built without the command line tool");
#endif
        },
        py::arg("args"), "Runs a cfcf subcommand in-process; returns (exit code, stdout, stderr).");
}
