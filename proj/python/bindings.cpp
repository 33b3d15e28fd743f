#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cif/core.hpp"
#include "cif/data.hpp"
#include "cif/error.hpp"
#include "cif/eval.hpp"
#include "cif/resample.hpp"
#include "cif/splat.hpp"
#include "cif/train.hpp"

namespace py = pybind11;
using namespace cif;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Labels = py::array_t<int, py::array::c_style | py::array::forcecast>;

Array to_array(const std::vector<double>& data, std::vector<py::ssize_t> shape) {
  Array out(shape);
  std::copy(data.begin(), data.end(), out.mutable_data());
  return out;
}

Labels to_labels(const LabelImage& image) {
  Labels out({image.height, image.width});
  std::copy(image.labels.begin(), image.labels.end(), out.mutable_data());
  return out;
}

LabelImage from_labels(const Labels& array) {
  if (array.ndim() != 2) throw py::value_error("label maps must be 2-D");
  LabelImage image = LabelImage::zeros(static_cast<int>(array.shape(1)), static_cast<int>(array.shape(0)));
  std::copy(array.data(), array.data() + array.size(), image.labels.begin());
  return image;
}

std::vector<LabelImage> from_label_list(const std::vector<Labels>& arrays) {
  std::vector<LabelImage> out;
  for (const auto& a : arrays) out.push_back(from_labels(a));
  return out;
}

py::dict buffers_dict(const RenderBuffers& b) {
  py::dict d;
  d["color"] = to_array(b.color, {b.height, b.width, 3});
  d["marginals"] = to_array(b.marginals, {b.height, b.width, b.instances});
  d["residual"] = to_array(b.residual, {b.height, b.width});
  d["transmittance"] = to_array(b.transmittance, {b.height, b.width});
  d["panoptic"] = to_labels(panoptic_map(b));
  return d;
}

py::dict report_dict(const MetricReport& r) {
  py::dict d;
  d["frames"] = r.frames;
  d["macc_pix"] = r.macc_pix;
  d["macc_inst"] = r.macc_inst;
  d["miou"] = r.miou;
  d["instance_iou"] = r.instance_iou;
  return d;
}

}  // namespace

PYBIND11_MODULE(_cif, m) {
  m.doc() = "Consistent instance field engine";

  static py::exception<Error> error(m, "Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, ("[" + std::string(to_string(e.code())) + "] " + e.what()).c_str());
    }
  });

  py::class_<GaussianSet>(m, "GaussianSet")
      .def_static("create", &GaussianSet::create, py::arg("n"), py::arg("k"))
      .def("__len__", &GaussianSet::size)
      .def_property_readonly("instances", &GaussianSet::instances)
      .def_readwrite("position", &GaussianSet::position)
      .def_readwrite("rotation", &GaussianSet::rotation)
      .def_readwrite("log_scale", &GaussianSet::log_scale)
      .def_readwrite("color", &GaussianSet::color)
      .def_readwrite("opacity_logit", &GaussianSet::opacity_logit)
      .def_readwrite("occupancy_logit", &GaussianSet::occupancy_logit)
      .def_readwrite("base_identity", &GaussianSet::base_identity)
      .def_readwrite("calibration_log", &GaussianSet::calibration_log)
      .def("validate", &GaussianSet::validate)
      .def("effective_identities", [](const GaussianSet& s) { return effective_identities(s); });

  py::class_<DeformConfig>(m, "DeformConfig")
      .def(py::init<>())
      .def_readwrite("position_frequencies", &DeformConfig::position_frequencies)
      .def_readwrite("time_frequencies", &DeformConfig::time_frequencies)
      .def_readwrite("hidden", &DeformConfig::hidden);

  py::class_<DeformationField>(m, "DeformationField")
      .def(py::init<DeformConfig>(), py::arg("config") = DeformConfig{})
      .def_property_readonly("config", &DeformationField::config)
      .def("weight_count", &DeformationField::weight_count)
      .def("flatten", &DeformationField::flatten)
      .def("assign", &DeformationField::assign);

  py::class_<Camera>(m, "Camera")
      .def(py::init<>())
      .def_static("look_at", &Camera::look_at, py::arg("eye"), py::arg("target"), py::arg("up"), py::arg("focal"),
                  py::arg("width"), py::arg("height"))
      .def_readwrite("fx", &Camera::fx)
      .def_readwrite("fy", &Camera::fy)
      .def_readwrite("cx", &Camera::cx)
      .def_readwrite("cy", &Camera::cy)
      .def_readwrite("rotation", &Camera::rotation)
      .def_readwrite("translation", &Camera::translation)
      .def_readwrite("width", &Camera::width)
      .def_readwrite("height", &Camera::height);

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_readwrite("gaussians", &Checkpoint::gaussians)
      .def_readwrite("deform", &Checkpoint::deform)
      .def_readonly("iteration", &Checkpoint::iteration);
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));
  m.def("save_checkpoint", &save_checkpoint, py::arg("path"), py::arg("checkpoint"));

  py::class_<SceneDataset>(m, "Scene")
      .def_readonly("instances", &SceneDataset::instances)
      .def_readonly("cameras", &SceneDataset::cameras)
      .def("__len__", [](const SceneDataset& s) { return s.frames.size(); })
      .def("time", [](const SceneDataset& s, std::size_t f) { return s.frames.at(f).time; })
      .def("camera_index", [](const SceneDataset& s, std::size_t f) { return s.frames.at(f).camera; })
      .def("rgb", [](const SceneDataset& s, std::size_t f) {
        const RgbImage& img = s.frames.at(f).rgb;
        return to_array(img.data, {img.height, img.width, 3});
      })
      .def("mask", [](const SceneDataset& s, std::size_t f) { return to_labels(s.frames.at(f).mask); })
      .def("is_test", [](const SceneDataset& s, std::size_t f) { return s.frames.at(f).split == Split::Test; });
  m.def("load_scene", &load_scene, py::arg("path"));
  m.def("write_scene", &write_scene, py::arg("path"), py::arg("scene"));
  m.def("merge_views", [](const std::vector<SceneDataset>& views) { return visibility_filter(merge_views(views)).scene; });
  m.def("synth_presets", &synth_presets);
  m.def(
      "synth",
      [](const std::string& preset, std::uint64_t seed) {
        Rng rng(seed);
        SynthScene s = synth_scene(synth_preset(preset), rng);
        return py::make_tuple(std::move(s.dataset), std::move(s.gaussians), std::move(s.deform), s.owner);
      },
      py::arg("preset"), py::arg("seed") = 0);

  m.def(
      "render",
      [](const GaussianSet& set, const DeformationField& deform, const Camera& camera, double t) {
        RenderBuffers b;
        {
          py::gil_scoped_release release;
          b = render(set, deform, camera, t).buffers;
        }
        return buffers_dict(b);
      },
      py::arg("gaussians"), py::arg("deform"), py::arg("camera"), py::arg("time"));

  m.def("volume_conserving", &volume_conserving, py::arg("value"), py::arg("replicas"));
  m.def(
      "sampling_plan",
      [](const Eigen::VectorXd& responses, double epsilon, double rate) {
        const SamplingPlan p = build_plan(responses, 1, epsilon, rate);
        return py::make_tuple(p.weak, p.strong, p.budget);
      },
      py::arg("responses"), py::arg("epsilon"), py::arg("rate"));

  m.def("panoptic_map", [](const Array& marginals, const Array& residual) {
    if (marginals.ndim() != 3 || residual.ndim() != 2) throw py::value_error("expected (H, W, K) and (H, W)");
    RenderBuffers b;
    b.height = static_cast<int>(marginals.shape(0));
    b.width = static_cast<int>(marginals.shape(1));
    b.instances = static_cast<int>(marginals.shape(2));
    b.marginals.assign(marginals.data(), marginals.data() + marginals.size());
    b.residual.assign(residual.data(), residual.data() + residual.size());
    return to_labels(panoptic_map(b));
  });
  m.def(
      "evaluate",
      [](const std::vector<Labels>& pred, const std::vector<Labels>& gt) {
        return report_dict(evaluate(from_label_list(pred), from_label_list(gt)));
      },
      py::arg("pred"), py::arg("gt"));
  m.def(
      "score",
      [](const Checkpoint& ckpt, const SceneDataset& scene, bool test) {
        const SplitScore s = score_split(ckpt.gaussians, ckpt.deform, scene, test ? Split::Test : Split::Train);
        py::dict d = report_dict(s.metrics);
        d["psnr"] = s.psnr;
        return d;
      },
      py::arg("checkpoint"), py::arg("scene"), py::arg("test") = true);
}
