#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "aquaseg/cli.hpp"
#include "aquaseg/errors.hpp"
#include "aquaseg/raster.hpp"
#include "aquaseg/synth.hpp"
#include "aquaseg/trainer.hpp"

namespace py = pybind11;
using namespace aquaseg;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Tensor<float> to_tensor(const FloatArray& a) {
  if (a.ndim() != 4) throw ShapeError("expected a 4-d (n, c, h, w) float array");
  const Shape4 s{static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)),
                 static_cast<int>(a.shape(3))};
  return Tensor<float>::from_vector(s, std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray to_array(const Tensor<float>& t) {
  const auto& s = t.shape();
  FloatArray out({s.n, s.c, s.h, s.w});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::array raster_to_array(const RasterImage& img) {
  const std::vector<py::ssize_t> shape{img.bands, img.height, img.width};
  if (const auto* u = std::get_if<std::vector<std::uint8_t>>(&img.pixels)) {
    py::array_t<std::uint8_t> out(shape);
    std::copy(u->begin(), u->end(), out.mutable_data());
    return out;
  }
  const auto& f = std::get<std::vector<float>>(img.pixels);
  py::array_t<float> out(shape);
  std::copy(f.begin(), f.end(), out.mutable_data());
  return out;
}

RasterImage array_to_raster(const py::array& a) {
  if (a.ndim() != 3) throw ShapeError("expected a (bands, height, width) array");
  RasterImage img;
  img.bands = static_cast<int>(a.shape(0));
  img.height = static_cast<int>(a.shape(1));
  img.width = static_cast<int>(a.shape(2));
  if (a.dtype().is(py::dtype::of<std::uint8_t>())) {
    auto u = ByteArray::ensure(a);
    img.pixels = std::vector<std::uint8_t>(u.data(), u.data() + u.size());
  } else {
    auto f = FloatArray::ensure(a);
    img.pixels = std::vector<float>(f.data(), f.data() + f.size());
  }
  img.validate();
  return img;
}

py::dict report_dict(const MetricsReport& r) {
  py::dict d;
  d["iou"] = r.mean_iou;
  d["dice"] = r.mean_dice;
  d["per_sample_iou"] = r.iou;
  d["per_sample_dice"] = r.dice;
  return d;
}

}  // namespace

PYBIND11_MODULE(_aquaseg, m) {
  m.doc() = "Water-body segmentation core: autodiff U-Nets, the two-resolution combined model and its data pipeline.";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("read_raster", [](const std::filesystem::path& p) { return raster_to_array(read_raster(p)); },
        py::arg("path"), "AQR raster as a (bands, height, width) array.");
  m.def("write_raster", [](const py::array& a, const std::filesystem::path& p) { write_raster(array_to_raster(a), p); },
        py::arg("array"), py::arg("path"));
  m.def("patch_count", &patch_count, py::arg("width"), py::arg("height"), py::arg("size"), py::arg("stride"));

  m.def(
      "iou", [](const ByteArray& p, const ByteArray& t) {
        return iou_metric({p.data(), static_cast<std::size_t>(p.size())}, {t.data(), static_cast<std::size_t>(t.size())});
      },
      py::arg("pred"), py::arg("target"));
  m.def(
      "dice", [](const ByteArray& p, const ByteArray& t) {
        return dice_metric({p.data(), static_cast<std::size_t>(p.size())}, {t.data(), static_cast<std::size_t>(t.size())});
      },
      py::arg("pred"), py::arg("target"));

  m.def(
      "synth",
      [](const std::filesystem::path& out, int hr, int vhr, int unlabelled, int vhr_size, int factor,
         const std::string& shift, std::uint64_t seed) {
        SynthConfig c;
        c.hr_scenes = hr;
        c.vhr_labelled_scenes = vhr;
        c.vhr_unlabelled_scenes = unlabelled;
        c.vhr_size = vhr_size;
        c.factor = factor;
        c.shift = parse_shift(shift);
        c.seed = seed;
        return write_synth_dataset(c, out).entries.size();
      },
      py::arg("out"), py::arg("hr_scenes") = 60, py::arg("vhr_labelled_scenes") = 12,
      py::arg("vhr_unlabelled_scenes") = 4, py::arg("vhr_size") = 512, py::arg("factor") = 4,
      py::arg("shift") = "none", py::arg("seed") = 0, "Writes a synthetic dataset; returns the number of scenes.");

  py::class_<UNetModel<float>>(m, "UNet")
      .def(py::init([](const std::string& preset, int in_channels, std::uint64_t seed) {
             Prng rng(seed);
             return UNetModel<float>(UNetConfig::from_preset(preset, in_channels), rng);
           }),
           py::arg("preset") = "micro", py::arg("in_channels") = 4, py::arg("seed") = 0)
      .def("parameter_count", &UNetModel<float>::parameter_count)
      .def(
          "forward",
          [](const UNetModel<float>& net, const FloatArray& x) {
            NoGradGuard no_grad;
            return to_array(net.forward(to_tensor(x)));
          },
          py::arg("batch"), "Logits of shape (n, 1, h, w).")
      .def("save", [](const UNetModel<float>& net, const std::filesystem::path& p) { save_checkpoint(net, p); })
      .def_static("load", [](const std::filesystem::path& p) { return load_checkpoint(p); });

  m.def(
      "train",
      [](const std::string& mode, const std::filesystem::path& manifest, const std::filesystem::path& ckpt,
         std::optional<int> epochs, std::uint64_t seed, double w3, int batch_unlabelled) {
        auto c = TrainConfig::defaults(parse_mode(mode));
        if (epochs) c.epochs = *epochs;
        c.seed = seed;
        c.weights.w3 = w3;
        c.batch_unlabelled = batch_unlabelled;
        c.checkpoint = ckpt;
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(c, load_manifest(manifest));
        }
        py::dict d;
        d["log_csv"] = r.log.csv();
        d["epoch_losses"] = r.log.epoch_mean_totals();
        if (r.validation) d["validation"] = report_dict(*r.validation);
        return d;
      },
      py::arg("mode"), py::arg("manifest"), py::arg("ckpt"), py::arg("epochs") = py::none(), py::arg("seed") = 0,
      py::arg("w3") = 0.1, py::arg("batch_unlabelled") = 1);

  m.def(
      "evaluate",
      [](const std::filesystem::path& ckpt, const std::filesystem::path& manifest, const std::string& split,
         double threshold) {
        return report_dict(evaluate(read_checkpoint(ckpt), load_manifest(manifest), parse_split(split), threshold));
      },
      py::arg("ckpt"), py::arg("manifest"), py::arg("split") = "test", py::arg("threshold") = 0.5);

  m.def("run_cli", py::overload_cast<const std::vector<std::string>&>(&run_cli), py::arg("args"),
        "Runs the command-line interface in-process; returns the exit code.");
}
