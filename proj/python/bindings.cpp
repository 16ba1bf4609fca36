#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <map>
#include <optional>
#include <string>

#include "seatnet/dataset.hpp"
#include "seatnet/error.hpp"
#include "seatnet/evaluation.hpp"
#include "seatnet/image.hpp"
#include "seatnet/model.hpp"
#include "seatnet/swt.hpp"
#include "seatnet/synth.hpp"

namespace py = pybind11;
using namespace seatnet;

namespace {

using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

ModelConfig profile(const std::string& name, std::optional<std::size_t> input_size) {
  ModelConfig c;
  if (name == "reduced") {
    c = ModelConfig::reduced_profile();
  } else if (name != "default") {
    fail(ErrorCode::kConfig, "profile must be \"default\" or \"reduced\", got \"" + name + "\"");
  }
  if (input_size) c.input_size = *input_size;
  c.validate();
  return c;
}

Array to_numpy(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array a(shape);
  std::copy(t.data().begin(), t.data().end(), a.mutable_data());
  return a;
}

Tensor from_numpy(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

py::dict to_dict(const WeightStore& w) {
  py::dict d;
  for (const auto& [name, t] : w.entries()) d[py::str(name)] = to_numpy(t);
  return d;
}

// Python dicts keep insertion order, which becomes the file's tensor order.
WeightStore from_dict(const py::dict& d) {
  WeightStore w;
  for (const auto& [k, v] : d) w.insert(py::cast<std::string>(k), from_numpy(py::cast<Array>(v)));
  return w;
}

std::vector<TensorSpec> manifest_for(const std::optional<std::string>& name, std::optional<std::size_t> input_size,
                                     bool extractor_only) {
  const ModelConfig c = profile(*name, input_size);
  return extractor_only ? extractor_manifest(c) : weight_manifest(c);
}

py::dict counts_dict(const ConfusionCounts& c) {
  py::dict d;
  d["true_positive"] = c.true_positive;
  d["false_positive"] = c.false_positive;
  d["true_negative"] = c.true_negative;
  d["false_negative"] = c.false_negative;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Seat classifier engine";

  auto error = py::register_exception<Error>(m, "SeatnetError", PyExc_RuntimeError);
  (void)error;

  m.def(
      "weight_manifest",
      [](const std::string& name, std::optional<std::size_t> input_size, bool extractor_only) {
        std::vector<std::pair<std::string, std::vector<std::size_t>>> out;
        for (const auto& s : manifest_for(name, input_size, extractor_only)) out.emplace_back(s.name, s.shape);
        return out;
      },
      py::arg("profile") = "default", py::arg("input_size") = py::none(), py::arg("extractor_only") = false,
      "(name, shape) for every tensor the profile implies, in canonical order.");

  m.def(
      "build_model",
      [](const std::string& name, std::uint64_t seed, std::optional<std::size_t> input_size) {
        return to_dict(build_model(profile(name, input_size), RngState{seed, 0}));
      },
      py::arg("profile") = "default", py::arg("seed") = 0, py::arg("input_size") = py::none(),
      "Freshly initialized weights as an ordered dict of float32 arrays.");

  m.def(
      "forward",
      [](const py::dict& weights, const Array& images, const std::string& name,
         std::optional<std::size_t> input_size) {
        const ModelConfig c = profile(name, input_size);
        const WeightStore w = from_dict(weights);
        validate_weights(w, weight_manifest(c));
        const Tensor batch = from_numpy(images);
        Tensor probs;
        {
          py::gil_scoped_release release;
          Rng rng(0);
          probs = forward(c, w, batch, ops::Mode::kInfer, rng);
        }
        return to_numpy(probs);
      },
      py::arg("weights"), py::arg("images"), py::arg("profile") = "default", py::arg("input_size") = py::none(),
      "Driver probabilities (inference mode) for a B x 3 x S x S batch.");

  m.def(
      "save_weights", [](const py::dict& weights, const std::string& path) { swt::save_weights(from_dict(weights), path); },
      py::arg("weights"), py::arg("path"));

  m.def(
      "load_weights",
      [](const std::string& path, std::optional<std::string> name, std::optional<std::size_t> input_size,
         bool extractor_only) {
        if (!name) return to_dict(swt::load_weights(path));
        const auto manifest = manifest_for(name, input_size, extractor_only);
        return to_dict(swt::load_weights(path, &manifest));
      },
      py::arg("path"), py::arg("profile") = py::none(), py::arg("input_size") = py::none(),
      py::arg("extractor_only") = false,
      "Reads an SWT file; with a profile, also checks names and shapes against it.");

  m.def(
      "compute_metrics",
      [](const std::vector<double>& probs, const std::vector<int>& labels, double threshold) {
        const Metrics r = compute_metrics(probs, labels, threshold);
        py::dict d;
        d["threshold"] = r.threshold;
        d["counts"] = counts_dict(r.counts);
        d["accuracy"] = r.accuracy;
        return d;
      },
      py::arg("probabilities"), py::arg("labels"), py::arg("threshold") = 0.5);

  m.def("format_accuracy", &format_accuracy, py::arg("accuracy"));

  m.def(
      "split_by_car",
      [](const std::string& manifest_path, std::tuple<double, double, double> ratios, std::uint64_t seed) {
        const auto manifest = load_manifest(manifest_path);
        const auto split = split_by_car(manifest, {std::get<0>(ratios), std::get<1>(ratios), std::get<2>(ratios)}, seed);
        std::map<std::string, std::string> out;
        for (const auto& [car, s] : split.car_split) out[car] = std::string(to_string(s));
        return out;
      },
      py::arg("manifest"), py::arg("ratios") = std::tuple<double, double, double>{0.76, 0.10, 0.14},
      py::arg("seed") = 0, "car_id -> 'train' | 'dev' | 'test'.");

  m.def(
      "generate_synthetic",
      [](const std::filesystem::path& out_dir, std::size_t count, double driver_fraction, std::size_t image_size,
         double noise_level, std::uint64_t seed, std::size_t images_per_car) {
        synth::SynthSpec s{count, driver_fraction, image_size, noise_level, seed, images_per_car};
        const auto manifest = synth::generate(s, out_dir);
        return (out_dir / "manifest.csv").string();
      },
      py::arg("out_dir"), py::arg("count") = 2000, py::arg("driver_fraction") = 0.31, py::arg("image_size") = 128,
      py::arg("noise_level") = 0.05, py::arg("seed") = 1, py::arg("images_per_car") = 10,
      "Writes images plus manifest.csv and returns the manifest path.");

  m.def(
      "preprocess",
      [](const std::string& path, std::size_t input_size) {
        Rng rng(0);
        return to_numpy(image::preprocess_image(image::decode_image(path), ops::Mode::kInfer, rng,
                                                image::PreprocessConfig::for_input(input_size)));
      },
      py::arg("path"), py::arg("input_size") = 224, "Inference-mode 3 x S x S tensor in [-1, 1].");
}
