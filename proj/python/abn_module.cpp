#include <memory>
#include <string>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "abn/data/dataset.hpp"
#include "abn/data/synthetic.hpp"
#include "abn/embed/knowledge.hpp"
#include "abn/eval/metrics.hpp"
#include "abn/guided/guided.hpp"
#include "abn/model/checkpoint.hpp"
#include "abn/model/train.hpp"
#include "abn/tutor/api.hpp"
#include "abn/tutor/service.hpp"

namespace py = pybind11;
using namespace abn;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

nn::Tensor<float> to_tensor(const FloatArray& a) {
  nn::Shape shape(a.shape(), a.shape() + a.ndim());
  return nn::Tensor<float>(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> to_numpy(const nn::Tensor<float>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> out(shape);
  std::copy(t.vec().begin(), t.vec().end(), out.mutable_data());
  return out;
}

data::BinaryMask to_mask(const ByteArray& a) {
  if (a.ndim() != 2) throw ShapeError("mask must be 2-D");
  return data::BinaryMask(static_cast<std::size_t>(a.shape(0)),
                          static_cast<std::size_t>(a.shape(1)),
                          std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
}

py::array_t<std::uint8_t> mask_to_numpy(const data::BinaryMask& m) {
  py::array_t<std::uint8_t> out({static_cast<py::ssize_t>(m.height),
                                 static_cast<py::ssize_t>(m.width)});
  std::copy(m.bits.begin(), m.bits.end(), out.mutable_data());
  return out;
}

py::dict outputs_dict(const model::AbnOutputs<float>& o) {
  py::dict d;
  d["attention_map"] = to_numpy(o.attention_map.value());
  d["attention_logits"] = to_numpy(o.attention_logits.value());
  d["perception_logits"] = to_numpy(o.perception_logits.value());
  return d;
}

py::dict result_dict(const guided::GuidedResult& r) {
  py::dict d;
  d["probabilities"] = r.probabilities;
  d["predicted_class"] = r.predicted_class;
  d["map_used"] = mask_to_numpy(r.map_used);
  return d;
}

// Holds the teacher alive alongside the service.
struct PyService {
  std::shared_ptr<const tutor::Teacher> teacher;
  std::unique_ptr<tutor::TutorService> service;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Attention branch network tutor core";

  py::register_exception<Error>(m, "AbnError", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ValueError>(m, "InvalidValueError", PyExc_ValueError);
  py::register_exception<StateError>(m, "StateError", PyExc_RuntimeError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  py::enum_<data::Split>(m, "Split")
      .value("train", data::Split::kTrain)
      .value("test", data::Split::kTest)
      .value("quiz", data::Split::kQuiz);

  py::class_<data::LabeledSample>(m, "Sample")
      .def_readonly("id", &data::LabeledSample::id)
      .def_readonly("label", &data::LabeledSample::label)
      .def_readonly("split", &data::LabeledSample::split)
      .def_property_readonly("image", [](const data::LabeledSample& s) { return to_numpy(s.image); })
      .def_property_readonly("expert_mask", [](const data::LabeledSample& s) -> py::object {
        if (!s.expert_mask) return py::none();
        return mask_to_numpy(*s.expert_mask);
      });

  py::class_<data::Dataset>(m, "Dataset")
      .def("__len__", &data::Dataset::size)
      .def_readonly("samples", &data::Dataset::samples)
      .def("split", &data::Dataset::split)
      .def("find", [](const data::Dataset& d, const std::string& id) -> py::object {
        const auto* s = d.find(id);
        if (!s) return py::none();
        return py::cast(*s);
      });

  m.def("generate_corpus",
        [](std::uint64_t seed, std::size_t image_size) {
          return data::generate_corpus(seed, {}, image_size);
        },
        py::arg("seed") = 42, py::arg("image_size") = 64);
  m.def("write_dataset", &data::write_dataset, py::arg("dataset"), py::arg("directory"));
  m.def("load_dataset", &data::load_dataset, py::arg("manifest"));

  py::class_<model::ArchConfig>(m, "ArchConfig")
      .def(py::init<>())
      .def_readwrite("input_size", &model::ArchConfig::input_size)
      .def_readwrite("num_classes", &model::ArchConfig::num_classes)
      .def_property_readonly("map_size", &model::ArchConfig::map_size)
      .def_property_readonly("parameter_count", &model::ArchConfig::parameter_count);

  py::class_<model::TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("epochs", &model::TrainConfig::epochs)
      .def_readwrite("batch_size", &model::TrainConfig::batch_size)
      .def_readwrite("lr", &model::TrainConfig::lr)
      .def_readwrite("momentum", &model::TrainConfig::momentum)
      .def_readwrite("seed", &model::TrainConfig::seed)
      .def_readwrite("lambda_", &model::TrainConfig::lambda)
      .def_readwrite("clip_norm", &model::TrainConfig::clip_norm);
  m.def("default_finetune_config", &embed::default_finetune_config);

  py::class_<model::AbnModel>(m, "Model")
      .def(py::init<model::ArchConfig, std::uint64_t>(), py::arg("arch") = model::ArchConfig{},
           py::arg("init_seed") = 42)
      .def_property("tag", &model::AbnModel::tag, &model::AbnModel::set_tag)
      .def_property_readonly("arch", &model::AbnModel::arch)
      .def("forward", [](const model::AbnModel& mdl, const FloatArray& image) {
        return outputs_dict(mdl.forward(to_tensor(image)));
      })
      .def("forward_with_map",
           [](const model::AbnModel& mdl, const FloatArray& image, const FloatArray& map) {
             return outputs_dict(mdl.forward_with_map(to_tensor(image), to_tensor(map)));
           })
      .def("forward_without_attention", [](const model::AbnModel& mdl, const FloatArray& image) {
        return outputs_dict(mdl.forward_without_attention(to_tensor(image)));
      })
      .def("parameters", [](const model::AbnModel& mdl) {
        py::dict d;
        for (const auto& p : mdl.parameters()) d[py::str(p.name)] = to_numpy(p.var.value());
        return d;
      })
      .def("save", [](const model::AbnModel& mdl, const std::filesystem::path& path) {
        model::save_checkpoint(mdl, path);
      });

  m.def("load_checkpoint",
        [](const std::filesystem::path& path) { return model::load_checkpoint<float>(path); },
        py::arg("path"));

  m.def("train",
        [](const model::AbnModel& init, const std::vector<data::LabeledSample>& samples,
           const model::TrainConfig& cfg) {
          model::TrainResult r = [&] {
            py::gil_scoped_release release;
            return model::train(init, samples, cfg);
          }();
          return py::make_tuple(std::move(r.model), r.initial_loss, r.final_loss);
        },
        py::arg("model"), py::arg("samples"), py::arg("config") = model::TrainConfig{},
        "Returns (model, initial_loss, final_loss).");

  m.def("finetune",
        [](const model::AbnModel& base, const std::vector<data::LabeledSample>& samples,
           const model::TrainConfig& cfg) {
          auto maps = embed::expert_maps_from(samples, base.arch());
          embed::FinetuneResult r = [&] {
            py::gil_scoped_release release;
            return embed::finetune(base, samples, maps, cfg);
          }();
          py::dict rep;
          rep["n_expert"] = r.report.n_expert;
          rep["pre_accuracy"] = r.report.pre_accuracy;
          rep["post_accuracy"] = r.report.post_accuracy;
          rep["pre_mean_lm"] = r.report.pre_mean_lm;
          rep["post_mean_lm"] = r.report.post_mean_lm;
          rep["pre_mean_iou"] = r.report.pre_mean_iou;
          rep["post_mean_iou"] = r.report.post_mean_iou;
          return py::make_tuple(std::move(r.model), rep);
        },
        py::arg("model"), py::arg("samples"), py::arg("config") = embed::default_finetune_config(),
        "Fine-tunes with the samples' expert masks. Returns (model, report).");
  m.def("extractor_hash", &embed::extractor_hash);

  m.def("evaluate",
        [](const model::AbnModel& mdl, const std::vector<data::LabeledSample>& samples,
           double threshold) {
          return eval::to_json(eval::attention_iou_report(mdl, samples, threshold)).dump();
        },
        py::arg("model"), py::arg("samples"), py::arg("threshold") = 0.5,
        "Evaluation report as a JSON string.");
  m.def("class_iou", [](const ByteArray& a, const ByteArray& b) {
    return eval::class_iou(to_mask(a), to_mask(b));
  });

  m.def("guided_forward",
        [](const model::AbnModel& mdl, const FloatArray& image, const ByteArray& mask) {
          auto edit = guided::make_edit("", to_mask(mask), mdl.arch());
          return result_dict(guided::guided_forward(mdl, to_tensor(image), edit));
        },
        py::arg("model"), py::arg("image"), py::arg("mask"),
        "Perception output with the learner's image-resolution mask as the attention map.");
  m.def("resample_edit", [](const ByteArray& mask, std::size_t h, std::size_t w) {
    return mask_to_numpy(guided::resample_edit(to_mask(mask), h, w));
  });

  py::class_<PyService>(m, "TutorService")
      .def(py::init([](const model::AbnModel& mdl, const data::Dataset& ds, bool reveal_expert) {
             tutor::TeacherConfig tc;
             tc.reveal_expert_mask = reveal_expert;
             auto teacher = std::make_shared<const tutor::Teacher>(
                 std::make_shared<const model::AbnModel>(mdl), ds, tc);
             return PyService{teacher, std::make_unique<tutor::TutorService>(teacher)};
           }),
           py::arg("model"), py::arg("dataset"), py::arg("reveal_expert_mask") = false)
      .def("request",
           [](PyService& s, const std::string& method, const std::string& path,
              const std::string& body) {
             auto r = tutor::dispatch(*s.service, method, path, body);
             return py::make_tuple(r.status, r.body.dump());
           },
           py::arg("method"), py::arg("path"), py::arg("body") = "",
           "Routes one API call; returns (status, json_text).");
}
