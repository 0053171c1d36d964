#include "abn/eval/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace abn::eval {

BinaryMask binarize_map(const nn::Tensor<float>& map, double threshold) {
  if (!(threshold > 0 && threshold < 1)) {
    throw ValueError("binarize_map: threshold must lie in (0,1)");
  }
  if (map.rank() != 2) {
    throw ShapeError("binarize_map: expected an HxW map, got " +
                     nn::shape_str(map.shape()));
  }
  BinaryMask out(map.dim(0), map.dim(1));
  for (std::size_t i = 0; i < map.size(); ++i) {
    out.bits[i] = static_cast<double>(map[i]) >= threshold ? 1 : 0;
  }
  return out;
}

double class_iou(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_size(b)) {
    throw ShapeError("class_iou: masks differ in size (" +
                     std::to_string(a.height) + "x" + std::to_string(a.width) +
                     " vs " + std::to_string(b.height) + "x" +
                     std::to_string(b.width) + ")");
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    inter += a.bits[i] & b.bits[i];
    uni += a.bits[i] | b.bits[i];
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

BinaryMask upsample_nearest(const BinaryMask& m, std::size_t height,
                            std::size_t width) {
  BinaryMask out(height, width);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = y * m.height / height;
    for (std::size_t x = 0; x < width; ++x) {
      out.at(y, x) = m.at(sy, x * m.width / width);
    }
  }
  return out;
}

nn::Tensor<float> upsample_nearest(const nn::Tensor<float>& map,
                                   std::size_t height, std::size_t width) {
  if (map.rank() != 2) throw ShapeError("upsample_nearest: expected HxW map");
  nn::Tensor<float> out({height, width});
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = y * map.dim(0) / height;
    for (std::size_t x = 0; x < width; ++x) {
      out.at(y, x) = map.at(sy, x * map.dim(1) / width);
    }
  }
  return out;
}

Predictor perception_predictor(const model::AbnModel& model) {
  return [&model](const data::LabeledSample& s) {
    return model::argmax(model.forward(s.image).perception_logits.value());
  };
}

double accuracy(const Predictor& predict,
                const std::vector<data::LabeledSample>& samples) {
  if (samples.empty()) throw ValueError("accuracy: dataset is empty");
  std::size_t correct = 0;
  for (const auto& s : samples) {
    if (predict(s) == static_cast<std::size_t>(s.label)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

double accuracy(const model::AbnModel& model,
                const std::vector<data::LabeledSample>& samples) {
  return accuracy(perception_predictor(model), samples);
}

std::vector<double> per_class_accuracy(
    const Predictor& predict, const std::vector<data::LabeledSample>& samples,
    std::size_t num_classes) {
  std::vector<std::size_t> hit(num_classes, 0), total(num_classes, 0);
  for (const auto& s : samples) {
    const auto label = static_cast<std::size_t>(s.label);
    if (label >= num_classes) throw ValueError("per_class_accuracy: bad label");
    ++total[label];
    if (predict(s) == label) ++hit[label];
  }
  std::vector<double> out(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    out[c] = total[c] ? static_cast<double>(hit[c]) / static_cast<double>(total[c])
                      : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

BinaryMask attention_region(const model::AbnModel& model,
                            const data::LabeledSample& sample, double threshold) {
  auto out = model.forward(sample.image);
  return upsample_nearest(binarize_map(out.attention_map.value(), threshold),
                          sample.height(), sample.width());
}

EvalReport attention_iou_report(const model::AbnModel& model,
                                const std::vector<data::LabeledSample>& samples,
                                double threshold) {
  if (samples.empty()) throw ValueError("attention_iou_report: dataset is empty");
  std::string missing;
  for (const auto& s : samples) {
    if (s.label == 1 && !s.has_expert_mask()) {
      missing += (missing.empty() ? "" : ", ") + s.id;
    }
  }
  if (!missing.empty()) {
    throw ValueError("attention_iou_report: diseased samples without expert mask: " +
                     missing);
  }

  EvalReport r;
  r.model_tag = model.tag();
  r.threshold = threshold;
  r.n_samples = samples.size();
  std::size_t correct = 0;
  std::vector<std::size_t> hit(data::kNumClasses, 0), total(data::kNumClasses, 0);
  double iou_sum = 0;
  for (const auto& s : samples) {
    auto out = model.forward(s.image);
    const auto label = static_cast<std::size_t>(s.label);
    const bool ok = model::argmax(out.perception_logits.value()) == label;
    correct += ok;
    ++total[label];
    hit[label] += ok;
    if (s.label == 1) {
      const auto region = upsample_nearest(
          binarize_map(out.attention_map.value(), threshold), s.height(), s.width());
      iou_sum += class_iou(region, *s.expert_mask);
      ++r.n_disease;
    }
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n_samples);
  for (std::size_t c = 0; c < data::kNumClasses; ++c) {
    r.per_class_accuracy.push_back(
        total[c] ? static_cast<double>(hit[c]) / static_cast<double>(total[c])
                 : std::numeric_limits<double>::quiet_NaN());
  }
  r.mean_iou = r.n_disease ? iou_sum / static_cast<double>(r.n_disease) : 0.0;
  return r;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json per = nlohmann::json::array();
  for (double v : r.per_class_accuracy) {
    per.push_back(std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v));
  }
  return {{"model_tag", r.model_tag}, {"accuracy", r.accuracy},
          {"per_class_accuracy", per}, {"mean_iou", r.mean_iou},
          {"n_samples", r.n_samples}, {"n_disease", r.n_disease},
          {"threshold", r.threshold}};
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.model_tag = j.at("model_tag").get<std::string>();
  r.accuracy = j.at("accuracy").get<double>();
  for (const auto& v : j.at("per_class_accuracy")) {
    r.per_class_accuracy.push_back(
        v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>());
  }
  r.mean_iou = j.at("mean_iou").get<double>();
  r.n_samples = j.at("n_samples").get<std::size_t>();
  r.n_disease = j.at("n_disease").get<std::size_t>();
  r.threshold = j.at("threshold").get<double>();
  return r;
}

std::string format_table(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %9s %9s %9s %9s %6s %6s\n", "model",
                "accuracy", "acc(nor)", "acc(dis)", "mean_iou", "n", "n_dis");
  os << line;
  for (const auto& r : reports) {
    const double a0 = r.per_class_accuracy.size() > 0 ? r.per_class_accuracy[0] : NAN;
    const double a1 = r.per_class_accuracy.size() > 1 ? r.per_class_accuracy[1] : NAN;
    std::snprintf(line, sizeof line, "%-12s %9.4f %9.4f %9.4f %9.4f %6zu %6zu\n",
                  r.model_tag.empty() ? "-" : r.model_tag.c_str(), r.accuracy, a0,
                  a1, r.mean_iou, r.n_samples, r.n_disease);
    os << line;
  }
  return os.str();
}

}  // namespace abn::eval
