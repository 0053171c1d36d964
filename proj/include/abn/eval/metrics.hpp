#pragma once

#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "abn/data/dataset.hpp"
#include "abn/model/abn_model.hpp"

namespace abn::eval {

using data::BinaryMask;

inline constexpr double kDefaultThreshold = 0.5;

// element >= threshold -> 1. threshold must be in (0,1).
BinaryMask binarize_map(const nn::Tensor<float>& map, double threshold = kDefaultThreshold);

// |A n B| / |A u B|; 1.0 when both are empty.
double class_iou(const BinaryMask& a, const BinaryMask& b);

// Nearest-neighbour resize; used to lift the coarse attention map to image
// resolution before comparing with an expert mask.
BinaryMask upsample_nearest(const BinaryMask& m, std::size_t height, std::size_t width);
nn::Tensor<float> upsample_nearest(const nn::Tensor<float>& map, std::size_t height,
                                   std::size_t width);

using Predictor = std::function<std::size_t(const data::LabeledSample&)>;

Predictor perception_predictor(const model::AbnModel& model);

double accuracy(const Predictor& predict, const std::vector<data::LabeledSample>& samples);
double accuracy(const model::AbnModel& model, const std::vector<data::LabeledSample>& samples);

// Accuracy restricted to each class; NaN for a class with no samples.
std::vector<double> per_class_accuracy(const Predictor& predict,
                                       const std::vector<data::LabeledSample>& samples,
                                       std::size_t num_classes = data::kNumClasses);

// Model attention map for `sample`, binarized and upsampled to image size.
BinaryMask attention_region(const model::AbnModel& model, const data::LabeledSample& sample,
                            double threshold = kDefaultThreshold);

struct EvalReport {
  std::string model_tag;
  double accuracy = 0;
  std::vector<double> per_class_accuracy;
  double mean_iou = 0;      // over diseased samples
  std::size_t n_samples = 0;
  std::size_t n_disease = 0;
  double threshold = kDefaultThreshold;
};

// Accuracy over every sample plus mean class IoU between the binarized
// model map and the expert mask over the diseased ones. Throws ValueError
// listing the ids of diseased samples without an expert mask.
EvalReport attention_iou_report(const model::AbnModel& model,
                                const std::vector<data::LabeledSample>& samples,
                                double threshold = kDefaultThreshold);

nlohmann::json to_json(const EvalReport& r);
EvalReport eval_report_from_json(const nlohmann::json& j);

// Fixed-width text table, one row per report.
std::string format_table(const std::vector<EvalReport>& reports);

}  // namespace abn::eval
