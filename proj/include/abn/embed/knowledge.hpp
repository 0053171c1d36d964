#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "abn/data/dataset.hpp"
#include "abn/model/train.hpp"

namespace abn::embed {

using data::BinaryMask;

// Expert-corrected attention for one training sample: the image-resolution
// mask as drawn, and its area-averaged form at attention-map resolution,
// which is the regression target of the map-matching term.
struct ExpertMap {
  std::string sample_id;
  BinaryMask mask;
  nn::Tensor<float> map_target;  // h x w, continuous in [0,1]
};

ExpertMap make_expert_map(std::string sample_id, BinaryMask mask, std::size_t map_size);

// One ExpertMap per sample carrying a non-empty expert mask.
std::vector<ExpertMap> expert_maps_from(const std::vector<data::LabeledSample>& samples,
                                        const model::ArchConfig& arch);

struct Misidentified {
  std::string sample_id;
  int label = 0;
  std::size_t predicted = 0;
  nn::Tensor<float> attention_map;
};

// Samples whose perception-branch prediction differs from the label, with
// the attention map the model produced for them.
std::vector<Misidentified> collect_misidentified(
    const model::AbnModel& model, const std::vector<data::LabeledSample>& samples);

// ||target - map||_2 over all elements.
template <typename T>
nn::Var<T> map_matching_loss(const nn::Var<T>& target, const nn::Var<T>& map) {
  return nn::l2_distance(target, map);
}

// L = L_a + L_p + lambda * L_m
template <typename T>
nn::Var<T> total_loss(const nn::Var<T>& la, const nn::Var<T>& lp,
                      const nn::Var<T>& lm, T lambda) {
  if (!(lambda >= T(0))) throw ValueError("total_loss: lambda must be >= 0");
  return nn::add(nn::add(la, lp), nn::scale(lm, lambda));
}

inline double total_loss(double la, double lp, double lm, double lambda) {
  if (!(lambda >= 0)) throw ValueError("total_loss: lambda must be >= 0");
  return la + lp + lambda * lm;
}

template <typename T>
struct SampleObjective {
  nn::Var<T> la;
  nn::Var<T> lp;
  nn::Var<T> lm;  // undefined when the sample has no expert map
  nn::Var<T> total;
};

// Per-sample fine-tuning objective. Without a target the map term is
// dropped (lambda treated as 0).
template <typename T>
SampleObjective<T> sample_objective(const model::BasicAbnModel<T>& model,
                                    const nn::Tensor<T>& image, std::size_t label,
                                    const nn::Tensor<T>* map_target, T lambda) {
  auto out = model.forward(image);
  auto [la, lp] = model::base_loss(out, label);
  SampleObjective<T> obj{la, lp, {}, {}};
  if (map_target) {
    obj.lm = map_matching_loss(nn::Var<T>::constant(*map_target), out.attention_map);
    obj.total = total_loss(la, lp, obj.lm, lambda);
  } else {
    obj.total = nn::add(la, lp);
  }
  return obj;
}

struct FinetuneEpoch {
  std::size_t epoch = 0;
  double mean_la = 0;
  double mean_lp = 0;
  double mean_lm = 0;  // over expert-mapped samples only
};

struct FinetuneReport {
  std::vector<FinetuneEpoch> epochs;
  double pre_accuracy = 0;
  double post_accuracy = 0;
  double pre_mean_lm = 0;
  double post_mean_lm = 0;
  double pre_mean_iou = 0;   // IoU(binarized M, expert mask), expert-mapped samples
  double post_mean_iou = 0;
  std::size_t n_expert = 0;
};

struct FinetuneResult {
  model::AbnModel model;
  FinetuneReport report;
};

// lr 0.01, momentum 0.5, 10 epochs, otherwise the training defaults.
model::TrainConfig default_finetune_config();

// Fine-tunes the attention and perception branches on `samples` with the
// objective above; the extractor is frozen and comes back bitwise
// unchanged. Every ExpertMap must name a sample in `samples` (checked
// before any update). Zero epochs returns the model unchanged.
FinetuneResult finetune(const model::AbnModel& model,
                        const std::vector<data::LabeledSample>& samples,
                        const std::vector<ExpertMap>& expert_maps,
                        const model::TrainConfig& config,
                        double iou_threshold = 0.5);

// FNV-1a over the raw bytes of every extractor parameter.
std::uint64_t extractor_hash(const model::AbnModel& model);

}  // namespace abn::embed
