#pragma once

#include <cstdint>
#include <vector>

#include "abn/data/dataset.hpp"
#include "abn/model/abn_model.hpp"

namespace abn::model {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double lr = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 42;
  double lambda = 1.0;  // weight of the map-matching term; fine-tuning only
  double clip_norm = 1.0;  // global gradient-norm cap per step, 0 = off

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0;       // running mean of L_a + L_p over the epoch
  double train_accuracy = 0;  // perception-branch accuracy during the epoch
};

struct TrainResult {
  AbnModel model;
  std::vector<EpochLog> log;
  double initial_loss = 0;  // full-pass mean L_a + L_p before training
  double final_loss = 0;    // ... and after
};

// Converts a grayscale sample image to model input.
inline const nn::Tensor<float>& input_of(const data::LabeledSample& s) {
  return s.image;
}

// Mean of L_a + L_p over `samples`, one forward each.
double mean_base_loss(const AbnModel& model,
                      const std::vector<data::LabeledSample>& samples);

// Standard ABN training: mini-batch SGD with momentum on mean(L_a + L_p).
// Deterministic for a fixed config.seed.
TrainResult train(const AbnModel& init,
                  const std::vector<data::LabeledSample>& samples,
                  const TrainConfig& config);

}  // namespace abn::model
