#pragma once

#include <string>
#include <vector>

#include "abn/data/mask.hpp"
#include "abn/model/abn_model.hpp"

namespace abn::guided {

using data::BinaryMask;

// A learner's painted attention: the image-resolution mask and the binary
// map it becomes at model resolution.
struct EditedAttentionMap {
  std::string sample_id;
  BinaryMask mask_image;
  BinaryMask map;
};

// Area-average pool to h x w, then cell = 1 iff coverage >= 0.5.
BinaryMask resample_edit(const BinaryMask& mask_image, std::size_t h, std::size_t w);

// Validates that `mask_image` matches the model input size and is binary.
EditedAttentionMap make_edit(std::string sample_id, BinaryMask mask_image,
                             const model::ArchConfig& arch);

struct GuidedResult {
  std::vector<double> probabilities;  // softmax of perception logits
  std::size_t predicted_class = 0;    // argmax, ties to the lower index
  BinaryMask map_used;

  friend bool operator==(const GuidedResult&, const GuidedResult&) = default;
};

// Perception branch on g * (1 + M') with the binary map broadcast across
// every feature channel. M' replaces the model's own attention map.
GuidedResult guided_forward(const model::AbnModel& model, const nn::Tensor<float>& image,
                            const EditedAttentionMap& edit);

// Same read-out with the attention mechanism switched off (g' = g).
GuidedResult unguided_forward(const model::AbnModel& model, const nn::Tensor<float>& image);

// Softmax in double precision so the probabilities sum to 1 within 1e-9.
GuidedResult result_from_logits(const nn::Tensor<float>& logits, BinaryMask map_used);

struct TraceEntry {
  std::size_t index = 0;
  BinaryMask map;
  std::vector<double> probabilities;
  std::size_t predicted_class = 0;
};

// Score evolution across a learner's edits, in submission order.
struct ScoreTrace {
  std::vector<TraceEntry> entries;
  // per_class[c][i]: probability of class c after edit i
  std::vector<std::vector<double>> per_class;

  std::size_t size() const { return entries.size(); }
  // Probability as a displayed score, in percent.
  static double percent(double p) { return 100.0 * p; }
};

ScoreTrace score_trace(const std::vector<GuidedResult>& history);

}  // namespace abn::guided
