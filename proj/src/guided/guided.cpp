#include "abn/guided/guided.hpp"

#include <algorithm>
#include <cmath>

namespace abn::guided {

BinaryMask resample_edit(const BinaryMask& mask_image, std::size_t h, std::size_t w) {
  for (auto b : mask_image.bits) {
    if (b > 1) throw ValueError("resample_edit: mask must contain only 0 and 1");
  }
  const auto coverage = data::area_average(mask_image, h, w);
  BinaryMask out(h, w);
  for (std::size_t i = 0; i < coverage.size(); ++i) {
    out.bits[i] = coverage[i] >= 0.5f ? 1 : 0;
  }
  return out;
}

EditedAttentionMap make_edit(std::string sample_id, BinaryMask mask_image,
                             const model::ArchConfig& arch) {
  const auto n = arch.input_size;
  if (mask_image.height != n || mask_image.width != n) {
    throw ShapeError("edit mask must be " + std::to_string(n) + "x" +
                     std::to_string(n) + ", got " + std::to_string(mask_image.height) +
                     "x" + std::to_string(mask_image.width));
  }
  if (mask_image.bits.size() != n * n) {
    throw ShapeError("edit mask data does not match its declared size");
  }
  const auto h = arch.map_size();
  BinaryMask map = resample_edit(mask_image, h, h);
  return {std::move(sample_id), std::move(mask_image), std::move(map)};
}

GuidedResult result_from_logits(const nn::Tensor<float>& logits, BinaryMask map_used) {
  std::vector<double> z(logits.data().begin(), logits.data().end());
  const double mx = *std::max_element(z.begin(), z.end());
  double total = 0;
  for (auto& v : z) {
    v = std::exp(v - mx);
    total += v;
  }
  for (auto& v : z) v /= total;
  GuidedResult r;
  r.predicted_class = model::argmax(logits);
  r.probabilities = std::move(z);
  r.map_used = std::move(map_used);
  return r;
}

GuidedResult guided_forward(const model::AbnModel& model, const nn::Tensor<float>& image,
                            const EditedAttentionMap& edit) {
  const auto h = model.arch().map_size();
  if (edit.map.height != h || edit.map.width != h) {
    throw ShapeError("guided_forward: edited map is " + std::to_string(edit.map.height) +
                     "x" + std::to_string(edit.map.width) + ", model map is " +
                     std::to_string(h) + "x" + std::to_string(h));
  }
  nn::Tensor<float> map({h, h});
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (edit.map.bits[i] > 1) throw ValueError("guided_forward: map is not binary");
    map[i] = static_cast<float>(edit.map.bits[i]);
  }
  auto out = model.forward_with_map(image, map);
  return result_from_logits(out.perception_logits.value(), edit.map);
}

GuidedResult unguided_forward(const model::AbnModel& model,
                              const nn::Tensor<float>& image) {
  const auto h = model.arch().map_size();
  auto out = model.forward_without_attention(image);
  return result_from_logits(out.perception_logits.value(), BinaryMask(h, h));
}

ScoreTrace score_trace(const std::vector<GuidedResult>& history) {
  ScoreTrace trace;
  if (history.empty()) return trace;
  const std::size_t k = history.front().probabilities.size();
  trace.per_class.assign(k, {});
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto& r = history[i];
    trace.entries.push_back({i, r.map_used, r.probabilities, r.predicted_class});
    for (std::size_t c = 0; c < k && c < r.probabilities.size(); ++c) {
      trace.per_class[c].push_back(r.probabilities[c]);
    }
  }
  return trace;
}

}  // namespace abn::guided
