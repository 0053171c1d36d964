#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "abn/model/arch.hpp"
#include "abn/nn/ops.hpp"

namespace abn::model {

template <typename T>
struct AbnOutputs {
  nn::Var<T> features;           // g(x): C x h x w, post-relu
  nn::Var<T> attention_map;      // M(x): h x w, in [0,1]
  nn::Var<T> attention_logits;   // K, GAP over class-response maps
  nn::Var<T> perception_logits;  // K
};

template <typename T>
struct NamedParam {
  std::string name;
  nn::Var<T> var;
};

// How the attention mechanism g' = g * (1 + M) is driven.
enum class AttentionSource {
  kModel,     // the model's own M
  kOverride,  // a caller-supplied map (learner edits)
  kDisabled,  // g' = g
};

// Attention Branch Network.
//
//   image -> extractor (3 x [conv3x3 s2 -> relu]) -> g
//   g -> conv3x3 -> relu -> conv1x1 (K class-response maps)
//        -> GAP -> attention_logits
//        -> conv1x1 (K -> 1) -> sigmoid -> M
//   g * (1 + M) -> conv3x3 -> relu -> GAP -> linear -> perception_logits
//
// Copying deep-copies the parameters.
template <typename T>
class BasicAbnModel {
 public:
  explicit BasicAbnModel(ArchConfig arch = {}, std::uint64_t init_seed = 42)
      : arch_(arch) {
    arch_.validate();
    build(init_seed);
  }

  BasicAbnModel(const BasicAbnModel& other)
      : arch_(other.arch_), tag_(other.tag_) {
    params_.reserve(other.params_.size());
    for (const auto& p : other.params_) {
      params_.push_back({p.name, nn::Var<T>::leaf(p.var.value(),
                                                  p.var.requires_grad())});
    }
  }
  BasicAbnModel& operator=(const BasicAbnModel& other) {
    if (this != &other) {
      BasicAbnModel copy(other);
      *this = std::move(copy);
    }
    return *this;
  }
  BasicAbnModel(BasicAbnModel&&) noexcept = default;
  BasicAbnModel& operator=(BasicAbnModel&&) noexcept = default;

  template <typename U>
  BasicAbnModel<U> cast() const {
    BasicAbnModel<U> out(arch_);
    out.set_tag(tag_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      out.parameters()[i].var.mutable_value() =
          params_[i].var.value().template cast<U>();
    }
    return out;
  }

  const ArchConfig& arch() const { return arch_; }
  const std::string& tag() const { return tag_; }
  void set_tag(std::string tag) { tag_ = std::move(tag); }

  std::vector<NamedParam<T>>& parameters() { return params_; }
  const std::vector<NamedParam<T>>& parameters() const { return params_; }

  std::vector<nn::Var<T>> parameter_vars() const {
    std::vector<nn::Var<T>> out;
    for (const auto& p : params_) out.push_back(p.var);
    return out;
  }

  static bool is_extractor_param(const std::string& name) {
    return name.rfind("extractor.", 0) == 0;
  }

  void set_extractor_trainable(bool on) {
    for (auto& p : params_) {
      if (is_extractor_param(p.name)) p.var.set_requires_grad(on);
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.var.zero_grad();
  }

  // Accepts H x W (grayscale) or C x H x W. Each image is standardized to
  // zero mean and unit variance over all its pixels.
  nn::Var<T> prepare_input(const nn::Tensor<T>& image) const {
    const auto n = arch_.input_size;
    const bool flat = image.rank() == 2 && arch_.in_channels == 1 &&
                      image.shape() == nn::Shape{n, n};
    if (!flat && !(image.rank() == 3 &&
                   image.shape() == nn::Shape{arch_.in_channels, n, n})) {
      throw ShapeError("model expects input " +
                       nn::shape_str({arch_.in_channels, n, n}) + ", got " +
                       nn::shape_str(image.shape()));
    }
    nn::Tensor<T> x = image.reshaped({arch_.in_channels, n, n});
    standardize(x);
    return nn::Var<T>::constant(std::move(x));
  }

  static void standardize(nn::Tensor<T>& x) {
    double mean = 0;
    for (T v : x.data()) mean += static_cast<double>(v);
    mean /= static_cast<double>(x.size());
    double ss = 0;
    for (T v : x.data()) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(x.size())) + 1e-6;
    for (T& v : x.data()) v = static_cast<T>((v - mean) / sd);
  }

  nn::Var<T> extract(const nn::Tensor<T>& image) const {
    nn::Var<T> x = prepare_input(image);
    x = conv_block(x, kExtractor0, 2, 1);
    x = conv_block(x, kExtractor1, 2, 1);
    x = conv_block(x, kExtractor2, 2, 1);
    return x;
  }

  // Returns {attention_logits, attention_map}.
  std::pair<nn::Var<T>, nn::Var<T>> attention_branch(
      const nn::Var<T>& features) const {
    nn::Var<T> a = conv_block(features, kAttentionConv, 1, 1);
    nn::Var<T> responses = conv(a, kClassConv, 1, 0);
    nn::Var<T> logits = nn::global_average_pool(responses);
    nn::Var<T> raw = conv(responses, kMapConv, 1, 0);
    const auto h = arch_.map_size();
    nn::Var<T> map = nn::sigmoid(nn::reshape(raw, {h, h}));
    return {logits, map};
  }

  nn::Var<T> perception_branch(const nn::Var<T>& weighted) const {
    nn::Var<T> p = conv_block(weighted, kPerceptionConv, 1, 1);
    nn::Var<T> pooled = nn::global_average_pool(p);
    return nn::linear(pooled, var(kHeadWeight), var(kHeadBias));
  }

  AbnOutputs<T> forward(const nn::Tensor<T>& image) const {
    return forward_impl(image, AttentionSource::kModel, nullptr);
  }

  // Attention mechanism fed with `map` (h x w) instead of the model's M.
  AbnOutputs<T> forward_with_map(const nn::Tensor<T>& image,
                                 const nn::Tensor<T>& map) const {
    return forward_impl(image, AttentionSource::kOverride, &map);
  }

  AbnOutputs<T> forward_without_attention(const nn::Tensor<T>& image) const {
    return forward_impl(image, AttentionSource::kDisabled, nullptr);
  }

 private:
  enum Index : std::size_t {
    kExtractor0, kExtractor1, kExtractor2, kAttentionConv, kClassConv,
    kMapConv, kPerceptionConv, kNumConvs
  };
  static constexpr std::size_t kHeadWeight = 2 * kNumConvs;
  static constexpr std::size_t kHeadBias = 2 * kNumConvs + 1;

  const nn::Var<T>& var(std::size_t i) const { return params_[i].var; }

  nn::Var<T> conv(const nn::Var<T>& x, std::size_t idx, std::size_t stride,
                  std::size_t pad) const {
    return nn::add_channel_bias(nn::conv2d(x, var(2 * idx), stride, pad),
                                var(2 * idx + 1));
  }
  nn::Var<T> conv_block(const nn::Var<T>& x, std::size_t idx,
                        std::size_t stride, std::size_t pad) const {
    return nn::relu(conv(x, idx, stride, pad));
  }

  AbnOutputs<T> forward_impl(const nn::Tensor<T>& image, AttentionSource src,
                             const nn::Tensor<T>* override_map) const {
    AbnOutputs<T> out;
    out.features = extract(image);
    auto [logits, map] = attention_branch(out.features);
    out.attention_logits = logits;
    out.attention_map = map;
    nn::Var<T> weighted;
    switch (src) {
      case AttentionSource::kModel:
        weighted = nn::scale_by_map(out.features, map);
        break;
      case AttentionSource::kOverride:
        weighted = nn::scale_by_map(out.features,
                                    nn::Var<T>::constant(*override_map));
        break;
      case AttentionSource::kDisabled:
        weighted = out.features;
        break;
    }
    out.perception_logits = perception_branch(weighted);
    return out;
  }

  void add_conv(const std::string& name, std::size_t in, std::size_t out,
                std::size_t k, std::mt19937_64& rng) {
    const double sd = std::sqrt(2.0 / static_cast<double>(in * k * k));
    std::normal_distribution<double> dist(0.0, sd);
    nn::Tensor<T> w({out, in, k, k});
    for (auto& v : w.data()) v = static_cast<T>(dist(rng));
    params_.push_back({name + ".weight", nn::Var<T>::leaf(std::move(w), true)});
    params_.push_back(
        {name + ".bias", nn::Var<T>::leaf(nn::Tensor<T>({out}), true)});
  }

  void build(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto& w = arch_.extractor_widths;
    const auto k = arch_.num_classes;
    add_conv("extractor.conv1", arch_.in_channels, w[0], 3, rng);
    add_conv("extractor.conv2", w[0], w[1], 3, rng);
    add_conv("extractor.conv3", w[1], w[2], 3, rng);
    add_conv("attention.conv", w[2], arch_.attention_width, 3, rng);
    add_conv("attention.class_conv", arch_.attention_width, k, 1, rng);
    add_conv("attention.map_conv", k, 1, 1, rng);
    add_conv("perception.conv", w[2], arch_.perception_width, 3, rng);
    const double sd = std::sqrt(1.0 / static_cast<double>(arch_.perception_width));
    std::normal_distribution<double> dist(0.0, sd);
    nn::Tensor<T> fc({k, arch_.perception_width});
    for (auto& v : fc.data()) v = static_cast<T>(dist(rng));
    params_.push_back({"perception.fc.weight", nn::Var<T>::leaf(std::move(fc), true)});
    params_.push_back({"perception.fc.bias", nn::Var<T>::leaf(nn::Tensor<T>({k}), true)});
  }

  ArchConfig arch_;
  std::string tag_;
  std::vector<NamedParam<T>> params_;
};

using AbnModel = BasicAbnModel<float>;

// Cross-entropy of each branch against `label`: {L_a, L_p}.
template <typename T>
std::pair<nn::Var<T>, nn::Var<T>> base_loss(const AbnOutputs<T>& out,
                                            std::size_t label) {
  const std::size_t k = out.perception_logits.value().size();
  if (label >= k) {
    throw ValueError("label " + std::to_string(label) + " invalid for " +
                     std::to_string(k) + " classes");
  }
  return {nn::cross_entropy(out.attention_logits, label),
          nn::cross_entropy(out.perception_logits, label)};
}

// argmax, ties to the lower index
template <typename T>
std::size_t argmax(const nn::Tensor<T>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace abn::model
