#pragma once

#include <cmath>
#include <vector>

#include "abn/model/abn_model.hpp"

namespace abn::test {

// Direct nested-loop convolution with zero padding.
inline nn::Tensor<double> reference_conv(const nn::Tensor<double>& x, const nn::Tensor<double>& k,
                                         std::size_t stride, std::size_t pad) {
  const std::size_t ci = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t co = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
  const std::size_t ow = (w + 2 * pad - kw) / stride + 1;
  nn::Tensor<double> out({co, oh, ow});
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t r = 0; r < oh; ++r)
      for (std::size_t c = 0; c < ow; ++c) {
        double acc = 0;
        for (std::size_t i = 0; i < ci; ++i)
          for (std::size_t a = 0; a < kh; ++a)
            for (std::size_t b = 0; b < kw; ++b) {
              const long y = static_cast<long>(r * stride + a) - static_cast<long>(pad);
              const long xx = static_cast<long>(c * stride + b) - static_cast<long>(pad);
              if (y < 0 || xx < 0 || y >= static_cast<long>(h) || xx >= static_cast<long>(w))
                continue;
              acc += x.at(i, static_cast<std::size_t>(y), static_cast<std::size_t>(xx)) *
                     k[((o * ci + i) * kh + a) * kw + b];
            }
        out.at(o, r, c) = acc;
      }
  return out;
}

struct ReferenceOutputs {
  std::vector<double> features;
  std::vector<double> map;
  std::vector<double> attention_logits;
  std::vector<double> perception_logits;
};

// Straight-line re-evaluation of the network from its named parameters.
// `map_override` (h x w) replaces M when given; `no_attention` uses g as is.
inline ReferenceOutputs reference_forward(const model::BasicAbnModel<double>& m,
                                          const nn::Tensor<double>& image,
                                          const nn::Tensor<double>* map_override = nullptr,
                                          bool no_attention = false) {
  auto param = [&](const std::string& name) -> const nn::Tensor<double>& {
    for (const auto& p : m.parameters())
      if (p.name == name) return p.var.value();
    throw std::runtime_error("missing " + name);
  };
  auto conv_bias = [&](const nn::Tensor<double>& x, const std::string& name, std::size_t stride,
                       std::size_t pad, bool relu) {
    auto y = reference_conv(x, param(name + ".weight"), stride, pad);
    const auto& b = param(name + ".bias");
    const std::size_t plane = y.dim(1) * y.dim(2);
    for (std::size_t c = 0; c < y.dim(0); ++c)
      for (std::size_t i = 0; i < plane; ++i) {
        double& v = y[c * plane + i];
        v += b[c];
        if (relu && v < 0) v = 0;
      }
    return y;
  };
  auto gap = [](const nn::Tensor<double>& x) {
    std::vector<double> out(x.dim(0), 0.0);
    const std::size_t plane = x.dim(1) * x.dim(2);
    for (std::size_t c = 0; c < x.dim(0); ++c) {
      for (std::size_t i = 0; i < plane; ++i) out[c] += x[c * plane + i];
      out[c] /= static_cast<double>(plane);
    }
    return out;
  };

  const std::size_t n = image.dim(0) * image.dim(1);
  double mean = 0, ss = 0;
  for (double v : image.data()) mean += v;
  mean /= static_cast<double>(n);
  for (double v : image.data()) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n)) + 1e-6;
  nn::Tensor<double> x({1, image.dim(0), image.dim(1)});
  for (std::size_t i = 0; i < n; ++i) x[i] = (image[i] - mean) / sd;

  auto g = conv_bias(x, "extractor.conv1", 2, 1, true);
  g = conv_bias(g, "extractor.conv2", 2, 1, true);
  g = conv_bias(g, "extractor.conv3", 2, 1, true);

  auto a = conv_bias(g, "attention.conv", 1, 1, true);
  auto responses = conv_bias(a, "attention.class_conv", 1, 0, false);
  auto raw = conv_bias(responses, "attention.map_conv", 1, 0, false);

  ReferenceOutputs out;
  out.features = g.vec();
  out.attention_logits = gap(responses);
  for (double v : raw.data()) out.map.push_back(1.0 / (1.0 + std::exp(-v)));

  nn::Tensor<double> weighted = g;
  const std::size_t plane = g.dim(1) * g.dim(2);
  if (!no_attention) {
    for (std::size_t c = 0; c < g.dim(0); ++c)
      for (std::size_t i = 0; i < plane; ++i) {
        const double mv = map_override ? (*map_override)[i] : out.map[i];
        weighted[c * plane + i] *= 1.0 + mv;
      }
  }
  auto p = conv_bias(weighted, "perception.conv", 1, 1, true);
  auto pooled = gap(p);
  const auto& w = param("perception.fc.weight");
  const auto& b = param("perception.fc.bias");
  for (std::size_t k = 0; k < w.dim(0); ++k) {
    double acc = b[k];
    for (std::size_t c = 0; c < w.dim(1); ++c) acc += w.at(k, c) * pooled[c];
    out.perception_logits.push_back(acc);
  }
  return out;
}

}  // namespace abn::test
