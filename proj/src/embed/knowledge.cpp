#include "abn/embed/knowledge.hpp"

#include <algorithm>
#include <cstring>
#include <map>
#include <numeric>
#include <random>

#include "abn/eval/metrics.hpp"
#include "abn/nn/optim.hpp"

namespace abn::embed {

ExpertMap make_expert_map(std::string sample_id, BinaryMask mask,
                          std::size_t map_size) {
  auto target = data::area_average(mask, map_size, map_size);
  return {std::move(sample_id), std::move(mask), std::move(target)};
}

std::vector<ExpertMap> expert_maps_from(
    const std::vector<data::LabeledSample>& samples, const model::ArchConfig& arch) {
  std::vector<ExpertMap> out;
  for (const auto& s : samples) {
    if (s.has_expert_mask()) {
      out.push_back(make_expert_map(s.id, *s.expert_mask, arch.map_size()));
    }
  }
  return out;
}

std::vector<Misidentified> collect_misidentified(
    const model::AbnModel& model, const std::vector<data::LabeledSample>& samples) {
  std::vector<Misidentified> out;
  for (const auto& s : samples) {
    auto o = model.forward(s.image);
    const std::size_t pred = model::argmax(o.perception_logits.value());
    if (pred != static_cast<std::size_t>(s.label)) {
      out.push_back({s.id, s.label, pred, o.attention_map.value()});
    }
  }
  return out;
}

model::TrainConfig default_finetune_config() {
  model::TrainConfig c;
  c.lr = 0.01;
  c.momentum = 0.5;
  c.epochs = 10;
  return c;
}

namespace {

struct MapStats {
  double accuracy = 0;
  double mean_lm = 0;
  double mean_iou = 0;
};

MapStats measure(const model::AbnModel& model,
                 const std::vector<data::LabeledSample>& samples,
                 const std::vector<const ExpertMap*>& target_of, double threshold) {
  MapStats st;
  std::size_t correct = 0, n_expert = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    auto out = model.forward(s.image);
    correct += model::argmax(out.perception_logits.value()) ==
               static_cast<std::size_t>(s.label);
    if (const ExpertMap* em = target_of[i]) {
      ++n_expert;
      st.mean_lm += nn::l2_distance(nn::Var<float>::constant(em->map_target),
                                    nn::Var<float>::constant(out.attention_map.value()))
                        .value()
                        .item();
      const auto region = eval::upsample_nearest(
          eval::binarize_map(out.attention_map.value(), threshold), em->mask.height,
          em->mask.width);
      st.mean_iou += eval::class_iou(region, em->mask);
    }
  }
  st.accuracy = samples.empty() ? 0.0
                                : static_cast<double>(correct) /
                                      static_cast<double>(samples.size());
  if (n_expert) {
    st.mean_lm /= static_cast<double>(n_expert);
    st.mean_iou /= static_cast<double>(n_expert);
  }
  return st;
}

}  // namespace

FinetuneResult finetune(const model::AbnModel& init,
                        const std::vector<data::LabeledSample>& samples,
                        const std::vector<ExpertMap>& expert_maps,
                        const model::TrainConfig& config, double iou_threshold) {
  if (config.batch_size < 1) throw ValueError("finetune: batch_size must be >= 1");
  if (!(config.lambda >= 0)) throw ValueError("finetune: lambda must be >= 0");

  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < samples.size(); ++i) index.emplace(samples[i].id, i);
  std::vector<const ExpertMap*> target_of(samples.size(), nullptr);
  std::string dangling;
  const std::size_t h = init.arch().map_size();
  for (const auto& em : expert_maps) {
    auto it = index.find(em.sample_id);
    if (it == index.end()) {
      dangling += (dangling.empty() ? "" : ", ") + em.sample_id;
      continue;
    }
    nn::require_shape(em.map_target.shape(), {h, h}, "finetune map_target");
    target_of[it->second] = &em;
  }
  if (!dangling.empty()) {
    throw ValueError("finetune: expert maps reference unknown samples: " + dangling);
  }

  FinetuneResult result{init, {}};
  auto& report = result.report;
  report.n_expert = expert_maps.size();
  const MapStats pre = measure(init, samples, target_of, iou_threshold);
  report.pre_accuracy = pre.accuracy;
  report.pre_mean_lm = pre.mean_lm;
  report.pre_mean_iou = pre.mean_iou;
  if (config.epochs == 0 || samples.empty()) {
    report.post_accuracy = pre.accuracy;
    report.post_mean_lm = pre.mean_lm;
    report.post_mean_iou = pre.mean_iou;
    return result;
  }
  if (!(config.lr > 0)) throw ValueError("finetune: lr must be > 0");

  auto& model = result.model;
  model.set_extractor_trainable(false);
  std::vector<nn::Var<float>> branch;
  for (const auto& p : model.parameters()) {
    if (!model::AbnModel::is_extractor_param(p.name)) branch.push_back(p.var);
  }
  nn::SgdMomentum<float> opt(branch, config.lr, config.momentum);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  const auto lambda = static_cast<float>(config.lambda);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    FinetuneEpoch log{epoch + 1, 0, 0, 0};
    std::size_t n_lm = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const float inv = 1.0f / static_cast<float>(end - start);
      opt.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const auto& s = samples[order[i]];
        const ExpertMap* em = target_of[order[i]];
        auto obj = sample_objective<float>(model, s.image,
                                           static_cast<std::size_t>(s.label),
                                           em ? &em->map_target : nullptr, lambda);
        log.mean_la += obj.la.value().item();
        log.mean_lp += obj.lp.value().item();
        if (em) {
          log.mean_lm += obj.lm.value().item();
          ++n_lm;
        }
        nn::backward(nn::scale(obj.total, inv));
      }
      if (config.clip_norm > 0) nn::clip_grad_norm(opt.params(), config.clip_norm);
      opt.step();
    }
    const double n = static_cast<double>(samples.size());
    log.mean_la /= n;
    log.mean_lp /= n;
    if (n_lm) log.mean_lm /= static_cast<double>(n_lm);
    report.epochs.push_back(log);
  }
  opt.zero_grad();
  model.set_extractor_trainable(true);

  const MapStats post = measure(model, samples, target_of, iou_threshold);
  report.post_accuracy = post.accuracy;
  report.post_mean_lm = post.mean_lm;
  report.post_mean_iou = post.mean_iou;
  return result;
}

std::uint64_t extractor_hash(const model::AbnModel& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : model.parameters()) {
    if (!model::AbnModel::is_extractor_param(p.name)) continue;
    for (float v : p.var.value().data()) {
      unsigned char bytes[sizeof(float)];
      std::memcpy(bytes, &v, sizeof v);
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

}  // namespace abn::embed
