#include "abn/model/train.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "abn/nn/optim.hpp"

namespace abn::model {

void TrainConfig::validate() const {
  if (epochs < 1) throw ValueError("TrainConfig: epochs must be >= 1");
  if (batch_size < 1) throw ValueError("TrainConfig: batch_size must be >= 1");
  if (!(lr > 0)) throw ValueError("TrainConfig: lr must be > 0");
  if (!(momentum >= 0 && momentum < 1)) {
    throw ValueError("TrainConfig: momentum must be in [0, 1)");
  }
  if (!(lambda >= 0)) throw ValueError("TrainConfig: lambda must be >= 0");
}

double mean_base_loss(const AbnModel& model,
                      const std::vector<data::LabeledSample>& samples) {
  if (samples.empty()) return 0.0;
  double total = 0;
  for (const auto& s : samples) {
    auto out = model.forward(input_of(s));
    auto [la, lp] = base_loss(out, static_cast<std::size_t>(s.label));
    total += static_cast<double>(la.value().item()) + lp.value().item();
  }
  return total / static_cast<double>(samples.size());
}

TrainResult train(const AbnModel& init,
                  const std::vector<data::LabeledSample>& samples,
                  const TrainConfig& config) {
  config.validate();
  if (samples.empty()) throw ValueError("train: dataset is empty");
  for (const auto& s : samples) {
    if (s.label < 0 ||
        static_cast<std::size_t>(s.label) >= init.arch().num_classes) {
      throw ValueError("train: sample " + s.id + " has out-of-range label");
    }
  }

  TrainResult result{init, {}, 0, 0};
  AbnModel& model = result.model;
  result.initial_loss = mean_base_loss(model, samples);

  nn::SgdMomentum<float> opt(model.parameter_vars(), config.lr, config.momentum);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const float inv = 1.0f / static_cast<float>(end - start);
      opt.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const auto& s = samples[order[i]];
        auto out = model.forward(input_of(s));
        auto [la, lp] = base_loss(out, static_cast<std::size_t>(s.label));
        auto loss = nn::scale(nn::add(la, lp), inv);
        loss_sum += static_cast<double>(la.value().item()) + lp.value().item();
        if (argmax(out.perception_logits.value()) ==
            static_cast<std::size_t>(s.label)) {
          ++correct;
        }
        nn::backward(loss);
      }
      if (config.clip_norm > 0) nn::clip_grad_norm(opt.params(), config.clip_norm);
      opt.step();
    }
    const double n = static_cast<double>(samples.size());
    result.log.push_back({epoch + 1, loss_sum / n, correct / n});
  }
  opt.zero_grad();
  result.final_loss = mean_base_loss(model, samples);
  return result;
}

}  // namespace abn::model
