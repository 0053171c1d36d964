#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "support/fd.hpp"

namespace abn::test {

struct NamedCheck {
  std::string name;
  GradCheck result;
};

// Finite-difference check of every nn-core operator on small random shapes.
inline std::vector<NamedCheck> operator_gradient_checks() {
  using namespace nn;
  std::vector<NamedCheck> out;
  std::mt19937_64 rng(2024);
  auto check = [&](std::string name, const LossFn& f, std::vector<TensorD> in) {
    out.push_back({std::move(name), check_gradients(f, std::move(in))});
  };

  for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 1}, {2, 1}, {1, 0}, {2, 2}}) {
    check("conv2d s" + std::to_string(stride) + " p" + std::to_string(pad),
        [=](const std::vector<VarD>& v) { return weighted_sum(conv2d(v[0], v[1], stride, pad)); },
        {random_tensor({2, 5, 5}, rng), random_tensor({3, 2, 3, 3}, rng)});
  }
  check("add_channel_bias",
      [](const std::vector<VarD>& v) { return weighted_sum(add_channel_bias(v[0], v[1])); },
      {random_tensor({3, 2, 4}, rng), random_tensor({3}, rng)});
  check("relu", [](const std::vector<VarD>& v) { return weighted_sum(relu(v[0])); },
      {random_away_from_zero({4, 3}, rng)});
  check("sigmoid", [](const std::vector<VarD>& v) { return weighted_sum(sigmoid(v[0])); },
      {random_tensor({3, 3}, rng, -3, 3)});
  check("global_average_pool",
      [](const std::vector<VarD>& v) { return weighted_sum(global_average_pool(v[0])); },
      {random_tensor({3, 4, 2}, rng)});
  check("linear", [](const std::vector<VarD>& v) { return weighted_sum(linear(v[0], v[1], v[2])); },
      {random_tensor({5}, rng), random_tensor({3, 5}, rng), random_tensor({3}, rng)});
  check("scale_by_map", [](const std::vector<VarD>& v) { return weighted_sum(scale_by_map(v[0], v[1])); },
      {random_tensor({3, 4, 4}, rng), random_tensor({4, 4}, rng, 0, 1)});
  check("reshape/add/mul/scale/sum",
      [](const std::vector<VarD>& v) {
        return weighted_sum(scale(mul(add(reshape(v[0], {2, 6}), v[1]), v[1]), 0.7));
      },
      {random_tensor({3, 4}, rng), random_tensor({2, 6}, rng)});
  check("softmax", [](const std::vector<VarD>& v) { return weighted_sum(softmax(v[0])); },
      {random_tensor({4}, rng, -2, 2)});
  for (std::size_t k : {2u, 5u}) {
    check("cross_entropy K=" + std::to_string(k),
        [](const std::vector<VarD>& v) { return cross_entropy(v[0], 1); },
        {random_tensor({k}, rng, -3, 3)});
  }
  check("l2_distance", [](const std::vector<VarD>& v) { return l2_distance(v[0], v[1]); },
      {random_tensor({4, 4}, rng), random_tensor({4, 4}, rng)});
  return out;
}

}  // namespace abn::test
