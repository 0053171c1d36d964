#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "abn/nn/var.hpp"

namespace abn::nn {

// One heavy-ball update in place:
//   v <- momentum * v + g
//   p <- p - lr * v
// With momentum 0 this is plain p <- p - lr * g.
template <typename T>
void momentum_step(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& velocity,
                   T lr, T momentum) {
  require_shape(grad.shape(), param.shape(), "momentum_step grad");
  require_shape(velocity.shape(), param.shape(), "momentum_step velocity");
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grad[i];
    param[i] -= lr * velocity[i];
  }
}

// Rescales all gradients so their joint L2 norm is at most `max_norm`.
// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(std::vector<Var<T>>& params, double max_norm) {
  double ss = 0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (T g : p.grad().data()) ss += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(ss);
  if (norm > max_norm && norm > 0) {
    const T f = static_cast<T>(max_norm / norm);
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (T& g : p.node().grad.data()) g *= f;
    }
  }
  return norm;
}

template <typename T>
class SgdMomentum {
 public:
  SgdMomentum(std::vector<Var<T>> params, double lr, double momentum)
      : params_(std::move(params)), lr_(lr), momentum_(momentum) {
    if (!(lr > 0)) throw ValueError("SgdMomentum: lr must be > 0");
    if (!(momentum >= 0 && momentum < 1)) {
      throw ValueError("SgdMomentum: momentum must be in [0, 1)");
    }
    velocity_.reserve(params_.size());
    for (const auto& p : params_) velocity_.emplace_back(p.shape());
  }

  // Params without a gradient (frozen, or untouched by the loss) are skipped.
  void step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (!p.requires_grad() || !p.has_grad()) continue;
      momentum_step(p.mutable_value(), p.grad(), velocity_[i],
                    static_cast<T>(lr_), static_cast<T>(momentum_));
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  double lr() const { return lr_; }
  std::vector<Var<T>>& params() { return params_; }

 private:
  std::vector<Var<T>> params_;
  std::vector<Tensor<T>> velocity_;
  double lr_;
  double momentum_;
};

}  // namespace abn::nn
