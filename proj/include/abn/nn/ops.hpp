#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "abn/nn/var.hpp"

namespace abn::nn {

namespace detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

struct ConvGeometry {
  std::size_t in_c, in_h, in_w;
  std::size_t out_c, k_h, k_w;
  std::size_t out_h, out_w;
  std::size_t stride, pad;
  std::size_t col_rows() const { return in_c * k_h * k_w; }
  std::size_t col_cols() const { return out_h * out_w; }
};

// cols[(c*kh + i)*kw + j][oy*ow + ox] = input[c][oy*s + i - p][ox*s + j - p]
template <typename T>
void im2col(const T* in, const ConvGeometry& g, T* cols) {
  const std::size_t ncols = g.col_cols();
  for (std::size_t c = 0; c < g.in_c; ++c) {
    for (std::size_t i = 0; i < g.k_h; ++i) {
      for (std::size_t j = 0; j < g.k_w; ++j) {
        T* row = cols + ((c * g.k_h + i) * g.k_w + j) * ncols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long y = static_cast<long>(oy * g.stride + i) -
                         static_cast<long>(g.pad);
          T* dst = row + oy * g.out_w;
          if (y < 0 || y >= static_cast<long>(g.in_h)) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = in + (c * g.in_h + static_cast<std::size_t>(y)) * g.in_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long x = static_cast<long>(ox * g.stride + j) -
                           static_cast<long>(g.pad);
            dst[ox] = (x < 0 || x >= static_cast<long>(g.in_w))
                          ? T(0)
                          : src[static_cast<std::size_t>(x)];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* in_grad) {
  const std::size_t ncols = g.col_cols();
  for (std::size_t c = 0; c < g.in_c; ++c) {
    for (std::size_t i = 0; i < g.k_h; ++i) {
      for (std::size_t j = 0; j < g.k_w; ++j) {
        const T* row = cols + ((c * g.k_h + i) * g.k_w + j) * ncols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long y = static_cast<long>(oy * g.stride + i) -
                         static_cast<long>(g.pad);
          if (y < 0 || y >= static_cast<long>(g.in_h)) continue;
          T* dst = in_grad + (c * g.in_h + static_cast<std::size_t>(y)) * g.in_w;
          const T* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long x = static_cast<long>(ox * g.stride + j) -
                           static_cast<long>(g.pad);
            if (x >= 0 && x < static_cast<long>(g.in_w)) {
              dst[static_cast<std::size_t>(x)] += src[ox];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void require_finite(const Tensor<T>& t, const char* what) {
  if (!t.all_finite()) {
    throw ValueError(std::string(what) + ": non-finite input");
  }
}

}  // namespace detail

// 2-D cross-correlation with zero padding. input C_in x H x W,
// kernel C_out x C_in x kH x kW.
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& kernel, std::size_t stride,
              std::size_t pad) {
  const Shape& is = input.shape();
  const Shape& ks = kernel.shape();
  if (is.size() != 3 || ks.size() != 4) {
    throw ShapeError("conv2d: input must be CxHxW and kernel OxCxKhxKw, got " +
                     shape_str(is) + " and " + shape_str(ks));
  }
  if (ks[1] != is[0]) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(ks[1]) +
                     " input channels, input " + shape_str(is) + " has " +
                     std::to_string(is[0]));
  }
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (ks[2] > is[1] + 2 * pad || ks[3] > is[2] + 2 * pad) {
    throw ShapeError("conv2d: kernel " + shape_str(ks) +
                     " larger than padded input " + shape_str(is) +
                     " (pad " + std::to_string(pad) + ")");
  }
  detail::ConvGeometry g{is[0], is[1], is[2], ks[0], ks[2], ks[3],
                         (is[1] + 2 * pad - ks[2]) / stride + 1,
                         (is[2] + 2 * pad - ks[3]) / stride + 1,
                         stride, pad};

  auto cols = std::make_shared<std::vector<T>>(g.col_rows() * g.col_cols());
  detail::im2col(input.value().data().data(), g, cols->data());

  Tensor<T> out(Shape{g.out_c, g.out_h, g.out_w});
  detail::ConstMatMap<T> K(kernel.value().data().data(), g.out_c, g.col_rows());
  detail::ConstMatMap<T> C(cols->data(), g.col_rows(), g.col_cols());
  detail::MatMap<T> O(out.data().data(), g.out_c, g.col_cols());
  O.noalias() = K * C;

  return Var<T>::from_op(
      std::move(out), {input, kernel}, [g, cols](Node<T>& self) {
        detail::ConstMatMap<T> dO(self.grad.data().data(), g.out_c, g.col_cols());
        auto& in_node = *self.parents[0];
        auto& k_node = *self.parents[1];
        if (k_node.requires_grad) {
          detail::MatMap<T> dK(k_node.grad_buffer().data().data(), g.out_c,
                               g.col_rows());
          detail::ConstMatMap<T> C(cols->data(), g.col_rows(), g.col_cols());
          dK.noalias() += dO * C.transpose();
        }
        if (in_node.requires_grad) {
          detail::ConstMatMap<T> K(k_node.value.data().data(), g.out_c,
                                   g.col_rows());
          std::vector<T> dcols(g.col_rows() * g.col_cols());
          detail::MatMap<T> dC(dcols.data(), g.col_rows(), g.col_cols());
          dC.noalias() = K.transpose() * dO;
          detail::col2im_add(dcols.data(), g,
                             in_node.grad_buffer().data().data());
        }
      });
}

// x: C x H x W, bias: C
template <typename T>
Var<T> add_channel_bias(const Var<T>& x, const Var<T>& bias) {
  const Shape& s = x.shape();
  if (s.size() != 3 || bias.shape() != Shape{s[0]}) {
    throw ShapeError("add_channel_bias: x " + shape_str(s) + ", bias " +
                     shape_str(bias.shape()));
  }
  const std::size_t plane = s[1] * s[2];
  Tensor<T> out = x.value();
  for (std::size_t c = 0; c < s[0]; ++c) {
    const T b = bias.value()[c];
    for (std::size_t k = 0; k < plane; ++k) out[c * plane + k] += b;
  }
  return Var<T>::from_op(std::move(out), {x, bias}, [plane](Node<T>& self) {
    auto& xn = *self.parents[0];
    auto& bn = *self.parents[1];
    if (xn.requires_grad) {
      auto& gx = xn.grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
    }
    if (bn.requires_grad) {
      auto& gb = bn.grad_buffer();
      for (std::size_t c = 0; c < gb.size(); ++c) {
        T acc = 0;
        for (std::size_t k = 0; k < plane; ++k) acc += self.grad[c * plane + k];
        gb[c] += acc;
      }
    }
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v = v > T(0) ? v : T(0);
  return Var<T>::from_op(std::move(out), {x}, [](Node<T>& self) {
    auto& xn = *self.parents[0];
    auto& gx = xn.grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (xn.value[i] > T(0)) gx[i] += self.grad[i];
    }
  });
}

template <typename T>
T sigmoid_scalar(T v) {
  // Split on sign so exp() never overflows.
  if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
  const T e = std::exp(v);
  return e / (T(1) + e);
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v = sigmoid_scalar(v);
  return Var<T>::from_op(out, {x}, [out](Node<T>& self) {
    auto& gx = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      gx[i] += self.grad[i] * out[i] * (T(1) - out[i]);
    }
  });
}

// C x H x W -> C
template <typename T>
Var<T> global_average_pool(const Var<T>& x) {
  const Shape& s = x.shape();
  if (s.size() != 3 || s[1] == 0 || s[2] == 0) {
    throw ShapeError("global_average_pool: need CxHxW with H,W >= 1, got " +
                     shape_str(s));
  }
  const std::size_t plane = s[1] * s[2];
  Tensor<T> out(Shape{s[0]});
  for (std::size_t c = 0; c < s[0]; ++c) {
    T acc = 0;
    for (std::size_t k = 0; k < plane; ++k) acc += x.value()[c * plane + k];
    out[c] = acc / static_cast<T>(plane);
  }
  return Var<T>::from_op(std::move(out), {x}, [plane](Node<T>& self) {
    auto& gx = self.parents[0]->grad_buffer();
    const T inv = T(1) / static_cast<T>(plane);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      gx[i] += self.grad[i / plane] * inv;
    }
  });
}

// y = W x + b with W: K x N, x: N, b: K
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const Shape& ws = weight.shape();
  if (ws.size() != 2 || x.shape() != Shape{ws[1]} ||
      bias.shape() != Shape{ws[0]}) {
    throw ShapeError("linear: x " + shape_str(x.shape()) + ", weight " +
                     shape_str(ws) + ", bias " + shape_str(bias.shape()));
  }
  const std::size_t k = ws[0], n = ws[1];
  Tensor<T> out = bias.value();
  for (std::size_t r = 0; r < k; ++r) {
    T acc = 0;
    for (std::size_t c = 0; c < n; ++c) acc += weight.value().at(r, c) * x.value()[c];
    out[r] += acc;
  }
  return Var<T>::from_op(std::move(out), {x, weight, bias},
                         [k, n](Node<T>& self) {
    auto& xn = *self.parents[0];
    auto& wn = *self.parents[1];
    auto& bn = *self.parents[2];
    if (xn.requires_grad) {
      auto& gx = xn.grad_buffer();
      for (std::size_t r = 0; r < k; ++r) {
        for (std::size_t c = 0; c < n; ++c) gx[c] += wn.value.at(r, c) * self.grad[r];
      }
    }
    if (wn.requires_grad) {
      auto& gw = wn.grad_buffer();
      for (std::size_t r = 0; r < k; ++r) {
        for (std::size_t c = 0; c < n; ++c) gw.at(r, c) += self.grad[r] * xn.value[c];
      }
    }
    if (bn.requires_grad) {
      auto& gb = bn.grad_buffer();
      for (std::size_t r = 0; r < k; ++r) gb[r] += self.grad[r];
    }
  });
}

// Attention mechanism: features C x h x w reweighted by a single-channel
// map h x w broadcast over channels, out = g * (1 + m).
template <typename T>
Var<T> scale_by_map(const Var<T>& features, const Var<T>& map) {
  const Shape& s = features.shape();
  if (s.size() != 3 || map.shape() != Shape{s[1], s[2]}) {
    throw ShapeError("scale_by_map: features " + shape_str(s) + ", map " +
                     shape_str(map.shape()) + " (map must be HxW of features)");
  }
  const std::size_t plane = s[1] * s[2];
  Tensor<T> out = features.value();
  for (std::size_t c = 0; c < s[0]; ++c) {
    for (std::size_t k = 0; k < plane; ++k) {
      out[c * plane + k] *= T(1) + map.value()[k];
    }
  }
  return Var<T>::from_op(std::move(out), {features, map},
                         [plane](Node<T>& self) {
    auto& gn = *self.parents[0];
    auto& mn = *self.parents[1];
    const std::size_t channels = gn.value.size() / plane;
    if (gn.requires_grad) {
      auto& gg = gn.grad_buffer();
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t k = 0; k < plane; ++k) {
          gg[c * plane + k] += self.grad[c * plane + k] * (T(1) + mn.value[k]);
        }
      }
    }
    if (mn.requires_grad) {
      auto& gm = mn.grad_buffer();
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t k = 0; k < plane; ++k) {
          gm[k] += self.grad[c * plane + k] * gn.value[c * plane + k];
        }
      }
    }
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  if (shape_size(shape) != x.value().size()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " +
                     shape_str(shape));
  }
  return Var<T>::from_op(x.value().reshaped(std::move(shape)), {x},
                         [](Node<T>& self) {
    auto& gx = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_shape(b.shape(), a.shape(), "add");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return Var<T>::from_op(std::move(out), {a, b}, [](Node<T>& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_shape(b.shape(), a.shape(), "mul");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return Var<T>::from_op(std::move(out), {a, b}, [](Node<T>& self) {
    auto& an = *self.parents[0];
    auto& bn = *self.parents[1];
    if (an.requires_grad) {
      auto& g = an.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn.value[i];
    }
    if (bn.requires_grad) {
      auto& g = bn.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an.value[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& x, T factor) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v *= factor;
  return Var<T>::from_op(std::move(out), {x}, [factor](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  T acc = 0;
  for (T v : x.value().data()) acc += v;
  return Var<T>::from_op(Tensor<T>::scalar(acc), {x}, [](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    const T up = self.grad[0];
    for (auto& v : g.data()) v += up;
  });
}

template <typename T>
Tensor<T> softmax_values(const Tensor<T>& logits) {
  if (logits.rank() != 1 || logits.size() == 0) {
    throw ShapeError("softmax: expected non-empty vector, got " +
                     shape_str(logits.shape()));
  }
  detail::require_finite(logits, "softmax");
  Tensor<T> out = logits;
  const T mx = *std::max_element(out.data().begin(), out.data().end());
  T z = 0;
  for (auto& v : out.data()) {
    v = std::exp(v - mx);
    z += v;
  }
  for (auto& v : out.data()) v /= z;
  return out;
}

template <typename T>
Var<T> softmax(const Var<T>& logits) {
  Tensor<T> p = softmax_values(logits.value());
  return Var<T>::from_op(p, {logits}, [p](Node<T>& self) {
    T dot = 0;
    for (std::size_t i = 0; i < p.size(); ++i) dot += self.grad[i] * p[i];
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < p.size(); ++i) g[i] += p[i] * (self.grad[i] - dot);
  });
}

// -log softmax(logits)[label], computed via log-sum-exp.
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::size_t label) {
  const Tensor<T>& z = logits.value();
  if (z.rank() != 1 || z.size() == 0) {
    throw ShapeError("cross_entropy: logits must be a vector, got " +
                     shape_str(z.shape()));
  }
  if (label >= z.size()) {
    throw ValueError("cross_entropy: label " + std::to_string(label) +
                     " out of range for " + std::to_string(z.size()) +
                     " classes");
  }
  detail::require_finite(z, "cross_entropy");
  Tensor<T> p = softmax_values(z);
  const T mx = *std::max_element(z.data().begin(), z.data().end());
  T lse = 0;
  for (T v : z.data()) lse += std::exp(v - mx);
  lse = std::log(lse) + mx;
  return Var<T>::from_op(Tensor<T>::scalar(lse - z[label]), {logits},
                         [p, label](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    const T up = self.grad[0];
    for (std::size_t i = 0; i < p.size(); ++i) {
      g[i] += up * (p[i] - (i == label ? T(1) : T(0)));
    }
  });
}

// Euclidean norm of (a - b) over all elements. The gradient at a == b is
// taken as zero (the subgradient of smallest norm).
template <typename T>
Var<T> l2_distance(const Var<T>& a, const Var<T>& b) {
  require_shape(b.shape(), a.shape(), "l2_distance");
  T ss = 0;
  for (std::size_t i = 0; i < a.value().size(); ++i) {
    const T d = a.value()[i] - b.value()[i];
    ss += d * d;
  }
  const T norm = std::sqrt(ss);
  return Var<T>::from_op(Tensor<T>::scalar(norm), {a, b},
                         [norm](Node<T>& self) {
    if (norm == T(0)) return;
    auto& an = *self.parents[0];
    auto& bn = *self.parents[1];
    const T up = self.grad[0] / norm;
    for (std::size_t i = 0; i < an.value.size(); ++i) {
      const T d = (an.value[i] - bn.value[i]) * up;
      if (an.requires_grad) an.grad_buffer()[i] += d;
      if (bn.requires_grad) bn.grad_buffer()[i] -= d;
    }
  });
}

}  // namespace abn::nn
