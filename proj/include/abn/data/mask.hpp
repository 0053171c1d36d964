#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "abn/error.hpp"
#include "abn/nn/tensor.hpp"

namespace abn::data {

// 2-D {0,1} mask, row-major. Used for expert lesion masks, learner edits
// and binarized attention maps.
struct BinaryMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(std::size_t h, std::size_t w, std::uint8_t fill = 0)
      : height(h), width(w), bits(h * w, fill) {}
  BinaryMask(std::size_t h, std::size_t w, std::vector<std::uint8_t> values)
      : height(h), width(w), bits(std::move(values)) {
    if (bits.size() != h * w) throw ShapeError("BinaryMask: size mismatch");
    for (auto b : bits) {
      if (b > 1) throw ValueError("BinaryMask: values must be 0 or 1");
    }
  }

  std::uint8_t& at(std::size_t r, std::size_t c) { return bits[r * width + c]; }
  std::uint8_t at(std::size_t r, std::size_t c) const {
    return bits[r * width + c];
  }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : bits) n += b;
    return n;
  }
  bool any() const { return count() > 0; }
  bool same_size(const BinaryMask& o) const {
    return height == o.height && width == o.width;
  }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

// Fraction of covered pixels per output cell. The mask size must be an
// exact multiple of h x w.
nn::Tensor<float> area_average(const BinaryMask& mask, std::size_t h, std::size_t w);

}  // namespace abn::data
