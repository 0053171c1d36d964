#include "abn/data/mask.hpp"

namespace abn::data {

nn::Tensor<float> area_average(const BinaryMask& mask, std::size_t h, std::size_t w) {
  if (h == 0 || w == 0 || mask.height % h != 0 || mask.width % w != 0) {
    throw ShapeError("area_average: " + std::to_string(mask.height) + "x" +
                     std::to_string(mask.width) + " is not a multiple of " +
                     std::to_string(h) + "x" + std::to_string(w));
  }
  const std::size_t bh = mask.height / h, bw = mask.width / w;
  nn::Tensor<float> out({h, w});
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      std::size_t n = 0;
      for (std::size_t y = r * bh; y < (r + 1) * bh; ++y) {
        for (std::size_t x = c * bw; x < (c + 1) * bw; ++x) n += mask.at(y, x);
      }
      out.at(r, c) = static_cast<float>(n) / static_cast<float>(bh * bw);
    }
  }
  return out;
}

}  // namespace abn::data
