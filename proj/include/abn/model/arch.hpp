#pragma once

#include <array>
#include <cstddef>
#include <string>

namespace abn::model {

// Shape of the network. Parameter count is a pure function of this.
struct ArchConfig {
  std::size_t input_size = 64;  // square, grayscale
  std::size_t in_channels = 1;
  std::array<std::size_t, 3> extractor_widths{16, 32, 64};
  std::size_t attention_width = 64;
  std::size_t perception_width = 64;
  std::size_t num_classes = 2;

  // Spatial side of the feature map / attention map: three stride-2,
  // pad-1, 3x3 convolutions.
  std::size_t map_size() const {
    std::size_t s = input_size;
    for (int i = 0; i < 3; ++i) s = (s + 2 - 3) / 2 + 1;
    return s;
  }
  std::size_t feature_channels() const { return extractor_widths[2]; }

  std::size_t parameter_count() const;

  // Human-readable list of differing fields, empty when equal.
  std::string diff(const ArchConfig& other) const;

  void validate() const;

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

}  // namespace abn::model
