#include "abn/model/arch.hpp"

#include <sstream>

#include "abn/error.hpp"

namespace abn::model {

std::size_t ArchConfig::parameter_count() const {
  auto conv = [](std::size_t in, std::size_t out, std::size_t k) {
    return out * in * k * k + out;
  };
  const auto& w = extractor_widths;
  const std::size_t k = num_classes;
  return conv(in_channels, w[0], 3) + conv(w[0], w[1], 3) + conv(w[1], w[2], 3) +
         conv(w[2], attention_width, 3) + conv(attention_width, k, 1) +
         conv(k, 1, 1) + conv(w[2], perception_width, 3) +
         (perception_width * k + k);
}

std::string ArchConfig::diff(const ArchConfig& o) const {
  std::ostringstream os;
  auto field = [&](const char* name, std::size_t a, std::size_t b) {
    if (a != b) {
      if (os.tellp() > 0) os << "; ";
      os << name << ": " << a << " vs " << b;
    }
  };
  field("input_size", input_size, o.input_size);
  field("in_channels", in_channels, o.in_channels);
  field("extractor_widths[0]", extractor_widths[0], o.extractor_widths[0]);
  field("extractor_widths[1]", extractor_widths[1], o.extractor_widths[1]);
  field("extractor_widths[2]", extractor_widths[2], o.extractor_widths[2]);
  field("attention_width", attention_width, o.attention_width);
  field("perception_width", perception_width, o.perception_width);
  field("num_classes", num_classes, o.num_classes);
  return os.str();
}

void ArchConfig::validate() const {
  if (input_size < 1 || in_channels < 1 || attention_width < 1 ||
      perception_width < 1 || num_classes < 2) {
    throw ValueError("ArchConfig: sizes must be positive and num_classes >= 2");
  }
  for (auto w : extractor_widths) {
    if (w < 1) throw ValueError("ArchConfig: extractor widths must be positive");
  }
}

}  // namespace abn::model
