#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "abn/data/mask.hpp"
#include "abn/nn/tensor.hpp"

namespace abn::data {

enum class Label : int { kNormal = 0, kDiseased = 1 };
inline constexpr std::size_t kNumClasses = 2;

enum class Split { kTrain, kTest, kQuiz };

std::string_view split_name(Split s);
Split parse_split(std::string_view name);

struct LabeledSample {
  std::string id;
  nn::Tensor<float> image;  // H x W grayscale, values in [0,1]
  int label = 0;
  std::optional<BinaryMask> expert_mask;
  Split split = Split::kTrain;

  std::size_t height() const { return image.dim(0); }
  std::size_t width() const { return image.dim(1); }
  bool has_expert_mask() const { return expert_mask && expert_mask->any(); }

  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

// Throws ValueError describing the first violated invariant.
void validate_sample(const LabeledSample& s);

struct Dataset {
  std::vector<LabeledSample> samples;  // sorted by id

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  std::vector<LabeledSample> split(Split s) const;
  const LabeledSample* find(std::string_view id) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline constexpr int kManifestSchemaVersion = 1;

// Manifest: JSON document
//   {"schema_version": 1,
//    "samples": [{"id", "split", "label", "image", "mask"?}, ...]}
// with image/mask paths relative to the manifest's directory. Images are
// 8-bit PGM; masks are 8-bit PGM with 0 / 255.
Dataset load_dataset(const std::filesystem::path& manifest_path);

// Writes <dir>/manifest.json plus images/ and masks/ PGM files and returns
// the manifest path. Image values are quantized to k/255.
std::filesystem::path write_dataset(const Dataset& dataset,
                                    const std::filesystem::path& dir);

}  // namespace abn::data
