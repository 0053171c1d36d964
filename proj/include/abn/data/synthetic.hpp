#pragma once

#include <cstdint>
#include <string>

#include "abn/data/dataset.hpp"

namespace abn::data {

// Stand-in for fundus corpora. Each image is a smooth random background
// confined to a circular disk, overlaid with dark vessel-like curves.
// Diseased images add 1-3 compact bright lesions inside the disk; the
// expert mask is the union of lesion supports dilated by one pixel.
// Pixel values are quantized to k/255 so the set survives 8-bit files.
struct SyntheticOptions {
  std::size_t image_size = 64;
  std::string id_prefix = "syn";
  Split split = Split::kTrain;
};

std::vector<LabeledSample> generate_synthetic(std::uint64_t seed,
                                              std::size_t n_normal,
                                              std::size_t n_diseased,
                                              const SyntheticOptions& opts = {});

struct CorpusSizes {
  std::size_t train_normal = 124;
  std::size_t train_diseased = 81;
  std::size_t test_normal = 30;
  std::size_t test_diseased = 30;
  std::size_t quiz_normal = 30;
  std::size_t quiz_diseased = 30;
};

// Train / test / quiz splits with disjoint id prefixes, one seed.
Dataset generate_corpus(std::uint64_t seed, const CorpusSizes& sizes = {},
                        std::size_t image_size = 64);

// Geometry of a generated image, recomputable from the sample id and seed;
// exposed so tests can check lesion placement against the disk.
struct DiskGeometry {
  double center_y = 0;
  double center_x = 0;
  double radius = 0;
  bool contains(double y, double x) const {
    const double dy = y - center_y, dx = x - center_x;
    return dy * dy + dx * dx <= radius * radius;
  }
};

struct SyntheticImage {
  LabeledSample sample;
  DiskGeometry disk;
  BinaryMask lesion_support;  // undilated
};

SyntheticImage generate_one(std::uint64_t seed, bool diseased,
                            std::size_t image_size, std::string id);

}  // namespace abn::data
