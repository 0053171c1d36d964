#pragma once

#include <filesystem>
#include <optional>

#include "abn/model/abn_model.hpp"

namespace abn::model {

// Checkpoint container, all integers and floats little-endian:
//
//   magic        8 bytes  "ABNCKPT\0"
//   version      u32      kCheckpointVersion
//   scalar_bytes u32      4 (float32) or 8 (float64)
//   tag          u32 length + UTF-8 bytes
//   arch         8 x u64  input_size, in_channels, extractor_widths[3],
//                         attention_width, perception_width, num_classes
//   n_params     u32
//   per param:   u32 name length, name bytes, u32 rank, rank x u64 dims,
//                prod(dims) scalars
//   checksum     u64      FNV-1a over every preceding byte
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const BasicAbnModel<T>& model,
                     const std::filesystem::path& path);

// Throws CorruptError on truncation / checksum failure, VersionError on a
// version or precision mismatch, ValueError (with the field diff) when
// `expected` is given and the stored arch differs.
template <typename T>
BasicAbnModel<T> load_checkpoint(const std::filesystem::path& path,
                                 const std::optional<ArchConfig>& expected = {});

}  // namespace abn::model
