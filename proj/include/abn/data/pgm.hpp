#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace abn::data {

struct GrayImage8 {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;
};

// Binary (P5) or ASCII (P2) portable graymap, maxval <= 255.
GrayImage8 read_pgm(const std::filesystem::path& path);
GrayImage8 decode_pgm(const std::string& bytes, const std::string& origin);
void write_pgm(const std::filesystem::path& path, const GrayImage8& image);
std::string encode_pgm(const GrayImage8& image);

}  // namespace abn::data
