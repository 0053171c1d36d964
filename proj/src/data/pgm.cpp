#include "abn/data/pgm.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <sstream>

#include "abn/error.hpp"

namespace abn::data {
namespace {

class HeaderReader {
 public:
  HeaderReader(const std::string& bytes, const std::string& origin)
      : bytes_(bytes), origin_(origin) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number() {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < bytes_.size() &&
           std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      v = v * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (v > (1u << 24)) throw CorruptError(origin_ + ": PGM value too large");
      ++pos_;
    }
    if (pos_ == start) throw CorruptError(origin_ + ": malformed PGM header");
    return v;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  const std::string& bytes_;
  const std::string& origin_;
  std::size_t pos_ = 2;
};

}  // namespace

GrayImage8 decode_pgm(const std::string& bytes, const std::string& origin) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '2')) {
    throw CorruptError(origin + ": not a PGM (P5/P2) file");
  }
  const bool binary = bytes[1] == '5';
  HeaderReader hr(bytes, origin);
  GrayImage8 img;
  img.width = hr.number();
  img.height = hr.number();
  const std::size_t maxval = hr.number();
  if (maxval == 0 || maxval > 255) {
    throw CorruptError(origin + ": only 8-bit PGM supported (maxval " +
                       std::to_string(maxval) + ")");
  }
  const std::size_t n = img.width * img.height;
  img.pixels.resize(n);
  if (binary) {
    hr.advance(1);  // single whitespace after maxval
    if (hr.pos() + n > bytes.size()) {
      throw CorruptError(origin + ": truncated PGM pixel data");
    }
    for (std::size_t i = 0; i < n; ++i) {
      img.pixels[i] = static_cast<std::uint8_t>(bytes[hr.pos() + i]);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      img.pixels[i] = static_cast<std::uint8_t>(hr.number());
    }
  }
  if (maxval != 255) {
    for (auto& p : img.pixels) {
      p = static_cast<std::uint8_t>((p * 255 + maxval / 2) / maxval);
    }
  }
  return img;
}

GrayImage8 read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image file: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return decode_pgm(bytes, path.string());
}

std::string encode_pgm(const GrayImage8& image) {
  std::ostringstream os;
  os << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(image.pixels.data()),
           static_cast<std::streamsize>(image.pixels.size()));
  return os.str();
}

void write_pgm(const std::filesystem::path& path, const GrayImage8& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image file: " + path.string());
  const std::string bytes = encode_pgm(image);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace abn::data
