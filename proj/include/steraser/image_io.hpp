#pragma once

// Binary netpbm codecs (P6 colour, P5 grey, maxval 255) and conversions
// between 8-bit images and [0, 1] tensors.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <string_view>

#include "steraser/image.hpp"
#include "steraser/tensor.hpp"

namespace ste {

/// Malformed or truncated image data; `offset` is the byte position of the
/// problem.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// File-system failure, message carries the path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PnmHeader {
  std::string magic;  // "P5" or "P6"
  std::size_t width = 0;
  std::size_t height = 0;
  unsigned maxval = 255;
  std::size_t data_offset = 0;

  std::size_t channels() const { return magic == "P6" ? 3 : 1; }
  std::size_t payload_size() const { return width * height * channels(); }
};

namespace detail {

inline bool pnm_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

class PnmScanner {
 public:
  PnmScanner(std::string_view bytes, std::size_t pos) : bytes_(bytes), pos_(pos) {}

  std::size_t pos() const { return pos_; }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (pnm_space(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* field) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      v = v * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (v > 1'000'000) throw FormatError(std::string("netpbm: ") + field + " too large", start);
      ++pos_;
    }
    if (pos_ == start) throw FormatError(std::string("netpbm: expected ") + field, start);
    return v;
  }

  void single_whitespace() {
    if (pos_ >= bytes_.size()) throw FormatError("netpbm: header ends before pixel data", pos_);
    if (!pnm_space(bytes_[pos_])) throw FormatError("netpbm: expected whitespace after maxval", pos_);
    ++pos_;
  }

 private:
  std::string_view bytes_;
  std::size_t pos_;
};

}  // namespace detail

inline PnmHeader parse_pnm_header(std::string_view bytes, std::string_view magic) {
  if (bytes.size() < 2 || bytes.substr(0, 2) != magic)
    throw FormatError("netpbm: expected magic " + std::string(magic), 0);
  detail::PnmScanner scan(bytes, 2);
  if (scan.pos() < bytes.size() && !detail::pnm_space(bytes[scan.pos()]) && bytes[scan.pos()] != '#')
    throw FormatError("netpbm: expected whitespace after magic", 2);
  PnmHeader h;
  h.magic = std::string(magic);
  h.width = scan.number("width");
  h.height = scan.number("height");
  const std::size_t maxval_pos = (scan.skip_space_and_comments(), scan.pos());
  const std::size_t maxval = scan.number("maxval");
  if (maxval != 255)
    throw FormatError("netpbm: maxval must be 255, got " + std::to_string(maxval), maxval_pos);
  h.maxval = 255;
  if (h.width == 0 || h.height == 0) throw FormatError("netpbm: zero image dimension", maxval_pos);
  scan.single_whitespace();
  h.data_offset = scan.pos();
  const std::size_t available = bytes.size() - h.data_offset;
  if (available < h.payload_size())
    throw FormatError("netpbm: pixel data has " + std::to_string(available) +
                          " bytes, expected " + std::to_string(h.payload_size()),
                      bytes.size());
  return h;
}

inline RgbImage decode_ppm(std::string_view bytes) {
  const PnmHeader h = parse_pnm_header(bytes, "P6");
  RgbImage img(h.width, h.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    img.pixels[i] = static_cast<std::uint8_t>(bytes[h.data_offset + i]);
  return img;
}

inline MaskImage decode_pgm_mask(std::string_view bytes) {
  const PnmHeader h = parse_pnm_header(bytes, "P5");
  MaskImage m(h.width, h.height);
  for (std::size_t i = 0; i < m.bits.size(); ++i)
    m.bits[i] = static_cast<std::uint8_t>(bytes[h.data_offset + i]) > 127 ? 1 : 0;
  return m;
}

inline std::string encode_ppm(const RgbImage& img) {
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(img.pixels.begin(), img.pixels.end());
  return out;
}

inline std::string encode_pgm_mask(const MaskImage& m) {
  std::string out = "P5\n" + std::to_string(m.width) + " " + std::to_string(m.height) + "\n255\n";
  for (auto b : m.bits) out.push_back(static_cast<char>(b ? 255 : 0));
  return out;
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed for " + path.string());
}

inline RgbImage read_image(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  try {
    return decode_ppm(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

inline void write_image(const RgbImage& img, const std::filesystem::path& path) {
  write_file_bytes(path, encode_ppm(img));
}

inline MaskImage read_mask(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  try {
    return decode_pgm_mask(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

inline void write_mask(const MaskImage& m, const std::filesystem::path& path) {
  write_file_bytes(path, encode_pgm_mask(m));
}

// ---------------------------------------------------------------------------

inline std::uint8_t to_byte(double v) {
  const double r = std::round(v * 255.0);  // half away from zero
  return static_cast<std::uint8_t>(r < 0.0 ? 0.0 : (r > 255.0 ? 255.0 : r));
}

/// 3 x h x w tensor of the window at (x0, y0), values divided by 255.
template <class T = double>
BasicTensor<T> crop_to_tensor(const RgbImage& img, std::size_t x0, std::size_t y0, std::size_t w,
                              std::size_t h) {
  if (x0 + w > img.width || y0 + h > img.height)
    throw ContractError("crop window outside image");
  BasicTensor<T> t(3, h, w);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        t(c, y, x) = static_cast<T>(img.at(x0 + x, y0 + y, c)) / T(255);
  return t;
}

template <class T = double>
BasicTensor<T> image_to_tensor(const RgbImage& img) {
  return crop_to_tensor<T>(img, 0, 0, img.width, img.height);
}

template <class T>
RgbImage tensor_to_image(const BasicTensor<T>& t) {
  if (t.channels() != 3)
    throw ContractError("tensor_to_image: expected 3 channels, got " + std::to_string(t.channels()));
  RgbImage img(t.width(), t.height());
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < t.height(); ++y)
      for (std::size_t x = 0; x < t.width(); ++x)
        img.at(x, y, c) = to_byte(static_cast<double>(t(c, y, x)));
  return img;
}

}  // namespace ste
