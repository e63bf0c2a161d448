#pragma once

#include <cctype>
#include <cstdint>
#include <string>
#include <vector>

#include "chipnet/common.hpp"
#include "chipnet/postprocess.hpp"
#include "chipnet/tensor.hpp"

namespace chipnet {

struct PgmImage {
  int width = 0;
  int height = 0;
  int maxval = 255;
  std::vector<std::uint16_t> pixels;  // row-major

  std::uint16_t at(int row, int col) const {
    return pixels[static_cast<std::size_t>(row) * width + col];
  }
};

namespace detail {

struct PgmScanner {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos = 0;

  void skip_space_and_comments() {
    while (pos < size) {
      if (std::isspace(data[pos])) {
        ++pos;
      } else if (data[pos] == '#') {
        while (pos < size && data[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  }

  int next_int() {
    skip_space_and_comments();
    if (pos >= size || !std::isdigit(data[pos])) throw MalformedDataError("PGM: expected integer");
    long v = 0;
    while (pos < size && std::isdigit(data[pos])) {
      v = v * 10 + (data[pos] - '0');
      if (v > 1 << 20) throw MalformedDataError("PGM: integer out of range");
      ++pos;
    }
    return static_cast<int>(v);
  }
};

}  // namespace detail

/// Reads binary (P5) or ASCII (P2) grayscale images with maxval <= 65535.
inline PgmImage read_pgm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2) throw MalformedDataError("PGM: too short");
  const bool binary = bytes[0] == 'P' && bytes[1] == '5';
  const bool ascii = bytes[0] == 'P' && bytes[1] == '2';
  if (!binary && !ascii) throw MalformedDataError("PGM: bad magic");
  detail::PgmScanner sc{bytes.data(), bytes.size(), 2};
  PgmImage img;
  img.width = sc.next_int();
  img.height = sc.next_int();
  img.maxval = sc.next_int();
  if (img.width <= 0 || img.height <= 0 || img.maxval <= 0 || img.maxval > 65535)
    throw MalformedDataError("PGM: bad header values");
  const std::size_t count = static_cast<std::size_t>(img.width) * img.height;
  img.pixels.resize(count);
  if (binary) {
    ++sc.pos;  // exactly one whitespace byte after maxval
    const int bytes_per_px = img.maxval > 255 ? 2 : 1;
    if (sc.pos + count * bytes_per_px > bytes.size()) throw MalformedDataError("PGM: truncated");
    for (std::size_t i = 0; i < count; ++i) {
      if (bytes_per_px == 1) {
        img.pixels[i] = bytes[sc.pos + i];
      } else {
        img.pixels[i] = static_cast<std::uint16_t>((bytes[sc.pos + 2 * i] << 8) |
                                                   bytes[sc.pos + 2 * i + 1]);
      }
    }
  } else {
    for (std::size_t i = 0; i < count; ++i)
      img.pixels[i] = static_cast<std::uint16_t>(sc.next_int());
  }
  return img;
}

inline std::vector<std::uint8_t> write_pgm(const PgmImage& img) {
  if (img.maxval != 255) throw DomainError("write_pgm: only maxval 255 supported");
  std::string header =
      "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + img.pixels.size());
  for (std::uint16_t px : img.pixels) out.push_back(static_cast<std::uint8_t>(px));
  return out;
}

/// Grayscale image as a ground-truth label map (positive = drivable).
inline Tensor2<std::uint16_t> grayscale_from_pgm(const PgmImage& img) {
  Tensor2<std::uint16_t> out(img.height, img.width);
  out.v = img.pixels;
  return out;
}

/// Interprets a rendered grid-map PGM back into drivable / not-drivable /
/// don't-care cells using the exact pixel values of render_pgm.
struct MaskWithDontCare {
  BinaryMask mask;
  BinaryMask dontcare;
};

inline MaskWithDontCare mask_from_pgm(const PgmImage& img) {
  MaskWithDontCare out;
  out.mask = BinaryMask(img.height, img.width);
  out.dontcare = BinaryMask(img.height, img.width);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      const std::uint16_t px = img.at(r, c);
      if (px == 255) {
        out.mask(r, c) = 1;
      } else if (px == 127) {
        out.dontcare(r, c) = 1;
      } else if (px != 0) {
        throw MalformedDataError("PGM mask: pixel value " + std::to_string(px) +
                                 " is not one of {0, 127, 255}");
      }
    }
  return out;
}

}  // namespace chipnet
