#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "nodeval/error.hpp"

namespace nodeval {

/// 8-bit grayscale image, row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {
    if (w < 0 || h < 0) throw InputError("GrayImage: negative dimensions");
  }

  bool empty() const noexcept { return pixels.empty(); }
  bool contains(int x, int y) const noexcept { return x >= 0 && y >= 0 && x < width && y < height; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// Real-valued single-channel matrix, row-major.
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  Plane() = default;
  Plane(int w, int h, double fill = 0.0)
      : width(w), height(h), values(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

  double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const Plane&, const Plane&) = default;
};

namespace detail {

inline int read_pnm_int(std::istream& in) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF || !std::isdigit(c)) throw InputError("PGM: malformed header");
  int v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    if (v > 1 << 24) throw InputError("PGM: header value too large");
    c = in.get();
  }
  return v;  // consumes exactly one trailing whitespace byte
}

}  // namespace detail

/// Binary PGM (P5), maxval 255.
inline GrayImage read_pgm(std::istream& in) {
  char magic[2] = {};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '5') throw InputError("PGM: expected binary P5 image");
  const int w = detail::read_pnm_int(in);
  const int h = detail::read_pnm_int(in);
  const int maxval = detail::read_pnm_int(in);
  if (maxval != 255) throw InputError("PGM: only maxval 255 is supported");
  if (w <= 0 || h <= 0) throw InputError("PGM: empty image");
  GrayImage img(w, h);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) throw InputError("PGM: truncated pixel data");
  return img;
}

inline void write_pgm(std::ostream& out, const GrayImage& img) {
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

inline GrayImage load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open image '" + path + "'");
  return read_pgm(in);
}

inline void save_pgm(const std::string& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write image '" + path + "'");
  write_pgm(out, img);
}

/// Quantizes a [0,1] plane back to 8 bits (round to nearest).
inline GrayImage to_gray(const Plane& p) {
  GrayImage img(p.width, p.height);
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const double v = std::clamp(p.values[i], 0.0, 1.0) * 255.0;
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(v));
  }
  return img;
}

}  // namespace nodeval
