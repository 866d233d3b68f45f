#pragma once

// Plain ("P2") portable graymap input and output for occupancy maps and
// belief snapshots.

#include "icr/mapcore.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace icr {

/// Unreadable or malformed map data.
class InputDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GrayImage {
  int width = 0;
  int height = 0;
  int maxval = 255;
  std::vector<int> samples;  // row-major, image row 0 first
};

inline GrayImage parse_pgm(std::istream& in) {
  // Tokenizer that skips '#' comments.
  auto next = [&in](const char* what) {
    std::string tok;
    while (in >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return tok;
    }
    throw InputDataError(std::string("pgm: unexpected end of data while reading ") + what);
  };
  auto number = [&](const char* what) {
    const std::string tok = next(what);
    try {
      std::size_t used = 0;
      const long v = std::stol(tok, &used);
      if (used != tok.size() || v < 0) throw std::invalid_argument(tok);
      return static_cast<int>(v);
    } catch (const std::exception&) {
      throw InputDataError("pgm: invalid " + std::string(what) + " '" + tok + "'");
    }
  };
  if (next("magic") != "P2") throw InputDataError("pgm: only the plain P2 format is supported");
  GrayImage img;
  img.width = number("width");
  img.height = number("height");
  img.maxval = number("maxval");
  if (img.width <= 0 || img.height <= 0 || img.maxval <= 0 || img.maxval > 65535)
    throw InputDataError("pgm: invalid header");
  const auto count = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height);
  img.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int v = number("sample");
    if (v > img.maxval) throw InputDataError("pgm: sample exceeds maxval");
    img.samples.push_back(v);
  }
  return img;
}

inline GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputDataError("cannot open map file '" + path + "'");
  return parse_pgm(in);
}

/// Occupancy map from a graymap: samples darker than half of maxval are
/// occupied (below 128 for maxval 255).
inline GridMap map_from_image(const GrayImage& img, double resolution, const Vector2& origin) {
  std::vector<std::int8_t> cells(img.samples.size());
  std::transform(img.samples.begin(), img.samples.end(), cells.begin(),
                 [&](int v) { return 2 * v < img.maxval + 1 ? kOccupied : kFree; });
  return GridMap(GridGeometry(img.width, img.height, resolution, origin), std::move(cells));
}

inline GridMap load_map(const std::string& path, double resolution, const Vector2& origin) {
  return map_from_image(read_pgm(path), resolution, origin);
}

inline void write_pgm(std::ostream& out, const GrayImage& img) {
  out << "P2\n" << img.width << ' ' << img.height << '\n' << img.maxval << '\n';
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      if (c) out << ' ';
      out << img.samples[static_cast<std::size_t>(r) * img.width + c];
    }
    out << '\n';
  }
}

inline void write_pgm(const std::string& path, const GrayImage& img) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  write_pgm(out, img);
}

/// Occupied cells as 0, free cells as 255.
inline GrayImage occupancy_image(const GridGeometry& g, const std::vector<std::int8_t>& labels) {
  GrayImage img{g.width(), g.height(), 255, std::vector<int>(labels.size())};
  std::transform(labels.begin(), labels.end(), img.samples.begin(),
                 [](std::int8_t v) { return v == kOccupied ? 0 : 255; });
  return img;
}

/// Diagonal information min-max normalized to 0..255.
inline GrayImage information_image(const GridGeometry& g, const VectorXd& y) {
  GrayImage img{g.width(), g.height(), 255, std::vector<int>(static_cast<std::size_t>(y.size()), 0)};
  const double lo = y.minCoeff(), hi = y.maxCoeff();
  if (hi > lo)
    for (Eigen::Index j = 0; j < y.size(); ++j)
      img.samples[static_cast<std::size_t>(j)] = static_cast<int>(std::lround(255.0 * (y[j] - lo) / (hi - lo)));
  return img;
}

}  // namespace icr
