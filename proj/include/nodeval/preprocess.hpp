#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "nodeval/json.hpp"

#include "nodeval/error.hpp"
#include "nodeval/image.hpp"

namespace nodeval {

struct Point {
  int x = 0;
  int y = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// Caliper marker centers on one image; 2 or 4 points.
struct CaliperSet {
  std::vector<Point> points;
};

struct BBox {
  int xmin, ymin, xmax, ymax;
  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Square crop window in source-image coordinates. Pixels [x0, x0+side) x
/// [y0, y0+side); any part outside the source is zero-padded.
struct CropBox {
  int x0 = 0;
  int y0 = 0;
  int side = 0;
  bool pad_left = false;
  bool pad_top = false;
  bool pad_right = false;
  bool pad_bottom = false;
};

class DetectionError : public InputError {
 public:
  using InputError::InputError;
};

inline void validate(const CaliperSet& c, const GrayImage& img) {
  if (c.points.size() != 2 && c.points.size() != 4)
    throw InputError("caliper set must have 2 or 4 points, has " + std::to_string(c.points.size()));
  for (const auto& p : c.points)
    if (!img.contains(p.x, p.y))
      throw InputError("caliper (" + std::to_string(p.x) + "," + std::to_string(p.y) + ") outside the image");
}

inline BBox caliper_bbox(const CaliperSet& calipers) {
  if (calipers.points.size() < 2) throw InputError("caliper_bbox: need at least two points");
  BBox b{calipers.points[0].x, calipers.points[0].y, calipers.points[0].x, calipers.points[0].y};
  for (const auto& p : calipers.points) {
    b.xmin = std::min(b.xmin, p.x);
    b.ymin = std::min(b.ymin, p.y);
    b.xmax = std::max(b.xmax, p.x);
    b.ymax = std::max(b.ymax, p.y);
  }
  return b;
}

namespace detail {

constexpr int floor_div(int a, int b) { return a / b - ((a % b != 0) && ((a < 0) != (b < 0))); }

}  // namespace detail

/// Window geometry only: margin on every side, then the shorter side is grown
/// symmetrically (extra pixel on the far side when the difference is odd) to a
/// square.
inline CropBox crop_window(int image_width, int image_height, const BBox& bbox, int margin) {
  if (margin < 0) throw InputError("margin must be non-negative");
  if (bbox.xmin > bbox.xmax || bbox.ymin > bbox.ymax) throw InputError("bbox is inverted");
  if (bbox.xmin < 0 || bbox.ymin < 0 || bbox.xmax >= image_width || bbox.ymax >= image_height)
    throw InputError("bbox lies outside the image");
  int x0 = bbox.xmin - margin;
  int y0 = bbox.ymin - margin;
  const int w = bbox.xmax + margin - x0;
  const int h = bbox.ymax + margin - y0;
  const int side = std::max({w, h, 1});
  x0 -= detail::floor_div(side - w, 2);
  y0 -= detail::floor_div(side - h, 2);
  CropBox box;
  box.x0 = x0;
  box.y0 = y0;
  box.side = side;
  box.pad_left = x0 < 0;
  box.pad_top = y0 < 0;
  box.pad_right = x0 + side > image_width;
  box.pad_bottom = y0 + side > image_height;
  return box;
}

/// Cuts the square window around `bbox` (see crop_window). Interior pixels are
/// copied verbatim; the output is always side x side.
inline std::pair<GrayImage, CropBox> square_crop_with_margin(const GrayImage& image, const BBox& bbox,
                                                             int margin = 32) {
  const CropBox box = crop_window(image.width, image.height, bbox, margin);
  GrayImage out(box.side, box.side, 0);
  for (int y = 0; y < box.side; ++y) {
    const int sy = box.y0 + y;
    if (sy < 0 || sy >= image.height) continue;
    for (int x = 0; x < box.side; ++x) {
      const int sx = box.x0 + x;
      if (sx >= 0 && sx < image.width) out.at(x, y) = image.at(sx, sy);
    }
  }
  return {std::move(out), box};
}

/// Bilinear resize with pixel-center alignment: output pixel i samples source
/// coordinate (i + 0.5) * in/out - 0.5, clamped to the image. Result is scaled
/// to [0,1] by 1/255.
inline Plane resize_bilinear(const GrayImage& image, int out_w = 160, int out_h = 160) {
  if (image.empty()) throw InputError("resize_bilinear: empty image");
  if (out_w <= 0 || out_h <= 0) throw InputError("resize_bilinear: output size must be positive");
  const double sx = static_cast<double>(image.width) / out_w;
  const double sy = static_cast<double>(image.height) / out_h;

  struct Tap {
    int i0, i1;
    double t;
  };
  auto taps = [](int n_out, int n_in, double scale) {
    std::vector<Tap> out(static_cast<std::size_t>(n_out));
    for (int i = 0; i < n_out; ++i) {
      const double c = std::clamp((i + 0.5) * scale - 0.5, 0.0, static_cast<double>(n_in - 1));
      const int i0 = static_cast<int>(std::floor(c));
      out[static_cast<std::size_t>(i)] = {i0, std::min(i0 + 1, n_in - 1), c - i0};
    }
    return out;
  };
  const auto tx = taps(out_w, image.width, sx);
  const auto ty = taps(out_h, image.height, sy);

  Plane out(out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    const auto& v = ty[static_cast<std::size_t>(y)];
    for (int x = 0; x < out_w; ++x) {
      const auto& u = tx[static_cast<std::size_t>(x)];
      const double top = std::lerp(double(image.at(u.i0, v.i0)), double(image.at(u.i1, v.i0)), u.t);
      const double bottom = std::lerp(double(image.at(u.i0, v.i1)), double(image.at(u.i1, v.i1)), u.t);
      out.at(x, y) = std::lerp(top, bottom, v.t) / 255.0;
    }
  }
  return out;
}

/// Cross-shaped caliper marker: a (2*arm+1)-pixel square with a one-pixel-wide
/// bright plus sign on a black field.
inline GrayImage make_cross_template(int arm = 7) {
  const int n = 2 * arm + 1;
  GrayImage t(n, n, 0);
  for (int i = 0; i < n; ++i) {
    t.at(arm, i) = 255;
    t.at(i, arm) = 255;
  }
  return t;
}

/// Draws the marker centered at (cx, cy); parts outside the image are clipped.
inline void draw_cross(GrayImage& img, int cx, int cy, int arm = 7, std::uint8_t value = 255) {
  for (int d = -arm; d <= arm; ++d) {
    if (img.contains(cx + d, cy)) img.at(cx + d, cy) = value;
    if (img.contains(cx, cy + d)) img.at(cx, cy + d) = value;
  }
}

struct NccPeak {
  Point center;
  double score;
};

/// Normalized cross-correlation of `templ` at every fully-contained position;
/// entry (u, v) of the result is the score with the template's top-left corner
/// at (u, v). Flat windows score 0.
inline Plane ncc_map(const GrayImage& image, const GrayImage& templ) {
  const int tw = templ.width, th = templ.height;
  if (tw > image.width || th > image.height || templ.empty())
    throw InputError("template must be non-empty and no larger than the image");
  const int ow = image.width - tw + 1, oh = image.height - th + 1;
  const double tn = static_cast<double>(tw) * th;

  double tmean = 0.0;
  for (auto p : templ.pixels) tmean += p;
  tmean /= tn;
  std::vector<double> tz(templ.pixels.size());
  double tnorm = 0.0;
  for (std::size_t i = 0; i < tz.size(); ++i) {
    tz[i] = templ.pixels[i] - tmean;
    tnorm += tz[i] * tz[i];
  }
  if (tnorm == 0.0) throw InputError("template is flat; correlation undefined");
  tnorm = std::sqrt(tnorm);

  // Summed-area tables for window sums of I and I^2.
  const int W = image.width + 1;
  std::vector<double> s1(static_cast<std::size_t>(W) * (image.height + 1), 0.0), s2 = s1;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      const double v = image.at(x, y);
      const std::size_t k = static_cast<std::size_t>(y + 1) * W + (x + 1);
      s1[k] = v + s1[k - 1] + s1[k - W] - s1[k - W - 1];
      s2[k] = v * v + s2[k - 1] + s2[k - W] - s2[k - W - 1];
    }
  auto box = [&](const std::vector<double>& s, int x, int y) {
    const std::size_t a = static_cast<std::size_t>(y) * W + x;
    const std::size_t b = static_cast<std::size_t>(y + th) * W + x;
    return s[b + tw] - s[b] - s[a + tw] + s[a];
  };

  Plane out(ow, oh, 0.0);
  for (int v = 0; v < oh; ++v)
    for (int u = 0; u < ow; ++u) {
      const double sum = box(s1, u, v);
      const double var = box(s2, u, v) - sum * sum / tn;
      if (var <= 1e-9 * tn) continue;
      double cross = 0.0;
      for (int j = 0; j < th; ++j) {
        const std::uint8_t* row = &image.pixels[static_cast<std::size_t>(v + j) * image.width + u];
        const double* trow = &tz[static_cast<std::size_t>(j) * tw];
        for (int i = 0; i < tw; ++i) cross += row[i] * trow[i];
      }
      out.at(u, v) = cross / (std::sqrt(var) * tnorm);
    }
  return out;
}

/// Greedy non-maximum suppression over the NCC map: strongest peak first, each
/// later peak must be farther than `radius` (Euclidean) from every accepted one.
inline std::vector<NccPeak> ncc_peaks(const Plane& scores, int tw, int th, double threshold,
                                      double radius, std::size_t max_peaks) {
  std::vector<NccPeak> candidates;
  for (int v = 0; v < scores.height; ++v)
    for (int u = 0; u < scores.width; ++u)
      if (scores.at(u, v) >= threshold) candidates.push_back({{u + tw / 2, v + th / 2}, scores.at(u, v)});
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const NccPeak& a, const NccPeak& b) { return a.score > b.score; });
  std::vector<NccPeak> accepted;
  for (const auto& c : candidates) {
    if (accepted.size() == max_peaks) break;
    const bool clear = std::all_of(accepted.begin(), accepted.end(), [&](const NccPeak& a) {
      const double dx = a.center.x - c.center.x, dy = a.center.y - c.center.y;
      return dx * dx + dy * dy > radius * radius;
    });
    if (clear) accepted.push_back(c);
  }
  return accepted;
}

inline constexpr double kCaliperCorrelationThreshold = 0.5;

/// Locates `expected` caliper markers by normalized cross-correlation against
/// `templ`. Returned points are template centers, strongest match first.
/// Stand-in for a learned detector.
inline CaliperSet detect_calipers(const GrayImage& image, const GrayImage& templ, int expected) {
  if (expected != 2 && expected != 4) throw InputError("expected caliper count must be 2 or 4");
  if (templ.width >= image.width || templ.height >= image.height)
    throw InputError("template must be smaller than the image");
  const Plane scores = ncc_map(image, templ);
  const double radius = std::max(templ.width, templ.height);
  const auto peaks = ncc_peaks(scores, templ.width, templ.height, kCaliperCorrelationThreshold, radius,
                               static_cast<std::size_t>(expected));
  if (peaks.size() < static_cast<std::size_t>(expected))
    throw DetectionError("caliper detection found " + std::to_string(peaks.size()) + " of " +
                         std::to_string(expected) + " markers above correlation " +
                         std::to_string(kCaliperCorrelationThreshold));
  CaliperSet out;
  for (const auto& p : peaks) out.points.push_back(p.center);
  return out;
}

// JSON interchange: {"points": [[x, y], ...]} and the echoed crop box.

inline Json to_json(const CaliperSet& c) {
  Json pts = Json::array();
  for (const auto& p : c.points) pts.push_back({p.x, p.y});
  return {{"points", pts}};
}

inline CaliperSet calipers_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("points") || !j["points"].is_array())
    throw InputError("calipers JSON: expected {\"points\": [[x,y],...]}");
  CaliperSet c;
  for (const auto& p : j["points"]) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
      throw InputError("calipers JSON: each point must be [x, y]");
    c.points.push_back({static_cast<int>(std::lround(p[0].get<double>())),
                        static_cast<int>(std::lround(p[1].get<double>()))});
  }
  return c;
}

inline CaliperSet load_calipers(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open calipers file '" + path + "'");
  try {
    return calipers_from_json(Json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw InputError("calipers JSON: " + std::string(e.what()));
  }
}

inline Json to_json(const CropBox& b) {
  return {{"x0", b.x0},           {"y0", b.y0},          {"side", b.side},
          {"pad_left", b.pad_left}, {"pad_top", b.pad_top}, {"pad_right", b.pad_right},
          {"pad_bottom", b.pad_bottom}};
}

}  // namespace nodeval
