#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cephmark/common.hpp"
#include "cephmark/tensor.hpp"

namespace cephmark {

// Coordinate frames a landmark set or heatmap canvas can live in. Operations
// check tags at their boundaries instead of silently mixing scales.
enum class Frame : uint32_t {
  original = 0,      // raw dataset pixels, before the square crop
  cropped = 1,       // after the top-crop; the square working frame
  global_scaled = 2,  // cropped frame scaled by the global factor
  local_scaled = 3,   // cropped frame scaled by the local factor
  patch_local = 4,    // coordinates relative to a patch origin
};

const char* frame_name(Frame f);
Frame frame_from_name(const std::string& name);

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Ordered landmark coordinates in a tagged frame. Order is the dataset's
// canonical landmark order and is never permuted.
struct LandmarkSet {
  std::vector<Point> points;
  std::vector<uint8_t> valid;           // 0 = no usable detection / off-canvas
  std::vector<uint8_t> low_confidence;  // decode diagnostic (near-flat channel)
  Frame frame = Frame::original;

  LandmarkSet() = default;
  LandmarkSet(std::vector<Point> pts, Frame f)
      : points(std::move(pts)),
        valid(points.size(), 1),
        low_confidence(points.size(), 0),
        frame(f) {}

  int size() const { return static_cast<int>(points.size()); }
};

// Geometry of the Gaussian targets on one canvas. The paper gives the
// distribution width (diameter of the visible circular support) but not
// sigma; sigma = width / 6 puts the support edge at 3 sigma, where the value
// exp(-4.5) ~ 0.011 sits just above the 0.01 loss gate. The correlation
// coefficient is fixed at 0: distributions are circular.
struct HeatmapSpec {
  int canvas_height = 0;
  int canvas_width = 0;
  int num_landmarks = 0;       // K; channel count is always K+1
  double distribution_width = 0.0;
  double sigma = 0.0;
  Frame frame = Frame::cropped;

  static HeatmapSpec make(int height, int width, int num_landmarks, double distribution_width,
                          Frame frame) {
    if (height < 1 || width < 1) throw ShapeError("HeatmapSpec: canvas must be positive");
    if (num_landmarks < 1) throw ShapeError("HeatmapSpec: need at least one landmark");
    if (distribution_width <= 0.0) throw ShapeError("HeatmapSpec: width must be positive");
    HeatmapSpec s;
    s.canvas_height = height;
    s.canvas_width = width;
    s.num_landmarks = num_landmarks;
    s.distribution_width = distribution_width;
    s.sigma = distribution_width / 6.0;
    s.frame = frame;
    return s;
  }
};

// K+1 probability channels on a tagged canvas: K landmark channels plus the
// shared background channel that completes each pixel to probability 1.
template <typename T>
struct HeatmapStack {
  ag::Tensor<T> channels;  // [K+1, H, W]
  Frame frame = Frame::cropped;

  int num_channels() const { return channels.dim(0); }
  int height() const { return channels.dim(1); }
  int width() const { return channels.dim(2); }
};

namespace detail {

// Rasterization rounds the landmark to the nearest pixel so the peak value
// is exactly 1 there; sub-pixel precision stays in the LandmarkSet.
inline void raster_center(const Point& p, int& cx, int& cy) {
  cx = round_half_up(p.x);
  cy = round_half_up(p.y);
}

}  // namespace detail

// One Gaussian channel: exp(-d^2 / (2 sigma^2)) inside the circular support
// of diameter distribution_width, exactly 0 outside. The center may sit
// off-canvas; the visible tail (or nothing) is rendered.
template <typename T>
ag::Tensor<T> gaussian_channel(const Point& center, const HeatmapSpec& spec) {
  if (spec.sigma <= 0.0) throw ShapeError("gaussian_channel: sigma must be positive");
  ag::Tensor<T> out = ag::Tensor<T>::zeros({spec.canvas_height, spec.canvas_width});
  int cx, cy;
  detail::raster_center(center, cx, cy);
  const double radius = spec.distribution_width / 2.0;
  const double r2 = radius * radius;
  const double inv_2s2 = 1.0 / (2.0 * spec.sigma * spec.sigma);
  const int y0 = std::max(0, cy - static_cast<int>(std::ceil(radius)));
  const int y1 = std::min(spec.canvas_height - 1, cy + static_cast<int>(std::ceil(radius)));
  const int x0 = std::max(0, cx - static_cast<int>(std::ceil(radius)));
  const int x1 = std::min(spec.canvas_width - 1, cx + static_cast<int>(std::ceil(radius)));
  T* data = out.values().data();
  for (int y = y0; y <= y1; ++y) {
    double dy = static_cast<double>(y - cy);
    for (int x = x0; x <= x1; ++x) {
      double dx = static_cast<double>(x - cx);
      double d2 = dx * dx + dy * dy;
      if (d2 <= r2)
        data[static_cast<int64_t>(y) * spec.canvas_width + x] =
            static_cast<T>(std::exp(-d2 * inv_2s2));
    }
  }
  return out;
}

// Landmarks -> K+1 channel stack. Channels 1..K are per-landmark Gaussians;
// the background channel is 1 - sum of the others, clamped at 0 where heavy
// overlap would push it negative. Invalid landmarks produce zero channels.
template <typename T>
HeatmapStack<T> encode_heatmaps(const LandmarkSet& landmarks, const HeatmapSpec& spec) {
  if (landmarks.frame != spec.frame)
    throw ShapeError(std::string("encode_heatmaps: landmark frame ") +
                     frame_name(landmarks.frame) + " does not match canvas frame " +
                     frame_name(spec.frame));
  if (landmarks.size() != spec.num_landmarks)
    throw ShapeError("encode_heatmaps: " + std::to_string(landmarks.size()) +
                     " landmarks for a spec of " + std::to_string(spec.num_landmarks));

  const int K = spec.num_landmarks;
  const int64_t plane = static_cast<int64_t>(spec.canvas_height) * spec.canvas_width;
  HeatmapStack<T> stack;
  stack.frame = spec.frame;
  stack.channels = ag::Tensor<T>::zeros({K + 1, spec.canvas_height, spec.canvas_width});
  T* data = stack.channels.values().data();

  for (int i = 0; i < K; ++i) {
    if (!landmarks.valid[i]) continue;
    ag::Tensor<T> ch = gaussian_channel<T>(landmarks.points[i], spec);
    std::copy(ch.values().begin(), ch.values().end(), data + static_cast<int64_t>(i) * plane);
  }
  T* bg = data + static_cast<int64_t>(K) * plane;
  for (int64_t p = 0; p < plane; ++p) {
    T s{};
    for (int i = 0; i < K; ++i) s += data[static_cast<int64_t>(i) * plane + p];
    T rest = T{1} - s;
    bg[p] = rest > T{} ? rest : T{};
  }
  return stack;
}

struct DecodeOptions {
  double fine_threshold = 0.5;     // filter on per-channel max-normalized values
  double flat_tolerance = 1e-6;    // max-minus-mean below this flags low confidence
};

// Integer argmax per landmark channel (row-major first occurrence on ties).
// All-zero channels are marked invalid; near-flat channels low-confidence.
template <typename T>
LandmarkSet decode_coarse(const HeatmapStack<T>& stack, const DecodeOptions& opt = {}) {
  const int K = stack.num_channels() - 1;
  if (K < 1) throw ShapeError("decode_coarse: stack needs K+1 >= 2 channels");
  const int height = stack.height(), width = stack.width();
  const int64_t plane = static_cast<int64_t>(height) * width;
  const T* data = stack.channels.values().data();

  LandmarkSet out(std::vector<Point>(K), stack.frame);
  for (int i = 0; i < K; ++i) {
    const T* ch = data + static_cast<int64_t>(i) * plane;
    T best = ch[0];
    int64_t best_at = 0;
    double mean = static_cast<double>(ch[0]);
    for (int64_t p = 1; p < plane; ++p) {
      if (ch[p] > best) {
        best = ch[p];
        best_at = p;
      }
      mean += static_cast<double>(ch[p]);
    }
    mean /= static_cast<double>(plane);
    out.points[i] = Point{static_cast<double>(best_at % width),
                          static_cast<double>(best_at / width)};
    if (!(static_cast<double>(best) > 0.0)) {
      out.valid[i] = 0;
      out.low_confidence[i] = 1;
    } else if (static_cast<double>(best) - mean < opt.flat_tolerance) {
      out.low_confidence[i] = 1;
    }
  }
  return out;
}

// Sub-pixel decode: normalize each landmark channel by its max, zero values
// below the threshold, return the unweighted centroid of what remains.
template <typename T>
LandmarkSet decode_fine(const HeatmapStack<T>& stack, const DecodeOptions& opt = {}) {
  const int K = stack.num_channels() - 1;
  if (K < 1) throw ShapeError("decode_fine: stack needs K+1 >= 2 channels");
  const int height = stack.height(), width = stack.width();
  const int64_t plane = static_cast<int64_t>(height) * width;
  const T* data = stack.channels.values().data();

  LandmarkSet out(std::vector<Point>(K), stack.frame);
  for (int i = 0; i < K; ++i) {
    const T* ch = data + static_cast<int64_t>(i) * plane;
    T best = ch[0];
    for (int64_t p = 1; p < plane; ++p) best = std::max(best, ch[p]);
    if (!(static_cast<double>(best) > 0.0)) {
      out.valid[i] = 0;
      out.low_confidence[i] = 1;
      continue;
    }
    const double inv = 1.0 / static_cast<double>(best);
    double sx = 0.0, sy = 0.0;
    int64_t count = 0;
    for (int y = 0; y < height; ++y) {
      const T* row = ch + static_cast<int64_t>(y) * width;
      for (int x = 0; x < width; ++x) {
        if (static_cast<double>(row[x]) * inv >= opt.fine_threshold) {
          sx += x;
          sy += y;
          ++count;
        }
      }
    }
    out.points[i] = Point{sx / count, sy / count};  // count >= 1: the peak survives
  }
  return out;
}

// Multiply every coordinate by a positive factor and retag the frame.
LandmarkSet rescale_landmarks(const LandmarkSet& landmarks, double factor, Frame target_frame);

// Shift every coordinate by (dx, dy) and retag the frame (crop/un-crop and
// patch-origin transfers).
LandmarkSet translate_landmarks(const LandmarkSet& landmarks, double dx, double dy,
                                Frame target_frame);

}  // namespace cephmark
