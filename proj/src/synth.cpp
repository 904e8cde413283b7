#include "cephmark/synth.hpp"

#include <algorithm>
#include <cmath>

namespace cephmark {

namespace {

double smoothstep01(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

// coverage ramp for a signed distance (negative = inside), ~1px wide edge
double edge_alpha(double signed_dist) { return smoothstep01(0.5 - signed_dist); }

void add_clamped(GrayImage& img, int y, int x, double v) {
  if (y < 0 || x < 0 || y >= img.height || x >= img.width) return;
  img.at(y, x) = static_cast<float>(std::clamp(static_cast<double>(img.at(y, x)) + v, 0.0, 1.0));
}

struct Ellipse {
  double cx, cy, a, b, amp;
};

void render_ellipse(GrayImage& img, const Ellipse& e) {
  int y0 = std::max(0, static_cast<int>(std::floor(e.cy - e.b - 2)));
  int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(e.cy + e.b + 2)));
  int x0 = std::max(0, static_cast<int>(std::floor(e.cx - e.a - 2)));
  int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(e.cx + e.a + 2)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      double dx = (x - e.cx) / e.a, dy = (y - e.cy) / e.b;
      double q = dx * dx + dy * dy;
      // local linearization of the implicit function puts the 0.5 crossing
      // on the exact ellipse boundary
      double grad = 2.0 * std::hypot((x - e.cx) / (e.a * e.a), (y - e.cy) / (e.b * e.b));
      double sd = grad > 1e-9 ? (q - 1.0) / grad : (q - 1.0) * 1e9;
      add_clamped(img, y, x, e.amp * edge_alpha(sd));
    }
  }
}

double dist_to_segment(double px, double py, double ax, double ay, double bx, double by) {
  double vx = bx - ax, vy = by - ay;
  double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - (ax + t * vx), py - (ay + t * vy));
}

void render_segment(GrayImage& img, double ax, double ay, double bx, double by, double half_width,
                    double amp) {
  int y0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - half_width - 2)));
  int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(std::max(ay, by) + half_width + 2)));
  int x0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - half_width - 2)));
  int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(std::max(ax, bx) + half_width + 2)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      double sd = dist_to_segment(x, y, ax, ay, bx, by) - half_width;
      double v = amp * edge_alpha(sd);
      if (v > 0.0) {
        float& px = img.at(y, x);
        // segments of one corner overlap at the junction; take max, not sum
        px = static_cast<float>(std::clamp(std::max(static_cast<double>(px), v), 0.0, 1.0));
      }
    }
}

void render_disc(GrayImage& img, double cx, double cy, double radius, double amp) {
  int y0 = std::max(0, static_cast<int>(std::floor(cy - radius - 2)));
  int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(cy + radius + 2)));
  int x0 = std::max(0, static_cast<int>(std::floor(cx - radius - 2)));
  int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(cx + radius + 2)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      double sd = std::hypot(x - cx, y - cy) - radius;
      add_clamped(img, y, x, amp * edge_alpha(sd));
    }
}

void render_rect_outline(GrayImage& img, double left, double top, double w, double h,
                         double border, double amp) {
  int y0 = std::max(0, static_cast<int>(std::floor(top - 2)));
  int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(top + h + 2)));
  int x0 = std::max(0, static_cast<int>(std::floor(left - 2)));
  int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(left + w + 2)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      // signed distance to the outer rectangle; the outline is the band
      // [0, -border] inside it
      double dx = std::max({left - x, 0.0, x - (left + w)});
      double dy = std::max({top - y, 0.0, y - (top + h)});
      double outside = std::hypot(dx, dy);
      double inside = std::min(std::min(x - left, left + w - x), std::min(y - top, top + h - y));
      double sd_outer = outside > 0.0 ? outside : -inside;
      double sd = std::max(sd_outer, -border - sd_outer);  // carve the interior
      add_clamped(img, y, x, amp * edge_alpha(sd));
    }
}

bool far_enough(const std::vector<Point>& pts, double min_sep) {
  for (size_t i = 0; i < pts.size(); ++i)
    for (size_t j = i + 1; j < pts.size(); ++j)
      if (std::hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y) < min_sep) return false;
  return true;
}

}  // namespace

CephDataset synth_generate(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const int c = config.canvas;
  const double s = c / 256.0;
  const int K = config.num_landmarks;

  CephDataset ds;
  ds.pixel_spacing_mm = config.pixel_spacing_mm;
  ds.num_landmarks = K;
  const int train_count = std::max(1, static_cast<int>(config.count * config.train_fraction));

  for (int n = 0; n < config.count; ++n) {
    GrayImage img(c, c);

    // smooth background: DC level plus a gentle linear gradient
    {
      double base = rng.uniform(0.08, 0.2);
      double gx = rng.uniform(-0.1, 0.1) / c;
      double gy = rng.uniform(-0.1, 0.1) / c;
      for (int y = 0; y < c; ++y)
        for (int x = 0; x < c; ++x)
          img.at(y, x) = static_cast<float>(std::clamp(base + gx * x + gy * y, 0.0, 1.0));
    }

    const double margin = 0.14 * c;
    Ellipse ell{};
    Point corner{}, corner_end1{}, corner_end2{};
    double corner_hw = 0.0, corner_amp = 0.0;
    Point disc{};
    double disc_r = 0.0, disc_amp = 0.0;
    Point rect{};
    double rect_w = 0.0, rect_h = 0.0, rect_border = 0.0, rect_amp = 0.0;
    std::vector<Point> landmarks;

    // geometry resampled until landmarks respect the separation floor
    for (int attempt = 0;; ++attempt) {
      if (attempt > 200)
        throw ConfigError("synth: cannot satisfy min_separation " +
                          std::to_string(config.min_separation) + " on canvas " +
                          std::to_string(c));
      landmarks.clear();

      ell.a = rng.uniform(0.13 * c, 0.19 * c);
      ell.b = rng.uniform(0.10 * c, 0.15 * c);
      ell.cx = rng.uniform(margin + ell.a, c - margin - ell.a);
      ell.cy = rng.uniform(margin + ell.b, c - margin - ell.b);
      ell.amp = rng.uniform(0.28, 0.42);
      landmarks.push_back({ell.cx, ell.cy - ell.b});  // 0: topmost
      if (K >= 2) landmarks.push_back({ell.cx + ell.a, ell.cy});  // 1: rightmost

      if (K >= 3) {
        corner = {rng.uniform(margin, c - margin), rng.uniform(margin, c - margin)};
        double theta = rng.uniform(0.0, 2.0 * M_PI);
        double phi = rng.uniform(M_PI / 3.0, 0.61 * M_PI);
        double len1 = rng.uniform(0.12 * c, 0.18 * c);
        double len2 = rng.uniform(0.12 * c, 0.18 * c);
        corner_end1 = {corner.x + len1 * std::cos(theta), corner.y + len1 * std::sin(theta)};
        corner_end2 = {corner.x + len2 * std::cos(theta + phi),
                       corner.y + len2 * std::sin(theta + phi)};
        corner_hw = rng.uniform(1.1, 1.6) * s;
        corner_amp = rng.uniform(0.3, 0.45);
        landmarks.push_back(corner);  // 2: junction
      }
      if (K >= 4) {
        disc_r = rng.uniform(0.022 * c, 0.034 * c);
        disc = {rng.uniform(margin, c - margin), rng.uniform(margin, c - margin)};
        disc_amp = rng.uniform(0.32, 0.48);
        landmarks.push_back(disc);  // 3: center
      }
      if (K >= 5) {
        rect_w = rng.uniform(0.10 * c, 0.16 * c);
        rect_h = rng.uniform(0.10 * c, 0.16 * c);
        rect = {rng.uniform(margin, c - margin - rect_w),
                rng.uniform(margin, c - margin - rect_h)};
        rect_border = rng.uniform(1.4, 2.2) * s;
        rect_amp = rng.uniform(0.28, 0.4);
        landmarks.push_back(rect);  // 4: outer top-left corner
      }

      if (far_enough(landmarks, config.min_separation)) break;
    }

    render_ellipse(img, ell);
    if (K >= 3) {
      render_segment(img, corner.x, corner.y, corner_end1.x, corner_end1.y, corner_hw,
                     corner_amp);
      render_segment(img, corner.x, corner.y, corner_end2.x, corner_end2.y, corner_hw,
                     corner_amp);
    }
    if (K >= 4) render_disc(img, disc.x, disc.y, disc_r, disc_amp);
    if (K >= 5) render_rect_outline(img, rect.x, rect.y, rect_w, rect_h, rect_border, rect_amp);

    if (config.noise_sigma > 0.0)
      for (auto& px : img.pixels)
        px = static_cast<float>(
            std::clamp(static_cast<double>(px) + config.noise_sigma * rng.normal(), 0.0, 1.0));

    DatasetItem item;
    char id[16];
    std::snprintf(id, sizeof(id), "%04d", n + 1);
    item.id = id;
    item.image = std::move(img);
    item.annotations.emplace_back(std::move(landmarks), Frame::original);
    item.frame = Frame::original;
    item.split = n < train_count ? "train" : "test1";
    ds.items.push_back(std::move(item));
  }
  ds.validate();
  return ds;
}

}  // namespace cephmark
