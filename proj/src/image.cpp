#include "cephmark/image.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

namespace cephmark {

namespace {

int next_pnm_token(std::istream& in) {
  // skips whitespace and '#' comments
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      in.unget();
      int value = 0;
      if (!(in >> value)) throw ParseError("pgm: bad header token");
      return value;
    }
    c = in.get();
  }
  throw ParseError("pgm: truncated header");
}

}  // namespace

GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("pgm: cannot open " + path);
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] != 'P' || (magic[1] != '5' && magic[1] != '2'))
    throw ParseError("pgm: " + path + " is not a P5/P2 file");
  const bool binary = magic[1] == '5';
  const int width = next_pnm_token(in);
  const int height = next_pnm_token(in);
  const int maxval = next_pnm_token(in);
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535)
    throw ParseError("pgm: bad dimensions in " + path);

  GrayImage img(height, width);
  const size_t n = img.pixels.size();
  const float scale = 1.0f / static_cast<float>(maxval);
  if (binary) {
    in.get();  // single whitespace after maxval
    if (maxval < 256) {
      std::vector<uint8_t> raw(n);
      in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
      if (!in) throw ParseError("pgm: truncated pixel data in " + path);
      for (size_t i = 0; i < n; ++i) img.pixels[i] = raw[i] * scale;
    } else {
      std::vector<uint8_t> raw(n * 2);
      in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * 2));
      if (!in) throw ParseError("pgm: truncated pixel data in " + path);
      for (size_t i = 0; i < n; ++i) {
        // 2-byte samples are big-endian per the PNM spec
        int v = (raw[2 * i] << 8) | raw[2 * i + 1];
        img.pixels[i] = v * scale;
      }
    }
  } else {
    for (size_t i = 0; i < n; ++i) {
      int v = 0;
      if (!(in >> v)) throw ParseError("pgm: truncated pixel data in " + path);
      img.pixels[i] = v * scale;
    }
  }
  return img;
}

void write_pgm(const std::string& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("pgm: cannot write " + path);
  out << "P5\n" << image.width << " " << image.height << "\n65535\n";
  std::vector<uint8_t> raw(image.pixels.size() * 2);
  for (size_t i = 0; i < image.pixels.size(); ++i) {
    float v = std::clamp(image.pixels[i], 0.0f, 1.0f);
    int q = static_cast<int>(v * 65535.0f + 0.5f);
    raw[2 * i] = static_cast<uint8_t>(q >> 8);
    raw[2 * i + 1] = static_cast<uint8_t>(q & 0xff);
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw ParseError("pgm: short write to " + path);
}

namespace {

struct TapWeights {
  std::vector<int> start;     // first source index per destination index
  std::vector<int> count;     // taps per destination index
  std::vector<double> weight;  // flattened tap weights, normalized to sum 1
};

// Exact coverage of [d*r, (d+1)*r) against integer source cells.
TapWeights box_taps(int src_size, int dst_size) {
  TapWeights taps;
  taps.start.resize(dst_size);
  taps.count.resize(dst_size);
  const double r = static_cast<double>(src_size) / dst_size;
  for (int d = 0; d < dst_size; ++d) {
    double lo = d * r;
    double hi = (d + 1) * r;
    int first = static_cast<int>(std::floor(lo));
    int last = static_cast<int>(std::ceil(hi)) - 1;
    first = std::clamp(first, 0, src_size - 1);
    last = std::clamp(last, first, src_size - 1);
    taps.start[d] = first;
    taps.count[d] = last - first + 1;
    double total = 0.0;
    size_t base = taps.weight.size();
    for (int s = first; s <= last; ++s) {
      double cover = std::min<double>(hi, s + 1) - std::max<double>(lo, s);
      cover = std::max(cover, 0.0);
      taps.weight.push_back(cover);
      total += cover;
    }
    if (total <= 0.0) total = 1.0;
    for (int i = 0; i < taps.count[d]; ++i) taps.weight[base + i] /= total;
  }
  return taps;
}

}  // namespace

GrayImage resample_area(const GrayImage& src, int dst_height, int dst_width) {
  if (dst_height <= 0 || dst_width <= 0)
    throw ShapeError("resample_area: target size must be positive");
  if (dst_height == src.height && dst_width == src.width) return src;

  TapWeights col = box_taps(src.width, dst_width);
  TapWeights row = box_taps(src.height, dst_height);

  // horizontal pass
  std::vector<double> tmp(static_cast<size_t>(src.height) * dst_width);
  {
    std::vector<size_t> offs(dst_width);
    size_t o = 0;
    for (int x = 0; x < dst_width; ++x) {
      offs[x] = o;
      o += col.count[x];
    }
    for (int y = 0; y < src.height; ++y) {
      const float* srow = src.pixels.data() + static_cast<size_t>(y) * src.width;
      double* drow = tmp.data() + static_cast<size_t>(y) * dst_width;
      for (int x = 0; x < dst_width; ++x) {
        double acc = 0.0;
        const double* w = col.weight.data() + offs[x];
        const float* s = srow + col.start[x];
        for (int t = 0; t < col.count[x]; ++t) acc += w[t] * s[t];
        drow[x] = acc;
      }
    }
  }

  GrayImage dst(dst_height, dst_width);
  {
    size_t o = 0;
    for (int y = 0; y < dst_height; ++y) {
      const double* w = row.weight.data() + o;
      o += row.count[y];
      float* drow = dst.pixels.data() + static_cast<size_t>(y) * dst_width;
      for (int x = 0; x < dst_width; ++x) {
        double acc = 0.0;
        for (int t = 0; t < row.count[y]; ++t)
          acc += w[t] * tmp[static_cast<size_t>(row.start[y] + t) * dst_width + x];
        drow[x] = static_cast<float>(acc);
      }
    }
  }
  return dst;
}

GrayImage crop(const GrayImage& src, int top, int left, int height, int width) {
  if (top < 0 || left < 0 || height < 1 || width < 1 || top + height > src.height ||
      left + width > src.width)
    throw ShapeError("crop: window outside image " + std::to_string(src.height) + "x" +
                     std::to_string(src.width));
  GrayImage dst(height, width);
  for (int y = 0; y < height; ++y)
    std::copy_n(src.pixels.data() + static_cast<size_t>(top + y) * src.width + left, width,
                dst.pixels.data() + static_cast<size_t>(y) * width);
  return dst;
}

GrayImage pad_to_multiple_reflect(const GrayImage& src, int multiple) {
  if (multiple < 1) throw ShapeError("pad_to_multiple_reflect: multiple must be >= 1");
  int out_h = ((src.height + multiple - 1) / multiple) * multiple;
  int out_w = ((src.width + multiple - 1) / multiple) * multiple;
  if (out_h == src.height && out_w == src.width) return src;
  if (out_h - src.height >= src.height || out_w - src.width >= src.width)
    throw ShapeError("pad_to_multiple_reflect: padding exceeds image size");
  GrayImage dst(out_h, out_w);
  auto mirror = [](int i, int n) { return i < n ? i : 2 * n - 2 - i; };
  for (int y = 0; y < out_h; ++y) {
    int sy = mirror(y, src.height);
    for (int x = 0; x < out_w; ++x) dst.at(y, x) = src.at(sy, mirror(x, src.width));
  }
  return dst;
}

}  // namespace cephmark
