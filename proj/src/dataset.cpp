#include "cephmark/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace cephmark {

void CephDataset::validate() const {
  if (items.empty()) throw ConfigError("dataset: no items");
  if (pixel_spacing_mm <= 0.0) throw ConfigError("dataset: pixel spacing must be positive");
  const int h = items.front().image.height, w = items.front().image.width;
  for (const auto& item : items) {
    if (item.image.height != h || item.image.width != w)
      throw ConfigError("dataset: item " + item.id + " resolution differs from the rest");
    if (item.annotations.empty())
      throw ConfigError("dataset: item " + item.id + " has no annotation set");
    for (const auto& ann : item.annotations)
      if (ann.size() != num_landmarks)
        throw ConfigError("dataset: item " + item.id + " annotation has " +
                          std::to_string(ann.size()) + " landmarks, expected " +
                          std::to_string(num_landmarks));
  }
}

GtPolicy gt_policy_from_name(const std::string& name) {
  if (name == "average") return GtPolicy::average;
  if (name == "senior") return GtPolicy::senior;
  if (name == "junior") return GtPolicy::junior;
  throw ConfigError("unknown ground-truth policy: " + name);
}

const char* gt_policy_name(GtPolicy p) {
  switch (p) {
    case GtPolicy::average: return "average";
    case GtPolicy::senior: return "senior";
    case GtPolicy::junior: return "junior";
  }
  return "unknown";
}

LandmarkSet ground_truth(const DatasetItem& item, GtPolicy policy) {
  if (item.annotations.empty()) throw ConfigError("ground_truth: item has no annotations");
  switch (policy) {
    case GtPolicy::senior:
      return item.annotations[0];
    case GtPolicy::junior:
      if (item.annotations.size() < 2)
        throw ConfigError("ground_truth: item " + item.id + " has no junior annotation");
      return item.annotations[1];
    case GtPolicy::average: {
      LandmarkSet avg = item.annotations[0];
      const double n = static_cast<double>(item.annotations.size());
      for (size_t a = 1; a < item.annotations.size(); ++a) {
        const auto& ann = item.annotations[a];
        for (int i = 0; i < avg.size(); ++i) {
          avg.points[i].x += ann.points[i].x;
          avg.points[i].y += ann.points[i].y;
          avg.valid[i] = avg.valid[i] && ann.valid[i];
        }
      }
      for (auto& p : avg.points) {
        p.x /= n;
        p.y /= n;
      }
      return avg;
    }
  }
  throw ConfigError("ground_truth: bad policy");
}

LandmarkSet read_landmark_file(const std::string& path, int num_landmarks, Frame frame) {
  std::ifstream in(path);
  if (!in) throw ParseError("annotation: cannot open " + path);
  std::vector<Point> points;
  std::string line;
  int line_no = 0;
  while (points.size() < static_cast<size_t>(num_landmarks) && std::getline(in, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    // strtod handles "nan", which marks a failed detection in prediction
    // records; annotation files never contain it
    const char* s = line.c_str();
    char* after_x = nullptr;
    double x = std::strtod(s, &after_x);
    bool ok = after_x != s;
    while (ok && *after_x == ' ') ++after_x;
    ok = ok && *after_x == ',';
    char* after_y = nullptr;
    double y = ok ? std::strtod(after_x + 1, &after_y) : 0.0;
    ok = ok && after_y != after_x + 1;
    while (ok && *after_y == ' ') ++after_y;
    ok = ok && *after_y == '\0';
    if (!ok)
      throw ParseError("annotation: malformed coordinate at " + path + ":" +
                       std::to_string(line_no) + " ('" + line + "')");
    points.push_back({x, y});
  }
  if (points.size() < static_cast<size_t>(num_landmarks))
    throw ParseError("annotation: " + path + " has only " + std::to_string(points.size()) +
                     " landmarks, expected " + std::to_string(num_landmarks));
  LandmarkSet out(std::move(points), frame);
  for (int i = 0; i < out.size(); ++i)
    if (!std::isfinite(out.points[i].x) || !std::isfinite(out.points[i].y)) out.valid[i] = 0;
  return out;
}

void write_landmark_file(const std::string& path, const LandmarkSet& landmarks) {
  std::ofstream out(path);
  if (!out) throw ParseError("annotation: cannot write " + path);
  for (const auto& p : landmarks.points) {
    char line[64];
    std::snprintf(line, sizeof(line), "%.6f,%.6f\n", p.x, p.y);
    out << line;
  }
}

namespace {

std::string challenge_split(const std::string& id) {
  // challenge id ranges: 1-150 train, 151-300 test1, 301-400 test2
  try {
    size_t used = 0;
    int n = std::stoi(id, &used);
    if (used != id.size()) return "";
    if (n >= 1 && n <= 150) return "train";
    if (n >= 151 && n <= 300) return "test1";
    if (n >= 301 && n <= 400) return "test2";
  } catch (const std::exception&) {
  }
  return "";
}

uint64_t file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("checksum: cannot open " + path);
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h = fnv1a64(buf, static_cast<size_t>(in.gcount()), h);
  return h;
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

CephDataset load_isbi(const std::string& root, const IsbiLayout& layout) {
  fs::path base(root);
  fs::path images = base / layout.images_dir;
  if (!fs::is_directory(images))
    throw ConfigError("load_isbi: missing images directory " + images.string());

  std::vector<std::string> annotators;
  for (const auto& name : layout.annotator_dirs)
    if (fs::is_directory(base / layout.annotations_dir / name)) annotators.push_back(name);
  if (annotators.empty())
    throw ConfigError("load_isbi: no annotator directory found under " +
                      (base / layout.annotations_dir).string());

  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(images))
    if (entry.is_regular_file() && entry.path().extension() == layout.image_ext)
      ids.push_back(entry.path().stem().string());
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) throw ConfigError("load_isbi: no " + layout.image_ext + " images in " +
                                     images.string());

  CephDataset ds;
  ds.pixel_spacing_mm = layout.pixel_spacing_mm;
  ds.num_landmarks = layout.num_landmarks;
  for (const auto& id : ids) {
    DatasetItem item;
    item.id = id;
    bool complete = true;
    for (const auto& ann : annotators) {
      fs::path path = base / layout.annotations_dir / ann / (id + ".txt");
      if (!fs::is_regular_file(path)) {
        std::fprintf(stderr, "load_isbi: item %s rejected: missing annotation file %s\n",
                     id.c_str(), path.string().c_str());
        complete = false;
        break;
      }
      item.annotations.push_back(read_landmark_file(path.string(), layout.num_landmarks));
    }
    if (!complete) continue;
    item.image = read_pgm((images / (id + layout.image_ext)).string());
    item.frame = Frame::original;
    item.split = challenge_split(id);
    ds.items.push_back(std::move(item));
  }
  ds.validate();
  return ds;
}

CephDataset load_dataset(const std::string& root, const IsbiLayout& layout) {
  fs::path manifest_path = fs::path(root) / "manifest.json";
  if (!fs::is_regular_file(manifest_path)) return load_isbi(root, layout);

  std::ifstream in(manifest_path);
  json m = json::parse(in, nullptr, true, true);
  CephDataset ds;
  ds.pixel_spacing_mm = m.at("pixel_spacing_mm").get<double>();
  ds.num_landmarks = m.at("num_landmarks").get<int>();
  for (const auto& entry : m.at("items")) {
    DatasetItem item;
    item.id = entry.at("id").get<std::string>();
    item.split = entry.at("split").get<std::string>();
    std::string image_rel = entry.at("image").get<std::string>();
    std::string image_path = (fs::path(root) / image_rel).string();
    if (entry.contains("checksum")) {
      std::string want = entry.at("checksum").get<std::string>();
      std::string got = hex64(file_checksum(image_path));
      if (want != got)
        throw ConfigError("load_dataset: checksum mismatch for " + image_rel + " (manifest " +
                          want + ", file " + got + ")");
    }
    item.image = read_pgm(image_path);
    for (const auto& ann_rel : entry.at("annotations"))
      item.annotations.push_back(read_landmark_file(
          (fs::path(root) / ann_rel.get<std::string>()).string(), ds.num_landmarks));
    item.frame = Frame::original;
    ds.items.push_back(std::move(item));
  }
  ds.validate();
  return ds;
}

void write_dataset(const std::string& root, const CephDataset& dataset,
                   const std::string& annotator_name, uint64_t seed) {
  fs::path base(root);
  fs::create_directories(base / "images");
  fs::create_directories(base / "annotations" / annotator_name);

  json items = json::array();
  for (const auto& item : dataset.items) {
    std::string image_rel = "images/" + item.id + ".pgm";
    write_pgm((base / image_rel).string(), item.image);
    json ann_list = json::array();
    for (size_t a = 0; a < item.annotations.size(); ++a) {
      std::string suffix = a == 0 ? "" : "_" + std::to_string(a);
      std::string ann_rel =
          "annotations/" + annotator_name + suffix + "/" + item.id + ".txt";
      fs::create_directories((base / ann_rel).parent_path());
      write_landmark_file((base / ann_rel).string(), item.annotations[a]);
      ann_list.push_back(ann_rel);
    }
    items.push_back({{"id", item.id},
                     {"split", item.split},
                     {"image", image_rel},
                     {"checksum", hex64(file_checksum((base / image_rel).string()))},
                     {"annotations", ann_list}});
  }
  json manifest = {{"kind", "synthetic"},
                   {"seed", seed},
                   {"pixel_spacing_mm", dataset.pixel_spacing_mm},
                   {"num_landmarks", dataset.num_landmarks},
                   {"items", items}};
  std::ofstream out(base / "manifest.json");
  out << manifest.dump(2) << "\n";
}

void PreprocessSpec::validate() const {
  if (crop_top < 0) throw ConfigError("preprocess: crop_top must be >= 0");
  if (!(global_scale > 0.0) || !(local_scale > 0.0))
    throw ConfigError("preprocess: scale factors must be positive");
}

DatasetItem preprocess(const DatasetItem& item, const PreprocessSpec& spec) {
  spec.validate();
  if (item.frame != Frame::original)
    throw ShapeError(std::string("preprocess: expected original-frame item, got ") +
                     frame_name(item.frame));
  const int out_h = item.image.height - spec.crop_top;
  if (out_h < 1)
    throw ShapeError("preprocess: crop_top " + std::to_string(spec.crop_top) +
                     " exceeds image height " + std::to_string(item.image.height));
  if (out_h != item.image.width)
    throw ShapeError("preprocess: crop of " + std::to_string(spec.crop_top) +
                     " rows leaves " + std::to_string(out_h) + "x" +
                     std::to_string(item.image.width) + ", not a square");

  DatasetItem out = item;
  out.image = crop(item.image, spec.crop_top, 0, out_h, item.image.width);
  out.frame = Frame::cropped;
  out.landmarks_out_of_crop = false;
  for (auto& ann : out.annotations) {
    ann = translate_landmarks(ann, 0.0, -static_cast<double>(spec.crop_top), Frame::cropped);
    for (int i = 0; i < ann.size(); ++i) {
      const Point& p = ann.points[i];
      if (p.y < 0.0 || p.y >= out_h || p.x < 0.0 || p.x >= item.image.width) {
        ann.valid[i] = 0;
        out.landmarks_out_of_crop = true;
      }
    }
  }
  return out;
}

DatasetItem scale_item(const DatasetItem& item, double factor, Frame target_frame) {
  if (!(factor > 0.0)) throw ShapeError("scale_item: factor must be positive");
  if (item.frame != Frame::cropped)
    throw ShapeError(std::string("scale_item: expected cropped-frame item, got ") +
                     frame_name(item.frame));
  if (target_frame != Frame::global_scaled && target_frame != Frame::local_scaled)
    throw ShapeError("scale_item: target frame must be a scaled frame");

  DatasetItem out = item;
  out.image = resample_area(item.image, scaled_dim(item.image.height, factor),
                            scaled_dim(item.image.width, factor));
  out.frame = target_frame;
  for (auto& ann : out.annotations) ann = rescale_landmarks(ann, factor, target_frame);
  return out;
}

HeatmapStack<float> encode_item_target(const DatasetItem& item, const LandmarkSet& gt,
                                       double distribution_width) {
  HeatmapSpec spec = HeatmapSpec::make(item.image.height, item.image.width, gt.size(),
                                       distribution_width, item.frame);
  return encode_heatmaps<float>(gt, spec);
}

PatchSample sample_patch(const DatasetItem& item, const LandmarkSet& gt, int patch_size,
                         double distribution_width, Rng& rng) {
  if (item.frame != Frame::local_scaled)
    throw ShapeError(std::string("sample_patch: expected local-frame item, got ") +
                     frame_name(item.frame));
  if (gt.frame != item.frame) throw ShapeError("sample_patch: ground truth frame mismatch");
  const int height = item.image.height, width = item.image.width;
  if (patch_size > height || patch_size > width)
    throw ShapeError("sample_patch: patch " + std::to_string(patch_size) + " exceeds image " +
                     std::to_string(height) + "x" + std::to_string(width));

  std::vector<int> candidates;
  for (int i = 0; i < gt.size(); ++i)
    if (gt.valid[i]) candidates.push_back(i);
  if (candidates.empty()) throw ShapeError("sample_patch: item has no valid landmarks");
  const int anchor = candidates[rng.uniform_int(0, static_cast<int64_t>(candidates.size()) - 1)];
  const Point& a = gt.points[anchor];

  // origins keeping the anchor strictly inside the patch interior
  auto origin_range = [patch_size](double coord, int canvas, int& lo, int& hi) {
    lo = static_cast<int>(std::ceil(coord)) - (patch_size - 2);
    hi = static_cast<int>(std::floor(coord)) - 1;
    lo = std::max(lo, 0);
    hi = std::min(hi, canvas - patch_size);
    if (hi < lo) {  // border squeeze: clamp a centered placement on-canvas
      int centered = round_half_up(coord) - patch_size / 2;
      lo = hi = std::clamp(centered, 0, canvas - patch_size);
    }
  };
  int x_lo, x_hi, y_lo, y_hi;
  origin_range(a.x, width, x_lo, x_hi);
  origin_range(a.y, height, y_lo, y_hi);
  const int x0 = static_cast<int>(rng.uniform_int(x_lo, x_hi));
  const int y0 = static_cast<int>(rng.uniform_int(y_lo, y_hi));

  PatchSample sample;
  sample.anchor = anchor;
  sample.origin_x = x0;
  sample.origin_y = y0;
  sample.image = crop(item.image, y0, x0, patch_size, patch_size);

  // window of the full-frame encoding; translation keeps rasterization exact
  LandmarkSet shifted = translate_landmarks(gt, -x0, -y0, Frame::patch_local);
  HeatmapSpec spec = HeatmapSpec::make(patch_size, patch_size, gt.size(), distribution_width,
                                       Frame::patch_local);
  sample.target = encode_heatmaps<float>(shifted, spec);
  return sample;
}

}  // namespace cephmark
