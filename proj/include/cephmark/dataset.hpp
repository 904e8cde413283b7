#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cephmark/codec.hpp"
#include "cephmark/image.hpp"

namespace cephmark {

struct DatasetItem {
  std::string id;
  GrayImage image;
  std::vector<LandmarkSet> annotations;  // >= 1, all in `frame`
  Frame frame = Frame::original;
  std::string split;            // "train" | "test1" | "test2" | ""
  bool landmarks_out_of_crop = false;
};

struct CephDataset {
  std::vector<DatasetItem> items;
  double pixel_spacing_mm = 0.1;
  int num_landmarks = 19;

  void validate() const;
};

// Which annotation set acts as ground truth. "senior" is annotator 0 in the
// configured directory order, "junior" annotator 1; "average" is the
// per-landmark mean of all available sets (the challenge convention).
enum class GtPolicy { average, senior, junior };

GtPolicy gt_policy_from_name(const std::string& name);
const char* gt_policy_name(GtPolicy p);

LandmarkSet ground_truth(const DatasetItem& item, GtPolicy policy);

// One "x,y" line per landmark in canonical order. Annotations and
// prediction records share this layout, so one parser reads both.
LandmarkSet read_landmark_file(const std::string& path, int num_landmarks,
                               Frame frame = Frame::original);
void write_landmark_file(const std::string& path, const LandmarkSet& landmarks);

// On-disk layout of an ISBI-style dataset root. Annotator directory names
// vary across mirrors, so they are configurable; their order defines
// senior/junior.
struct IsbiLayout {
  std::string images_dir = "images";
  std::string annotations_dir = "annotations";
  std::vector<std::string> annotator_dirs = {"senior", "junior"};
  std::string image_ext = ".pgm";
  int num_landmarks = 19;
  double pixel_spacing_mm = 0.1;
};

// Reads images plus per-annotator landmark files ("x,y" per line, canonical
// order). Splits follow the challenge id ranges: 1-150 train, 151-300
// test1, 301-400 test2. Items missing an annotation file are rejected with
// a diagnostic.
CephDataset load_isbi(const std::string& root, const IsbiLayout& layout = {});

// Loads any dataset root: if root/manifest.json exists (synthetic datasets
// and other exports), the manifest drives layout, splits and checksums;
// otherwise falls back to the ISBI layout rules.
CephDataset load_dataset(const std::string& root, const IsbiLayout& layout = {});

// Writes images (16-bit PGM), annotation files and a manifest.json with
// per-file checksums so a run can pin its exact inputs.
void write_dataset(const std::string& root, const CephDataset& dataset,
                   const std::string& annotator_name = "synthetic", uint64_t seed = 0);

// The paper's preprocessing: remove `crop_top` rows from the top so the
// image becomes square; landmark y coordinates drop by the same amount.
struct PreprocessSpec {
  int crop_top = 465;
  double global_scale = 0.15;
  double local_scale = 0.5;

  void validate() const;
};

// original -> cropped frame. Landmarks falling outside the crop are flagged
// (validity mask cleared), never silently clipped.
DatasetItem preprocess(const DatasetItem& item, const PreprocessSpec& spec);

// cropped -> scaled frame: image resampled by area-averaging to
// round-half-up(dim * factor), coordinates multiplied by factor.
DatasetItem scale_item(const DatasetItem& item, double factor, Frame target_frame);

// One local-stage training sample: an image patch, the matching target
// heatmap window, and the anchor landmark that chose it.
struct PatchSample {
  GrayImage image;
  HeatmapStack<float> target;  // frame patch_local
  int anchor = 0;
  int origin_x = 0;
  int origin_y = 0;
};

// Anchor drawn uniformly from valid landmarks; the patch origin uniformly
// among positions keeping the anchor strictly inside the patch interior,
// clamped on-canvas near borders. The target window equals the same window
// of the full-frame encoding.
PatchSample sample_patch(const DatasetItem& item, const LandmarkSet& gt, int patch_size,
                         double distribution_width, Rng& rng);

// Full-frame target stack for an item's ground truth.
HeatmapStack<float> encode_item_target(const DatasetItem& item, const LandmarkSet& gt,
                                       double distribution_width);

}  // namespace cephmark
