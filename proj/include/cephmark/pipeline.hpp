#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "cephmark/adam.hpp"
#include "cephmark/dataset.hpp"
#include "cephmark/loss.hpp"
#include "cephmark/unet.hpp"

namespace cephmark {

// Per-stage knobs. Paper-protocol defaults: the global stage works on the
// 0.15-scaled frame with 40 px wide targets; the local stage on the
// 0.5-scaled frame with 30 px targets, 100 px training patches, 150 px
// inference patches and expand parameter 1.8.
struct StageConfig {
  double scale_factor = 0.15;
  double distribution_width = 40.0;
  int train_patch = 100;
  int infer_patch = 150;
  double expand_epsilon = 1.8;
  int epochs = 40;
  double learning_rate = 1e-3;
  int batch_size = 1;
  // head-bias logit for the shared background channel at init; 0 keeps the
  // plain seeded init, 4.6 starts landmark priors near 0.01
  double background_prior = 4.6;

  void validate() const {
    if (!(scale_factor > 0.0)) throw ConfigError("stage: scale_factor must be positive");
    if (!(distribution_width > 0.0)) throw ConfigError("stage: distribution_width must be positive");
    if (train_patch < 1 || infer_patch < train_patch)
      throw ConfigError("stage: need infer_patch >= train_patch >= 1");
    if (!(expand_epsilon > 1.0 && expand_epsilon < 2.0))
      throw ConfigError("stage: expand_epsilon must be in (1, 2)");
    if (epochs < 1) throw ConfigError("stage: epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("stage: learning_rate must be positive");
    if (batch_size < 1) throw ConfigError("stage: batch_size must be >= 1");
  }
};

// Axis-aligned square in integer pixel coordinates.
struct Region {
  int x = 0;
  int y = 0;
  int side = 0;
  Frame frame = Frame::local_scaled;

  bool operator==(const Region&) const = default;
};

struct RegionGroup {
  std::vector<Region> regions;  // exact duplicates collapsed
  bool fallback_center = false; // coarse detection failed; centered on canvas
};

// Expansive-exploration layout per landmark: 4 patches of side P flush in
// the corners of the eps*P square centered at the coarse location, plus one
// centered patch. Exact duplicates (the eps -> 1 limit) collapse to one.
// With a canvas, regions crossing the edge are shifted inward, and invalid
// coarse points fall back to canvas-centered regions.
std::vector<RegionGroup> propose_regions(const LandmarkSet& coarse, int patch_side,
                                         double epsilon,
                                         std::optional<std::pair<int, int>> canvas_hw = {});

enum class MergeMode { anchor_only, all_channels };

template <typename T>
struct PatchPlacement {
  HeatmapStack<T> stack;  // [K+1, side, side], frame patch_local
  Region region;          // where it lands on the canvas
  int anchor = 0;         // landmark whose channel this patch contributes
};

// Assembles H_M: per pixel and channel, the arithmetic mean over the patch
// predictions covering it; pixels no patch covers stay 0. anchor_only takes
// just the anchor landmark channel plus background from each patch.
template <typename T>
HeatmapStack<T> merge_patches(const std::vector<PatchPlacement<T>>& patches, int canvas_height,
                              int canvas_width, int num_landmarks, Frame frame,
                              MergeMode mode = MergeMode::anchor_only) {
  const int K = num_landmarks;
  const int64_t plane = static_cast<int64_t>(canvas_height) * canvas_width;
  std::vector<double> accum(static_cast<size_t>(K + 1) * plane, 0.0);
  std::vector<int32_t> cover(static_cast<size_t>(K + 1) * plane, 0);

  for (const auto& p : patches) {
    const Region& r = p.region;
    if (r.x < 0 || r.y < 0 || r.x + r.side > canvas_width || r.y + r.side > canvas_height)
      throw ShapeError("merge_patches: region outside canvas (boundary policy violated upstream)");
    if (p.stack.num_channels() != K + 1 || p.stack.height() != r.side ||
        p.stack.width() != r.side)
      throw ShapeError("merge_patches: patch stack " + shape_str(p.stack.channels.shape()) +
                       " does not match region side " + std::to_string(r.side));
    if (p.anchor < 0 || p.anchor >= K) throw ShapeError("merge_patches: anchor out of range");

    const T* src = p.stack.channels.values().data();
    const int64_t patch_plane = static_cast<int64_t>(r.side) * r.side;
    auto splat = [&](int channel) {
      double* dst_acc = accum.data() + static_cast<int64_t>(channel) * plane;
      int32_t* dst_cov = cover.data() + static_cast<int64_t>(channel) * plane;
      const T* ch = src + static_cast<int64_t>(channel) * patch_plane;
      for (int yy = 0; yy < r.side; ++yy) {
        int64_t row = static_cast<int64_t>(r.y + yy) * canvas_width + r.x;
        for (int xx = 0; xx < r.side; ++xx) {
          dst_acc[row + xx] += static_cast<double>(ch[yy * r.side + xx]);
          dst_cov[row + xx] += 1;
        }
      }
    };
    if (mode == MergeMode::all_channels) {
      for (int ch = 0; ch <= K; ++ch) splat(ch);
    } else {
      splat(p.anchor);
      splat(K);  // shared background
    }
  }

  HeatmapStack<T> merged;
  merged.frame = frame;
  merged.channels = ag::Tensor<T>::zeros({K + 1, canvas_height, canvas_width});
  T* out = merged.channels.values().data();
  for (size_t i = 0; i < accum.size(); ++i)
    if (cover[i] > 0) out[i] = static_cast<T>(accum[i] / cover[i]);
  return merged;
}

ag::Tensor<float> image_tensor(const GrayImage& image);

// Reflect-pads to the model's spatial multiple, runs the forward pass, and
// crops the stack back to the image size (differentiably when recording).
HeatmapStack<float> forward_on_image(const UNetModel<float>& model, ag::Tape<float>* tape,
                                     const GrayImage& image, Frame frame);

struct EpochLoss {
  int epoch = 0;
  double train_loss = 0.0;  // mean per-sample Eq.3 total
  double val_loss = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  UNetModel<float> model;
  ag::AdamState<float> optimizer;
  std::vector<EpochLoss> log;
};

// Whole-image training on global-frame items.
TrainResult train_global(const std::vector<DatasetItem>& train_items,
                         const std::vector<DatasetItem>& val_items, const StageConfig& stage,
                         const UNetConfig& unet_cfg, const LossConfig& loss_cfg, GtPolicy gt,
                         uint64_t seed);

// Random patch training on local-frame items; one patch per item per epoch,
// anchors drawn uniformly so all landmarks are traversed over epochs.
TrainResult train_local(const std::vector<DatasetItem>& train_items,
                        const std::vector<DatasetItem>& val_items, const StageConfig& stage,
                        const UNetConfig& unet_cfg, const LossConfig& loss_cfg, GtPolicy gt,
                        uint64_t seed);

enum class InferMode { full, stage1, no_expand };

InferMode infer_mode_from_name(const std::string& name);
const char* infer_mode_name(InferMode m);

struct PipelineConfig {
  StageConfig global_stage{};
  StageConfig local_stage{.scale_factor = 0.5, .distribution_width = 30.0};
  PreprocessSpec prep{};
  MergeMode merge_mode = MergeMode::anchor_only;
  bool keep_patch_stacks = false;  // large at full scale; enable for dumps
};

struct InferResult {
  LandmarkSet predictions;          // Frame::original
  LandmarkSet coarse;               // stage-1 decode, Frame::original
  std::vector<uint8_t> fallback;    // per landmark: proposals defaulted to center
  HeatmapStack<float> global_stack; // H_G
  HeatmapStack<float> merged_stack; // H_M (empty tensor in stage1 mode)
  std::vector<PatchPlacement<float>> patch_stacks;  // kept on request
};

// Full two-stage inference on a cropped-frame image: global forward,
// coarse decode, attention-guided expansive patch inference, merge, fine
// decode, and mapping back to the original frame.
InferResult infer(const GrayImage& cropped_image, const UNetModel<float>& global_model,
                  const UNetModel<float>& local_model, const PipelineConfig& config,
                  InferMode mode = InferMode::full);

}  // namespace cephmark
