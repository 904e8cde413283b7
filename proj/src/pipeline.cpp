#include "cephmark/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cephmark {

std::vector<RegionGroup> propose_regions(const LandmarkSet& coarse, int patch_side, double epsilon,
                                         std::optional<std::pair<int, int>> canvas_hw) {
  if (patch_side < 1) throw ShapeError("propose_regions: patch side must be >= 1");
  if (!(epsilon >= 1.0 && epsilon < 2.0))
    throw ShapeError("propose_regions: epsilon must be in [1, 2), got " + std::to_string(epsilon));
  int canvas_h = 0, canvas_w = 0;
  if (canvas_hw) {
    canvas_h = canvas_hw->first;
    canvas_w = canvas_hw->second;
    if (patch_side > canvas_h || patch_side > canvas_w)
      throw ShapeError("propose_regions: patch side " + std::to_string(patch_side) +
                       " exceeds canvas " + std::to_string(canvas_h) + "x" +
                       std::to_string(canvas_w));
  }

  int expand_side = std::max(patch_side, round_half_up(epsilon * patch_side));
  const int shift = expand_side - patch_side;  // corner offset; 2P - expand = overlap

  std::vector<RegionGroup> out;
  out.reserve(coarse.size());
  for (int i = 0; i < coarse.size(); ++i) {
    RegionGroup group;
    int cx, cy;
    if (coarse.valid[i]) {
      cx = round_half_up(coarse.points[i].x);
      cy = round_half_up(coarse.points[i].y);
    } else {
      if (!canvas_hw)
        throw ShapeError("propose_regions: landmark " + std::to_string(i) +
                         " has no coarse detection and no canvas for a fallback");
      group.fallback_center = true;
      cx = canvas_w / 2;
      cy = canvas_h / 2;
    }
    const int ex0 = cx - expand_side / 2;
    const int ey0 = cy - expand_side / 2;
    const int center_off = shift / 2;
    Region candidates[5] = {
        {ex0, ey0, patch_side, coarse.frame},
        {ex0 + shift, ey0, patch_side, coarse.frame},
        {ex0, ey0 + shift, patch_side, coarse.frame},
        {ex0 + shift, ey0 + shift, patch_side, coarse.frame},
        {ex0 + center_off, ey0 + center_off, patch_side, coarse.frame},
    };
    for (Region r : candidates) {
      if (canvas_hw) {
        r.x = std::clamp(r.x, 0, canvas_w - patch_side);
        r.y = std::clamp(r.y, 0, canvas_h - patch_side);
      }
      if (std::find(group.regions.begin(), group.regions.end(), r) == group.regions.end())
        group.regions.push_back(r);
    }
    out.push_back(std::move(group));
  }
  return out;
}

ag::Tensor<float> image_tensor(const GrayImage& image) {
  std::vector<float> data = image.pixels;
  return ag::Tensor<float>::from_data({1, image.height, image.width}, std::move(data));
}

HeatmapStack<float> forward_on_image(const UNetModel<float>& model, ag::Tape<float>* tape,
                                     const GrayImage& image, Frame frame) {
  GrayImage padded = pad_to_multiple_reflect(image, model.config.spatial_multiple());
  HeatmapStack<float> out = unet_forward(model, tape, image_tensor(padded), frame);
  if (padded.height != image.height || padded.width != image.width)
    out.channels = ag::crop_spatial(tape, out.channels, 0, 0, image.height, image.width);
  return out;
}

namespace {

struct StageData {
  const DatasetItem* item;
  LandmarkSet gt;
  HeatmapStack<float> target;  // full-frame target (global stage only)
};

double run_validation(const UNetModel<float>& model,
                      const std::vector<const DatasetItem*>& items,
                      const std::vector<LandmarkSet>& gts, const StageConfig& stage,
                      const LossConfig& loss_cfg) {
  if (items.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  for (size_t i = 0; i < items.size(); ++i) {
    HeatmapStack<float> target = encode_item_target(*items[i], gts[i], stage.distribution_width);
    HeatmapStack<float> pred = forward_on_image(model, nullptr, items[i]->image,
                                                items[i]->frame);
    // per-sample total: batch normalization does not apply to reporting
    total += static_cast<double>(heatmap_loss<float>(nullptr, pred.channels, target.channels,
                                                     loss_cfg, 1)
                                     .item());
  }
  return total / static_cast<double>(items.size());
}

LossConfig epoch_loss_config(const LossConfig& base, int epoch) {
  LossConfig cfg = base;
  if (epoch < cfg.focal_start_epoch) cfg.focal_weight = 0.0;
  return cfg;
}

void check_frames(const std::vector<DatasetItem>& items, Frame expected, const char* who) {
  for (const auto& item : items)
    if (item.frame != expected)
      throw ShapeError(std::string(who) + ": expected " + frame_name(expected) +
                       "-frame items, got " + frame_name(item.frame));
}

}  // namespace

TrainResult train_global(const std::vector<DatasetItem>& train_items,
                         const std::vector<DatasetItem>& val_items, const StageConfig& stage,
                         const UNetConfig& unet_cfg, const LossConfig& loss_cfg, GtPolicy gt,
                         uint64_t seed) {
  stage.validate();
  unet_cfg.validate();
  loss_cfg.validate();
  if (train_items.empty()) throw ConfigError("train_global: empty dataset");
  check_frames(train_items, Frame::global_scaled, "train_global");
  check_frames(val_items, Frame::global_scaled, "train_global");

  Rng rng(seed);
  TrainResult result;
  result.model = build_unet<float>(unet_cfg, rng.derive());
  if (stage.background_prior != 0.0)
    apply_background_prior(result.model, stage.background_prior);
  result.optimizer.learning_rate = stage.learning_rate;
  auto params = result.model.parameters();
  result.optimizer.attach(params);

  std::vector<LandmarkSet> gts, val_gts;
  std::vector<HeatmapStack<float>> targets;
  for (const auto& item : train_items) {
    gts.push_back(ground_truth(item, gt));
    targets.push_back(encode_item_target(item, gts.back(), stage.distribution_width));
  }
  std::vector<const DatasetItem*> val_ptrs;
  for (const auto& item : val_items) {
    val_ptrs.push_back(&item);
    val_gts.push_back(ground_truth(item, gt));
  }

  std::vector<int> order(train_items.size());
  std::iota(order.begin(), order.end(), 0);
  const int N = stage.batch_size;

  for (int epoch = 0; epoch < stage.epochs; ++epoch) {
    LossConfig cfg = epoch_loss_config(loss_cfg, epoch);
    rng.shuffle(order.begin(), order.end());
    double epoch_total = 0.0;
    int in_batch = 0;
    for (size_t step = 0; step < order.size(); ++step) {
      int idx = order[step];
      ag::Tape<float> tape;
      HeatmapStack<float> pred =
          forward_on_image(result.model, &tape, train_items[idx].image, Frame::global_scaled);
      ag::Tensor<float> loss =
          heatmap_loss<float>(&tape, pred.channels, targets[idx].channels, cfg, N);
      epoch_total += static_cast<double>(loss.item()) * N;
      tape.backward(loss);
      if (++in_batch == N || step + 1 == order.size()) {
        ag::optimizer_step(result.optimizer, params);
        in_batch = 0;
      }
    }
    EpochLoss entry;
    entry.epoch = epoch;
    entry.train_loss = epoch_total / static_cast<double>(order.size());
    entry.val_loss = run_validation(result.model, val_ptrs, val_gts, stage, cfg);
    result.log.push_back(entry);
  }
  return result;
}

TrainResult train_local(const std::vector<DatasetItem>& train_items,
                        const std::vector<DatasetItem>& val_items, const StageConfig& stage,
                        const UNetConfig& unet_cfg, const LossConfig& loss_cfg, GtPolicy gt,
                        uint64_t seed) {
  stage.validate();
  unet_cfg.validate();
  loss_cfg.validate();
  if (train_items.empty()) throw ConfigError("train_local: empty dataset");
  check_frames(train_items, Frame::local_scaled, "train_local");
  for (const auto& item : train_items)
    if (stage.train_patch > item.image.height || stage.train_patch > item.image.width)
      throw ConfigError("train_local: patch " + std::to_string(stage.train_patch) +
                        " exceeds image " + std::to_string(item.image.height) + "x" +
                        std::to_string(item.image.width));

  Rng rng(seed);
  TrainResult result;
  result.model = build_unet<float>(unet_cfg, rng.derive());
  if (stage.background_prior != 0.0)
    apply_background_prior(result.model, stage.background_prior);
  result.optimizer.learning_rate = stage.learning_rate;
  auto params = result.model.parameters();
  result.optimizer.attach(params);

  std::vector<LandmarkSet> gts;
  for (const auto& item : train_items) gts.push_back(ground_truth(item, gt));
  if (!val_items.empty()) check_frames(val_items, Frame::local_scaled, "train_local");

  std::vector<int> order(train_items.size());
  std::iota(order.begin(), order.end(), 0);
  const int N = stage.batch_size;

  for (int epoch = 0; epoch < stage.epochs; ++epoch) {
    LossConfig cfg = epoch_loss_config(loss_cfg, epoch);
    rng.shuffle(order.begin(), order.end());
    double epoch_total = 0.0;
    int in_batch = 0;
    for (size_t step = 0; step < order.size(); ++step) {
      int idx = order[step];
      PatchSample sample = sample_patch(train_items[idx], gts[idx], stage.train_patch,
                                        stage.distribution_width, rng);
      ag::Tape<float> tape;
      HeatmapStack<float> pred =
          forward_on_image(result.model, &tape, sample.image, Frame::patch_local);
      ag::Tensor<float> loss =
          heatmap_loss<float>(&tape, pred.channels, sample.target.channels, cfg, N);
      epoch_total += static_cast<double>(loss.item()) * N;
      tape.backward(loss);
      if (++in_batch == N || step + 1 == order.size()) {
        ag::optimizer_step(result.optimizer, params);
        in_batch = 0;
      }
    }
    EpochLoss entry;
    entry.epoch = epoch;
    entry.train_loss = epoch_total / static_cast<double>(order.size());
    if (!val_items.empty()) {
      // deterministic validation patches, re-drawn per epoch
      Rng val_rng(seed ^ (0x1000193ull + static_cast<uint64_t>(epoch)));
      double total = 0.0;
      for (size_t i = 0; i < val_items.size(); ++i) {
        PatchSample s = sample_patch(val_items[i], ground_truth(val_items[i], gt),
                                     stage.train_patch, stage.distribution_width, val_rng);
        HeatmapStack<float> pred =
            forward_on_image(result.model, nullptr, s.image, Frame::patch_local);
        total += static_cast<double>(
            heatmap_loss<float>(nullptr, pred.channels, s.target.channels, cfg, 1).item());
      }
      entry.val_loss = total / static_cast<double>(val_items.size());
    }
    result.log.push_back(entry);
  }
  return result;
}

InferMode infer_mode_from_name(const std::string& name) {
  if (name == "full") return InferMode::full;
  if (name == "stage1") return InferMode::stage1;
  if (name == "no-expand" || name == "no_expand") return InferMode::no_expand;
  throw ConfigError("unknown inference mode: " + name);
}

const char* infer_mode_name(InferMode m) {
  switch (m) {
    case InferMode::full: return "full";
    case InferMode::stage1: return "stage1";
    case InferMode::no_expand: return "no-expand";
  }
  return "unknown";
}

InferResult infer(const GrayImage& cropped_image, const UNetModel<float>& global_model,
                  const UNetModel<float>& local_model, const PipelineConfig& config,
                  InferMode mode) {
  config.global_stage.validate();
  config.local_stage.validate();
  config.prep.validate();
  if (cropped_image.height != cropped_image.width)
    throw ShapeError("infer: expected a square cropped image, got " +
                     std::to_string(cropped_image.height) + "x" +
                     std::to_string(cropped_image.width));

  InferResult result;

  // stage 1: whole-image forward on the global frame
  GrayImage global_img =
      resample_area(cropped_image, scaled_dim(cropped_image.height, config.global_stage.scale_factor),
                    scaled_dim(cropped_image.width, config.global_stage.scale_factor));
  result.global_stack = forward_on_image(global_model, nullptr, global_img, Frame::global_scaled);
  LandmarkSet coarse_global = decode_coarse(result.global_stack);

  const double uncrop_dy = static_cast<double>(config.prep.crop_top);
  {
    LandmarkSet coarse_cropped = rescale_landmarks(
        coarse_global, 1.0 / config.global_stage.scale_factor, Frame::cropped);
    result.coarse = translate_landmarks(coarse_cropped, 0.0, uncrop_dy, Frame::original);
  }
  result.fallback.assign(coarse_global.size(), 0);

  if (mode == InferMode::stage1) {
    result.predictions = result.coarse;
    return result;
  }

  // stage 2: attention-guided patch inference on the local frame
  GrayImage local_img =
      resample_area(cropped_image, scaled_dim(cropped_image.height, config.local_stage.scale_factor),
                    scaled_dim(cropped_image.width, config.local_stage.scale_factor));
  LandmarkSet coarse_local = rescale_landmarks(
      coarse_global, config.local_stage.scale_factor / config.global_stage.scale_factor,
      Frame::local_scaled);

  const double epsilon = mode == InferMode::no_expand ? 1.0 : config.local_stage.expand_epsilon;
  std::vector<RegionGroup> groups =
      propose_regions(coarse_local, config.local_stage.infer_patch, epsilon,
                      std::make_pair(local_img.height, local_img.width));

  std::vector<PatchPlacement<float>> placements;
  for (size_t i = 0; i < groups.size(); ++i) {
    if (groups[i].fallback_center) result.fallback[i] = 1;
    for (const Region& r : groups[i].regions) {
      GrayImage patch = crop(local_img, r.y, r.x, r.side, r.side);
      HeatmapStack<float> stack =
          forward_on_image(local_model, nullptr, patch, Frame::patch_local);
      placements.push_back({std::move(stack), r, static_cast<int>(i)});
    }
  }

  result.merged_stack =
      merge_patches(placements, local_img.height, local_img.width,
                    static_cast<int>(groups.size()), Frame::local_scaled, config.merge_mode);
  if (config.keep_patch_stacks) result.patch_stacks = std::move(placements);

  LandmarkSet fine_local = decode_fine(result.merged_stack);
  LandmarkSet fine_cropped =
      rescale_landmarks(fine_local, 1.0 / config.local_stage.scale_factor, Frame::cropped);
  result.predictions = translate_landmarks(fine_cropped, 0.0, uncrop_dy, Frame::original);
  return result;
}

}  // namespace cephmark
