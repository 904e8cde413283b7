#include <doctest.h>

#include <map>
#include <set>

#include "cephmark/pipeline.hpp"
#include "cephmark/synth.hpp"

using namespace cephmark;

namespace {

// brute-force pixel membership for a region list
std::set<std::pair<int, int>> cover_set(const std::vector<Region>& regions) {
  std::set<std::pair<int, int>> pixels;
  for (const Region& r : regions)
    for (int y = r.y; y < r.y + r.side; ++y)
      for (int x = r.x; x < r.x + r.side; ++x) pixels.insert({x, y});
  return pixels;
}

UNetConfig tiny_unet(int out_channels) {
  UNetConfig cfg;
  cfg.depth = 2;
  cfg.base_channels = 4;
  cfg.kernel_size = 3;
  cfg.in_channels = 1;
  cfg.out_channels = out_channels;
  return cfg;
}

}  // namespace

TEST_CASE("propose_regions reproduces the published 150/1.8 geometry") {
  LandmarkSet coarse({{500.0, 500.0}}, Frame::local_scaled);
  auto groups = propose_regions(coarse, 150, 1.8);
  REQUIRE(groups.size() == 1);
  const auto& regions = groups[0].regions;
  REQUIRE(regions.size() == 5);

  // expanded square [365, 635)^2; corners + centered patch
  CHECK(regions[0].x == 365);
  CHECK(regions[0].y == 365);
  CHECK(regions[1].x == 485);
  CHECK(regions[1].y == 365);
  CHECK(regions[2].x == 365);
  CHECK(regions[2].y == 485);
  CHECK(regions[3].x == 485);
  CHECK(regions[3].y == 485);
  CHECK(regions[4].x == 425);
  CHECK(regions[4].y == 425);
  for (const Region& r : regions) CHECK(r.side == 150);

  // adjacent corner patches overlap by (2 - eps) * P = 30 px
  CHECK(regions[0].x + regions[0].side - regions[1].x == 30);
  CHECK(regions[0].y + regions[0].side - regions[2].y == 30);

  // union equals the expanded square exactly
  auto pixels = cover_set(regions);
  CHECK(pixels.size() == 270u * 270u);
  CHECK(pixels.count({365, 365}) == 1);
  CHECK(pixels.count({634, 634}) == 1);
  CHECK(pixels.count({635, 365}) == 0);
}

TEST_CASE("propose_regions: union property on random centers; eps->1 collapse") {
  Rng rng(103);
  for (int trial = 0; trial < 30; ++trial) {
    int cx = static_cast<int>(rng.uniform_int(200, 800));
    int cy = static_cast<int>(rng.uniform_int(200, 800));
    LandmarkSet coarse({{static_cast<double>(cx), static_cast<double>(cy)}}, Frame::local_scaled);
    auto groups = propose_regions(coarse, 150, 1.8);
    auto pixels = cover_set(groups[0].regions);
    int ex0 = cx - 135, ey0 = cy - 135;
    CHECK(pixels.size() == 270u * 270u);
    for (const Region& r : groups[0].regions) {
      CHECK(r.side == 150);
      CHECK(r.x >= ex0);
      CHECK(r.y >= ey0);
      CHECK(r.x + r.side <= ex0 + 270);
      CHECK(r.y + r.side <= ey0 + 270);
    }
  }

  // the degenerate limit: all five regions coincide at the centered patch
  LandmarkSet coarse({{500.0, 500.0}}, Frame::local_scaled);
  auto collapsed = propose_regions(coarse, 150, 1.0);
  REQUIRE(collapsed[0].regions.size() == 1);
  CHECK(collapsed[0].regions[0].x == 425);
  CHECK(collapsed[0].regions[0].y == 425);

  CHECK_THROWS_AS(propose_regions(coarse, 150, 2.0), ShapeError);
  CHECK_THROWS_AS(propose_regions(coarse, 150, 0.9), ShapeError);
}

TEST_CASE("propose_regions: boundary shift and center fallback") {
  // near the canvas corner: regions shift inward, never off-canvas
  LandmarkSet coarse({{10.0, 950.0}}, Frame::local_scaled);
  auto groups = propose_regions(coarse, 150, 1.8, std::make_pair(968, 968));
  for (const Region& r : groups[0].regions) {
    CHECK(r.x >= 0);
    CHECK(r.y >= 0);
    CHECK(r.x + r.side <= 968);
    CHECK(r.y + r.side <= 968);
  }

  // invalid coarse point: centered proposals plus the warning flag
  LandmarkSet invalid({{0.0, 0.0}}, Frame::local_scaled);
  invalid.valid[0] = 0;
  auto fallback = propose_regions(invalid, 150, 1.8, std::make_pair(968, 968));
  CHECK(fallback[0].fallback_center);
  bool centered = false;
  for (const Region& r : fallback[0].regions)
    if (r.x == 968 / 2 - 75 && r.y == 968 / 2 - 75) centered = true;
  CHECK(centered);

  CHECK_THROWS_AS(propose_regions(invalid, 150, 1.8), ShapeError);
}

TEST_CASE("merge_patches: copy, averaging, oracle equality, channel policy") {
  const int K = 2;
  auto make_patch = [&](int side, double value, Region r, int anchor) {
    PatchPlacement<double> p;
    p.stack.frame = Frame::patch_local;
    p.stack.channels = ag::Tensor<double>::full({K + 1, side, side}, value);
    p.region = r;
    p.anchor = anchor;
    return p;
  };

  // a pixel covered by exactly one patch keeps its value
  auto single = merge_patches<double>({make_patch(4, 0.7, {2, 2, 4, Frame::local_scaled}, 0)},
                                      10, 10, K, Frame::local_scaled);
  CHECK(single.channels.values()[(0 * 10 + 3) * 10 + 3] == 0.7);
  CHECK(single.channels.values()[(0 * 10 + 0) * 10 + 0] == 0.0);  // uncovered stays 0

  // overlap of 0.4 and 0.6 averages to exactly 0.5
  auto two = merge_patches<double>({make_patch(4, 0.4, {0, 0, 4, Frame::local_scaled}, 0),
                                    make_patch(4, 0.6, {2, 0, 4, Frame::local_scaled}, 0)},
                                   10, 10, K, Frame::local_scaled);
  CHECK(two.channels.values()[(0 * 10 + 1) * 10 + 3] == 0.5);
  CHECK(two.channels.values()[(0 * 10 + 1) * 10 + 1] == 0.4);
  CHECK(two.channels.values()[(0 * 10 + 1) * 10 + 5] == 0.6);

  // anchor-only policy: channel 1 untouched by an anchor-0 patch
  CHECK(two.channels.values()[(1 * 10 + 1) * 10 + 1] == 0.0);
  auto all = merge_patches<double>({make_patch(4, 0.4, {0, 0, 4, Frame::local_scaled}, 0)},
                                   10, 10, K, Frame::local_scaled, MergeMode::all_channels);
  CHECK(all.channels.values()[(1 * 10 + 1) * 10 + 1] == 0.4);

  // randomized layouts vs an exhaustive cover-then-average loop
  Rng rng(107);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<PatchPlacement<double>> patches;
    const int canvas = 40;
    for (int i = 0; i < 6; ++i) {
      int side = static_cast<int>(rng.uniform_int(4, 10));
      Region r{static_cast<int>(rng.uniform_int(0, canvas - side)),
               static_cast<int>(rng.uniform_int(0, canvas - side)), side, Frame::local_scaled};
      PatchPlacement<double> p;
      p.stack.frame = Frame::patch_local;
      p.stack.channels = ag::Tensor<double>::zeros({K + 1, side, side});
      for (auto& v : p.stack.channels.values()) v = rng.next_double();
      p.region = r;
      p.anchor = static_cast<int>(rng.uniform_int(0, K - 1));
      patches.push_back(std::move(p));
    }
    auto merged = merge_patches<double>(patches, canvas, canvas, K, Frame::local_scaled);

    for (int c = 0; c <= K; ++c)
      for (int y = 0; y < canvas; ++y)
        for (int x = 0; x < canvas; ++x) {
          double total = 0.0;
          int count = 0;
          for (const auto& p : patches) {
            bool writes = (c == K) || (p.anchor == c);
            if (!writes) continue;
            if (x >= p.region.x && x < p.region.x + p.region.side && y >= p.region.y &&
                y < p.region.y + p.region.side) {
              total += p.stack.channels
                           .values()[(c * p.region.side + (y - p.region.y)) * p.region.side +
                                     (x - p.region.x)];
              ++count;
            }
          }
          double expect = count ? total / count : 0.0;
          double got = merged.channels.values()[(c * canvas + y) * canvas + x];
          CHECK(got == doctest::Approx(expect).epsilon(1e-12));
          if (count == 0) CHECK(got == 0.0);
        }
  }

  // region outside the canvas is a policy violation
  CHECK_THROWS_AS(merge_patches<double>({make_patch(4, 0.1, {8, 8, 4, Frame::local_scaled}, 0)},
                                        10, 10, K, Frame::local_scaled),
                  ShapeError);
}

TEST_CASE("coordinate frame round trip is the identity") {
  PreprocessSpec prep;  // crop 465, scales 0.15 / 0.5
  LandmarkSet original({{1234.5, 1789.25}, {300.0, 700.125}}, Frame::original);

  LandmarkSet cropped = translate_landmarks(original, 0.0, -prep.crop_top, Frame::cropped);
  LandmarkSet global = rescale_landmarks(cropped, prep.global_scale, Frame::global_scaled);
  LandmarkSet back_cropped = rescale_landmarks(global, 1.0 / prep.global_scale, Frame::cropped);
  LandmarkSet back = translate_landmarks(back_cropped, 0.0, prep.crop_top, Frame::original);

  for (int i = 0; i < original.size(); ++i) {
    CHECK(back.points[i].x == doctest::Approx(original.points[i].x).epsilon(1e-9));
    CHECK(back.points[i].y == doctest::Approx(original.points[i].y).epsilon(1e-9));
  }
}

TEST_CASE("forward_on_image pads and crops back to the input size") {
  auto model = build_unet<float>(tiny_unet(6), 11);
  GrayImage img(30, 30, 0.25f);  // 30 not divisible by 4
  auto stack = forward_on_image(model, nullptr, img, Frame::global_scaled);
  CHECK(stack.channels.shape() == std::vector<int>{6, 30, 30});
  for (int p = 0; p < 30 * 30; ++p) {
    double total = 0.0;
    for (int c = 0; c < 6; ++c) total += stack.channels.values()[c * 900 + p];
    CHECK(total == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("infer: eps->1 equals the no-expansion ablation exactly") {
  SynthConfig synth;
  synth.count = 1;
  synth.canvas = 128;
  synth.seed = 17;
  CephDataset ds = synth_generate(synth);
  PreprocessSpec prep;
  prep.crop_top = 0;
  DatasetItem cropped = preprocess(ds.items[0], prep);

  PipelineConfig cfg;
  cfg.prep = prep;
  cfg.global_stage.scale_factor = 0.25;
  cfg.global_stage.distribution_width = 8.0;
  cfg.local_stage.scale_factor = 1.0;
  cfg.local_stage.distribution_width = 8.0;
  cfg.local_stage.train_patch = 32;
  cfg.local_stage.infer_patch = 48;
  // epsilon just above 1 rounds the expanded square to the patch itself
  cfg.local_stage.expand_epsilon = 1.0 + 1e-9;

  auto global_model = build_unet<float>(tiny_unet(6), 21);
  auto local_model = build_unet<float>(tiny_unet(6), 22);

  InferResult near_one = infer(cropped.image, global_model, local_model, cfg, InferMode::full);
  InferResult ablation = infer(cropped.image, global_model, local_model, cfg,
                               InferMode::no_expand);
  REQUIRE(near_one.predictions.size() == ablation.predictions.size());
  for (int i = 0; i < near_one.predictions.size(); ++i) {
    CHECK(near_one.predictions.points[i].x == ablation.predictions.points[i].x);
    CHECK(near_one.predictions.points[i].y == ablation.predictions.points[i].y);
  }
  CHECK(near_one.merged_stack.channels.values() == ablation.merged_stack.channels.values());
}

TEST_CASE("infer is deterministic and preserves frames/modes") {
  SynthConfig synth;
  synth.count = 1;
  synth.canvas = 128;
  synth.seed = 19;
  CephDataset ds = synth_generate(synth);
  PreprocessSpec prep;
  prep.crop_top = 0;
  DatasetItem cropped = preprocess(ds.items[0], prep);

  PipelineConfig cfg;
  cfg.prep = prep;
  cfg.global_stage.scale_factor = 0.25;
  cfg.global_stage.distribution_width = 8.0;
  cfg.local_stage.scale_factor = 0.5;
  cfg.local_stage.distribution_width = 6.0;
  cfg.local_stage.train_patch = 32;
  cfg.local_stage.infer_patch = 40;

  auto global_model = build_unet<float>(tiny_unet(6), 31);
  auto local_model = build_unet<float>(tiny_unet(6), 32);

  InferResult a = infer(cropped.image, global_model, local_model, cfg, InferMode::full);
  InferResult b = infer(cropped.image, global_model, local_model, cfg, InferMode::full);
  REQUIRE(a.predictions.size() == 5);
  CHECK(a.predictions.frame == Frame::original);
  for (int i = 0; i < 5; ++i) {
    CHECK(a.predictions.points[i].x == b.predictions.points[i].x);
    CHECK(a.predictions.points[i].y == b.predictions.points[i].y);
  }
  CHECK(a.merged_stack.channels.values() == b.merged_stack.channels.values());
  CHECK(a.global_stack.channels.values() == b.global_stack.channels.values());

  InferResult stage1 = infer(cropped.image, global_model, local_model, cfg, InferMode::stage1);
  CHECK(stage1.predictions.frame == Frame::original);
  CHECK(!stage1.merged_stack.channels.defined());  // no local pass ran
  for (int i = 0; i < 5; ++i) {
    CHECK(stage1.predictions.points[i].x == stage1.coarse.points[i].x);
    CHECK(stage1.predictions.points[i].y == stage1.coarse.points[i].y);
  }
}

TEST_CASE("trainers: determinism and loss logging") {
  SynthConfig synth;
  synth.count = 3;
  synth.canvas = 128;
  synth.seed = 23;
  CephDataset ds = synth_generate(synth);
  PreprocessSpec prep;
  prep.crop_top = 0;

  std::vector<DatasetItem> global_items, local_items;
  for (const auto& item : ds.items) {
    DatasetItem cropped = preprocess(item, prep);
    global_items.push_back(scale_item(cropped, 0.25, Frame::global_scaled));
    local_items.push_back(scale_item(cropped, 0.5, Frame::local_scaled));
  }

  StageConfig stage;
  stage.scale_factor = 0.25;
  stage.distribution_width = 6.0;
  stage.epochs = 2;
  stage.batch_size = 2;

  LossConfig loss;
  TrainResult a = train_global(global_items, {}, stage, tiny_unet(6), loss, GtPolicy::senior, 5);
  TrainResult b = train_global(global_items, {}, stage, tiny_unet(6), loss, GtPolicy::senior, 5);
  REQUIRE(a.log.size() == 2);
  CHECK(a.log[0].train_loss == b.log[0].train_loss);
  CHECK(std::isnan(a.log[0].val_loss));  // no validation items supplied
  auto pa = a.model.parameters(), pb = b.model.parameters();
  for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].values() == pb[i].values());
  CHECK(a.optimizer.step_count == b.optimizer.step_count);

  StageConfig local_stage = stage;
  local_stage.scale_factor = 0.5;
  local_stage.train_patch = 32;
  local_stage.infer_patch = 48;
  TrainResult c =
      train_local(local_items, {local_items[0]}, local_stage, tiny_unet(6), loss,
                  GtPolicy::senior, 6);
  TrainResult d =
      train_local(local_items, {local_items[0]}, local_stage, tiny_unet(6), loss,
                  GtPolicy::senior, 6);
  CHECK(c.log.back().train_loss == d.log.back().train_loss);
  CHECK(c.log.back().val_loss == d.log.back().val_loss);
  CHECK(!std::isnan(c.log.back().val_loss));
  auto pc = c.model.parameters(), pd = d.model.parameters();
  for (size_t i = 0; i < pc.size(); ++i) CHECK(pc[i].values() == pd[i].values());

  CHECK_THROWS_AS(train_global({}, {}, stage, tiny_unet(6), loss, GtPolicy::senior, 1),
                  ConfigError);
  // frame guard: local trainer rejects global-frame items
  CHECK_THROWS_AS(
      train_local(global_items, {}, local_stage, tiny_unet(6), loss, GtPolicy::senior, 1),
      ShapeError);
}
