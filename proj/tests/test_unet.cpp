#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "cephmark/checkpoint.hpp"
#include "cephmark/loss.hpp"
#include "cephmark/unet.hpp"
#include "gradcheck.hpp"

using namespace cephmark;
using ag::Tensor;
using ag::Tape;

namespace {

UNetConfig small_cfg() {
  UNetConfig cfg;
  cfg.depth = 2;
  cfg.base_channels = 4;
  cfg.kernel_size = 3;
  cfg.in_channels = 1;
  cfg.out_channels = 20;
  return cfg;
}

Tensor<double> random_image(Rng& rng, int h, int w) {
  std::vector<double> v(static_cast<size_t>(h) * w);
  for (auto& x : v) x = rng.next_double();
  return Tensor<double>::from_data({1, h, w}, std::move(v));
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("build_unet: seeded determinism and validation") {
  auto a = build_unet<float>(small_cfg(), 1234);
  auto b = build_unet<float>(small_cfg(), 1234);
  auto c = build_unet<float>(small_cfg(), 1235);
  auto pa = a.named_parameters(), pb = b.named_parameters(), pc = c.named_parameters();
  REQUIRE(pa.size() == pb.size());
  bool any_diff = false;
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].first == pb[i].first);
    CHECK(pa[i].second.values() == pb[i].second.values());  // byte-identical
    if (pc[i].second.values() != pa[i].second.values()) any_diff = true;
  }
  CHECK(any_diff);

  UNetConfig bad = small_cfg();
  bad.out_channels = 1;
  CHECK_THROWS_AS(build_unet<float>(bad, 1), ConfigError);
  bad = small_cfg();
  bad.kernel_size = 4;
  CHECK_THROWS_AS(build_unet<float>(bad, 1), ConfigError);
}

TEST_CASE("unet parameter count matches the enumerated layer list") {
  // depth 2, base 4, kernel 3, in 1, out 20: enumerate every conv block of
  // the documented layout and sum weights + biases
  const int B = 4, k = 3, in = 1, out = 20, depth = 2;
  int64_t expect = 0;
  int ch = in;
  for (int l = 0; l < depth; ++l) {
    int c = B << l;
    expect += static_cast<int64_t>(c) * ch * k * k + c;  // widening conv
    expect += static_cast<int64_t>(c) * c * k * k + c;   // refining conv
    ch = c;
  }
  {
    int c = B << depth;
    expect += static_cast<int64_t>(c) * ch * k * k + c;
    expect += static_cast<int64_t>(c) * c * k * k + c;
    ch = c;
  }
  for (int l = depth - 1; l >= 0; --l) {
    int c = B << l;
    expect += static_cast<int64_t>(c) * (c + ch) * k * k + c;  // after skip concat
    expect += static_cast<int64_t>(c) * c * k * k + c;
    ch = c;
  }
  expect += static_cast<int64_t>(out) * ch + out;  // 1x1 head
  CHECK(expect == 7560);                           // frozen closed-form value

  auto model = build_unet<double>(small_cfg(), 7);
  CHECK(model.parameter_count() == expect);
}

TEST_CASE("unet forward: shape contract and near-uniform start") {
  auto model = build_unet<double>(small_cfg(), 99);
  Rng rng(61);
  auto img = random_image(rng, 16, 16);
  auto stack = unet_forward<double>(model, nullptr, img, Frame::global_scaled);
  CHECK(stack.channels.shape() == std::vector<int>{20, 16, 16});

  for (int p = 0; p < 16 * 16; ++p) {
    double total = 0.0;
    for (int c = 0; c < 20; ++c) {
      double v = stack.channels.values()[c * 256 + p];
      total += v;
      CHECK(v >= 0.02);  // freshly initialized: close to uniform 0.05
      CHECK(v <= 0.10);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
  }

  // output spatial size tracks input for other divisible sizes
  auto wide = unet_forward<double>(model, nullptr, random_image(rng, 16, 32), Frame::global_scaled);
  CHECK(wide.channels.shape() == std::vector<int>{20, 16, 32});

  CHECK_THROWS_WITH_AS(unet_forward<double>(model, nullptr, random_image(rng, 18, 18),
                                    Frame::global_scaled),
                       doctest::Contains("pad"), ShapeError);
}

TEST_CASE("gradient flow: every parameter moves under the heatmap loss") {
  auto model = build_unet<double>(small_cfg(), 4242);
  model.set_requires_grad(true);
  Rng rng(67);
  auto img = random_image(rng, 16, 16);
  std::vector<double> tv(20 * 16 * 16);
  for (auto& v : tv) v = rng.next_double();
  auto target = Tensor<double>::from_data({20, 16, 16}, std::move(tv));

  Tape<double> tape;
  auto stack = unet_forward(model, &tape, img, Frame::global_scaled);
  auto loss = heatmap_loss<double>(&tape, stack.channels, target, LossConfig{}, 1);
  tape.backward(loss);

  for (auto& [name, p] : model.named_parameters()) {
    double norm = 0.0;
    for (double g : p.grad()) norm += g * g;
    INFO(name);
    CHECK(norm > 0.0);
  }
}

TEST_CASE("checkpoint: save/load reproduces forward bitwise, with optimizer state") {
  auto model = build_unet<float>(small_cfg(), 31337);
  model.set_requires_grad(true);
  auto params = model.parameters();
  ag::AdamState<float> opt;
  opt.learning_rate = 0.01;
  opt.attach(params);
  for (auto& p : params) {
    auto& g = p.grad();
    for (size_t i = 0; i < g.size(); ++i) g[i] = 0.01f * static_cast<float>(i % 7);
  }
  ag::optimizer_step(opt, params);

  std::string path = temp_path("cephmark_ckpt_test.bin");
  save_checkpoint(path, model, &opt);

  ag::AdamState<float> opt2;
  auto loaded = load_checkpoint<float>(path, &opt2);
  CHECK(loaded.config == model.config);
  CHECK(opt2.step_count == 1);
  CHECK(opt2.learning_rate == opt.learning_rate);
  for (size_t i = 0; i < opt.first_moment.size(); ++i) {
    CHECK(opt.first_moment[i] == opt2.first_moment[i]);
    CHECK(opt.second_moment[i] == opt2.second_moment[i]);
  }

  Rng rng(71);
  std::vector<float> img(16 * 16);
  for (auto& v : img) v = static_cast<float>(rng.next_double());
  auto x = Tensor<float>::from_data({1, 16, 16}, img);
  auto before = unet_forward<float>(model, nullptr, x, Frame::global_scaled);
  auto after = unet_forward<float>(loaded, nullptr, x, Frame::global_scaled);
  CHECK(before.channels.values() == after.channels.values());

  std::remove(path.c_str());
}

TEST_CASE("checkpoint: bad files are rejected") {
  std::string path = temp_path("cephmark_ckpt_bad.bin");
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTATALLACHECKPOINT";
  }
  CHECK_THROWS_AS(load_checkpoint<float>(path), ParseError);
  auto model = build_unet<float>(small_cfg(), 77);
  save_checkpoint(path, model);
  CHECK_THROWS_AS(load_checkpoint<double>(path), ParseError);  // scalar width mismatch
  ag::AdamState<float> opt;
  CHECK_THROWS_AS(load_checkpoint<float>(path, &opt), ParseError);  // no optimizer section
  std::remove(path.c_str());
}

TEST_CASE("single-pair overfit drives the loss below 10% of its start") {
  UNetConfig cfg = small_cfg();
  cfg.base_channels = 8;
  cfg.out_channels = 6;  // 5 landmarks + background
  auto model = build_unet<float>(cfg, 2024);
  model.set_requires_grad(true);
  auto params = model.parameters();
  ag::AdamState<float> opt;
  opt.learning_rate = 2e-3;
  opt.attach(params);

  Rng rng(73);
  std::vector<float> img(32 * 32);
  for (auto& v : img) v = static_cast<float>(rng.next_double());
  auto x = Tensor<float>::from_data({1, 32, 32}, img);

  LandmarkSet lm({{8.0, 8.0}, {24.0, 7.0}, {16.0, 16.0}, {7.0, 25.0}, {25.0, 24.0}},
                 Frame::global_scaled);
  auto target = encode_heatmaps<float>(lm, HeatmapSpec::make(32, 32, 5, 6.0,
                                                             Frame::global_scaled));

  double initial = -1.0, current = -1.0;
  for (int step = 0; step < 400; ++step) {
    Tape<float> tape;
    auto stack = unet_forward(model, &tape, x, Frame::global_scaled);
    auto loss = heatmap_loss<float>(&tape, stack.channels, target.channels, LossConfig{}, 1);
    current = loss.item();
    if (step == 0) initial = current;
    if (current < 0.1 * initial) break;
    tape.backward(loss);
    ag::optimizer_step(opt, params);
  }
  INFO("initial=", initial, " final=", current);
  CHECK(current < 0.1 * initial);
}

TEST_CASE("background-prior head init") {
  auto model = build_unet<float>(small_cfg(), 55);
  apply_background_prior(model, 4.6);
  const auto& bias = model.head.bias.values();
  for (size_t i = 0; i + 1 < bias.size(); ++i) CHECK(bias[i] == 0.0f);
  CHECK(bias.back() == doctest::Approx(4.6f));

  Rng rng(3);
  std::vector<double> data(16 * 16);
  for (auto& v : data) v = rng.next_double();
  auto model_d = build_unet<double>(small_cfg(), 55);
  apply_background_prior(model_d, 4.6);
  auto x = Tensor<double>::from_data({1, 16, 16}, data);
  auto stack = unet_forward<double>(model_d, nullptr, x, Frame::global_scaled);
  // landmark probabilities start near 1/(K + e^prior) ~ 0.008
  for (int c = 0; c < 19; ++c)
    for (int p = 0; p < 256; ++p) CHECK(stack.channels.values()[c * 256 + p] < 0.05);
  for (int p = 0; p < 256; ++p) CHECK(stack.channels.values()[19 * 256 + p] > 0.7);
}
