// cephmark: two-stage attention-guided heatmap regression for 2D landmark
// detection. Subcommands wire the dataset, training, inference and
// evaluation modules into reproducible runs driven by a JSON config.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "cephmark/checkpoint.hpp"
#include "cephmark/eval.hpp"
#include "cephmark/heatmap_io.hpp"
#include "cephmark/pipeline.hpp"
#include "cephmark/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cephmark;

namespace {

json default_config() {
  return json{
      {"seed", 1},
      {"threads", 0},  // 0 = hardware concurrency
      {"dataset",
       {{"root", ""},
        {"gt", "average"},
        {"num_landmarks", 19},
        {"pixel_spacing_mm", 0.0},  // 0 = take the dataset's value
        {"image_ext", ".pgm"},
        {"annotators", json::array({"senior", "junior"})}}},
      {"preprocess", {{"crop_top", 465}}},
      {"synth",
       {{"count", 200},
        {"canvas", 256},
        {"num_landmarks", 5},
        {"min_separation", 24.0},
        {"noise_sigma", 0.02},
        {"train_fraction", 0.8},
        {"pixel_spacing_mm", 1.0}}},
      {"unet", {{"depth", 4}, {"base_channels", 16}, {"kernel_size", 3}}},
      {"global",
       {{"scale", 0.15},
        {"distribution_width", 40.0},
        {"epochs", 40},
        {"learning_rate", 1e-3},
        {"batch_size", 1},
        {"background_prior", 4.6},
        {"val_fraction", 0.0}}},
      {"local",
       {{"scale", 0.5},
        {"distribution_width", 30.0},
        {"train_patch", 100},
        {"infer_patch", 150},
        {"expand_epsilon", 1.8},
        {"epochs", 40},
        {"learning_rate", 1e-3},
        {"batch_size", 1},
        {"background_prior", 4.6},
        {"val_fraction", 0.0}}},
      {"loss",
       {{"alpha", 0.25},
        {"gamma", 2.0},
        {"target_gate", 0.01},
        {"bce_weight", 0.5},
        {"focal_weight", 0.5},
        {"full_bce", false},
        {"focal_start_epoch", 0}}},
      {"infer",
       {{"mode", "full"}, {"merge", "anchor"}, {"dump_heatmaps", false}, {"split", "test1"}}},
      {"eval", {{"thresholds", json::array({2.0, 2.5, 3.0, 4.0})}, {"split", "test1"}}},
      {"crossval", {{"folds", 4}}},
  };
}

void check_keys(const json& user, const json& schema, const std::string& prefix) {
  for (const auto& [key, value] : user.items()) {
    if (!schema.contains(key)) throw ConfigError("unknown config key: " + prefix + key);
    if (schema.at(key).is_object()) {
      if (!value.is_object())
        throw ConfigError("config key " + prefix + key + " must be an object");
      check_keys(value, schema.at(key), prefix + key + ".");
    }
  }
}

json load_effective_config(const std::string& config_path) {
  json cfg = default_config();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config file " + config_path);
    json user = json::parse(in, nullptr, true, true);  // comments allowed
    check_keys(user, cfg, "");
    cfg.merge_patch(user);
  }
  return cfg;
}

std::string hex_hash(const json& j) {
  std::string dump = j.dump();
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%08llx",
                static_cast<unsigned long long>(fnv1a64(dump.data(), dump.size()) & 0xffffffffull));
  return buf;
}

fs::path make_run_dir(std::string requested, const json& cfg) {
  if (requested.empty()) {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", std::gmtime(&t));
    requested = std::string("runs/") + stamp + "-" + hex_hash(cfg);
  }
  fs::path dir(requested);
  fs::create_directories(dir);
  return dir;
}

std::string file_checksum_hex(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("manifest: cannot open artifact " + path.string());
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h = fnv1a64(buf, static_cast<size_t>(in.gcount()), h);
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

// Every run pins its command, effective config and artifact checksums.
// Deliberately no timestamps: identical runs produce identical manifests.
void write_manifest(const fs::path& run_dir, const std::string& command, const json& cfg,
                    const std::vector<std::string>& artifacts) {
  json entries = json::array();
  for (const auto& rel : artifacts)
    entries.push_back({{"path", rel}, {"checksum", file_checksum_hex(run_dir / rel)}});
  json manifest = {{"command", command},
                   {"seed", cfg.at("seed").get<uint64_t>()},
                   {"config", cfg},
                   {"artifacts", entries}};
  std::ofstream out(run_dir / "run_manifest.json");
  out << manifest.dump(2) << "\n";
}

struct StageSettings {
  StageConfig stage;
  double val_fraction = 0.0;
};

StageSettings stage_from_json(const json& block, bool local) {
  StageSettings s;
  s.stage.scale_factor = block.at("scale").get<double>();
  s.stage.distribution_width = block.at("distribution_width").get<double>();
  s.stage.epochs = block.at("epochs").get<int>();
  s.stage.learning_rate = block.at("learning_rate").get<double>();
  s.stage.batch_size = block.at("batch_size").get<int>();
  s.stage.background_prior = block.at("background_prior").get<double>();
  if (local) {
    s.stage.train_patch = block.at("train_patch").get<int>();
    s.stage.infer_patch = block.at("infer_patch").get<int>();
    s.stage.expand_epsilon = block.at("expand_epsilon").get<double>();
  }
  s.val_fraction = block.at("val_fraction").get<double>();
  if (s.val_fraction < 0.0 || s.val_fraction >= 1.0)
    throw ConfigError("val_fraction must be in [0, 1)");
  return s;
}

UNetConfig unet_from_json(const json& cfg, int num_landmarks) {
  UNetConfig u;
  u.depth = cfg.at("unet").at("depth").get<int>();
  u.base_channels = cfg.at("unet").at("base_channels").get<int>();
  u.kernel_size = cfg.at("unet").at("kernel_size").get<int>();
  u.in_channels = 1;
  u.out_channels = num_landmarks + 1;
  u.validate();
  return u;
}

LossConfig loss_from_json(const json& cfg) {
  const json& l = cfg.at("loss");
  LossConfig out;
  out.alpha = l.at("alpha").get<double>();
  out.gamma = l.at("gamma").get<double>();
  out.target_gate = l.at("target_gate").get<double>();
  out.bce_weight = l.at("bce_weight").get<double>();
  out.focal_weight = l.at("focal_weight").get<double>();
  out.full_bce = l.at("full_bce").get<bool>();
  out.focal_start_epoch = l.at("focal_start_epoch").get<int>();
  out.validate();
  return out;
}

CephDataset load_configured_dataset(const json& cfg) {
  const json& d = cfg.at("dataset");
  std::string root = d.at("root").get<std::string>();
  if (root.empty()) throw ConfigError("dataset.root is required (flag --dataset or config)");
  IsbiLayout layout;
  layout.num_landmarks = d.at("num_landmarks").get<int>();
  layout.image_ext = d.at("image_ext").get<std::string>();
  layout.annotator_dirs = d.at("annotators").get<std::vector<std::string>>();
  CephDataset ds = load_dataset(root, layout);
  double spacing = d.at("pixel_spacing_mm").get<double>();
  if (spacing > 0.0) ds.pixel_spacing_mm = spacing;
  return ds;
}

PreprocessSpec prep_from_json(const json& cfg) {
  PreprocessSpec prep;
  prep.crop_top = cfg.at("preprocess").at("crop_top").get<int>();
  prep.global_scale = cfg.at("global").at("scale").get<double>();
  prep.local_scale = cfg.at("local").at("scale").get<double>();
  prep.validate();
  return prep;
}

std::vector<DatasetItem> items_of_split(const CephDataset& ds, const std::string& split) {
  std::vector<DatasetItem> out;
  for (const auto& item : ds.items)
    if (split == "all" || item.split == split) out.push_back(item);
  if (out.empty()) throw ConfigError("no items in split '" + split + "'");
  return out;
}

std::vector<DatasetItem> to_stage_frame(const std::vector<DatasetItem>& items,
                                        const PreprocessSpec& prep, double scale, Frame frame) {
  std::vector<DatasetItem> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back(scale_item(preprocess(item, prep), scale, frame));
  return out;
}

void split_train_val(std::vector<DatasetItem> items, double val_fraction, uint64_t seed,
                     std::vector<DatasetItem>& train, std::vector<DatasetItem>& val) {
  train.clear();
  val.clear();
  if (val_fraction <= 0.0) {
    train = std::move(items);
    return;
  }
  std::vector<int> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed ^ 0x5eedf01du);
  rng.shuffle(order.begin(), order.end());
  size_t val_n = std::min(items.size() - 1,
                          static_cast<size_t>(std::lround(items.size() * val_fraction)));
  for (size_t i = 0; i < order.size(); ++i) (i < val_n ? val : train).push_back(items[order[i]]);
}

void write_loss_csv(const fs::path& path, const std::vector<EpochLoss>& log) {
  std::ofstream out(path);
  out << "epoch,train_loss,val_loss\n";
  for (const auto& e : log) {
    char buf[96];
    if (std::isnan(e.val_loss))
      std::snprintf(buf, sizeof(buf), "%d,%.8f,\n", e.epoch, e.train_loss);
    else
      std::snprintf(buf, sizeof(buf), "%d,%.8f,%.8f\n", e.epoch, e.train_loss, e.val_loss);
    out << buf;
  }
}

int cmd_synth(const json& cfg, const std::string& out_dir) {
  const json& s = cfg.at("synth");
  SynthConfig sc;
  sc.seed = cfg.at("seed").get<uint64_t>();
  sc.count = s.at("count").get<int>();
  sc.canvas = s.at("canvas").get<int>();
  sc.num_landmarks = s.at("num_landmarks").get<int>();
  sc.min_separation = s.at("min_separation").get<double>();
  sc.noise_sigma = s.at("noise_sigma").get<double>();
  sc.train_fraction = s.at("train_fraction").get<double>();
  sc.pixel_spacing_mm = s.at("pixel_spacing_mm").get<double>();

  fs::path dir = make_run_dir(out_dir, cfg);
  CephDataset ds = synth_generate(sc);
  write_dataset(dir.string(), ds, "synthetic", sc.seed);
  write_manifest(dir, "synth", cfg, {"manifest.json"});
  std::cout << "wrote " << ds.items.size() << " items to " << dir.string() << "\n";
  return 0;
}

int cmd_train(const json& cfg, const std::string& out_dir, bool local) {
  CephDataset ds = load_configured_dataset(cfg);
  PreprocessSpec prep = prep_from_json(cfg);
  GtPolicy gt = gt_policy_from_name(cfg.at("dataset").at("gt").get<std::string>());
  uint64_t seed = cfg.at("seed").get<uint64_t>();

  StageSettings settings = stage_from_json(cfg.at(local ? "local" : "global"), local);
  UNetConfig unet_cfg = unet_from_json(cfg, ds.num_landmarks);
  LossConfig loss_cfg = loss_from_json(cfg);

  Frame frame = local ? Frame::local_scaled : Frame::global_scaled;
  std::vector<DatasetItem> staged =
      to_stage_frame(items_of_split(ds, "train"), prep, settings.stage.scale_factor, frame);
  std::vector<DatasetItem> train_items, val_items;
  split_train_val(std::move(staged), settings.val_fraction, seed, train_items, val_items);

  TrainResult result =
      local ? train_local(train_items, val_items, settings.stage, unet_cfg, loss_cfg, gt, seed)
            : train_global(train_items, val_items, settings.stage, unet_cfg, loss_cfg, gt, seed);

  fs::path dir = make_run_dir(out_dir, cfg);
  std::string ckpt = local ? "ckpt_local.bin" : "ckpt_global.bin";
  std::string csv = local ? "loss_local.csv" : "loss_global.csv";
  save_checkpoint((dir / ckpt).string(), result.model, &result.optimizer);
  write_loss_csv(dir / csv, result.log);
  write_manifest(dir, local ? "train-local" : "train-global", cfg, {ckpt, csv});
  std::cout << "final training loss " << result.log.back().train_loss << "; artifacts in "
            << dir.string() << "\n";
  return 0;
}

int cmd_infer(const json& cfg, const std::string& out_dir, const std::string& global_ckpt,
              const std::string& local_ckpt) {
  CephDataset ds = load_configured_dataset(cfg);
  PreprocessSpec prep = prep_from_json(cfg);
  const json& icfg = cfg.at("infer");
  InferMode mode = infer_mode_from_name(icfg.at("mode").get<std::string>());
  bool dump = icfg.at("dump_heatmaps").get<bool>();

  PipelineConfig pipe;
  pipe.prep = prep;
  pipe.global_stage = stage_from_json(cfg.at("global"), false).stage;
  pipe.local_stage = stage_from_json(cfg.at("local"), true).stage;
  std::string merge = icfg.at("merge").get<std::string>();
  if (merge == "anchor")
    pipe.merge_mode = MergeMode::anchor_only;
  else if (merge == "all")
    pipe.merge_mode = MergeMode::all_channels;
  else
    throw ConfigError("infer.merge must be 'anchor' or 'all'");
  pipe.keep_patch_stacks = dump;

  if (global_ckpt.empty()) throw ConfigError("--global-ckpt is required");
  UNetModel<float> global_model = load_checkpoint<float>(global_ckpt);
  UNetModel<float> local_model;
  if (mode != InferMode::stage1) {
    if (local_ckpt.empty()) throw ConfigError("--local-ckpt is required unless --mode stage1");
    local_model = load_checkpoint<float>(local_ckpt);
  }

  fs::path dir = make_run_dir(out_dir, cfg);
  fs::create_directories(dir / "predictions");
  if (dump) fs::create_directories(dir / "heatmaps");
  std::vector<std::string> artifacts;

  std::vector<DatasetItem> items = items_of_split(ds, icfg.at("split").get<std::string>());
  int fallback_total = 0;
  for (const auto& item : items) {
    DatasetItem cropped = preprocess(item, prep);
    InferResult result = infer(cropped.image, global_model, local_model, pipe, mode);
    for (uint8_t f : result.fallback) fallback_total += f;

    std::string rel = "predictions/" + item.id + ".txt";
    LandmarkSet preds = result.predictions;
    for (int i = 0; i < preds.size(); ++i)
      if (!preds.valid[i])
        preds.points[i] = {std::numeric_limits<double>::quiet_NaN(),
                           std::numeric_limits<double>::quiet_NaN()};
    write_landmark_file((dir / rel).string(), preds);
    artifacts.push_back(rel);

    if (dump) {
      std::string hg = "heatmaps/" + item.id + "_global.hmap";
      save_heatmap_stack((dir / hg).string(), result.global_stack);
      artifacts.push_back(hg);
      if (mode != InferMode::stage1) {
        std::string hm = "heatmaps/" + item.id + "_merged.hmap";
        save_heatmap_stack((dir / hm).string(), result.merged_stack);
        artifacts.push_back(hm);
        for (size_t p = 0; p < result.patch_stacks.size(); ++p) {
          std::string hp = "heatmaps/" + item.id + "_patch" + std::to_string(p) + ".hmap";
          save_heatmap_stack((dir / hp).string(), result.patch_stacks[p].stack);
          artifacts.push_back(hp);
        }
      }
    }
  }
  write_manifest(dir, "infer", cfg, artifacts);
  std::cout << "inferred " << items.size() << " items (" << infer_mode_name(mode) << " mode, "
            << fallback_total << " center fallbacks) into " << dir.string() << "\n";
  return 0;
}

int cmd_eval(const json& cfg, const std::string& out_dir, const std::string& predictions_dir) {
  CephDataset ds = load_configured_dataset(cfg);
  GtPolicy gt = gt_policy_from_name(cfg.at("dataset").at("gt").get<std::string>());
  if (predictions_dir.empty()) throw ConfigError("--predictions is required");
  std::string split = cfg.at("eval").at("split").get<std::string>();
  std::vector<double> thresholds = cfg.at("eval").at("thresholds").get<std::vector<double>>();
  if (thresholds.empty()) throw ConfigError("eval.thresholds must not be empty");

  std::vector<LandmarkRecord> records;
  for (const auto& item : items_of_split(ds, split)) {
    fs::path pred_path = fs::path(predictions_dir) / (item.id + ".txt");
    if (!fs::is_regular_file(pred_path))
      throw ConfigError("missing prediction record " + pred_path.string());
    LandmarkSet pred = read_landmark_file(pred_path.string(), ds.num_landmarks);
    LandmarkSet truth = ground_truth(item, gt);
    append_records(records, item.id, radial_errors(pred, truth, ds.pixel_spacing_mm));
  }
  EvalReport report = EvalReport::from_records(std::move(records), thresholds);

  fs::path dir = make_run_dir(out_dir, cfg);
  {
    std::ofstream out(dir / "summary.csv");
    out << report_summary_csv({{split, report}});
  }
  {
    std::ofstream out(dir / "per_landmark.csv");
    out << report_landmarks_csv(report);
  }
  write_manifest(dir, "eval", cfg, {"summary.csv", "per_landmark.csv"});
  char line[160];
  std::snprintf(line, sizeof(line), "%s: MRE %.4f +/- %.4f mm over %d landmarks (%d invalid)\n",
                split.c_str(), report.mre_mm, report.std_mm, report.valid_count,
                report.invalid_count);
  std::cout << line;
  for (const auto& [t, pct] : report.sdr_percent) {
    std::snprintf(line, sizeof(line), "  SDR %.1f mm: %.2f%%\n", t, pct);
    std::cout << line;
  }
  return 0;
}

int cmd_crossval(const json& cfg, const std::string& out_dir) {
  CephDataset ds = load_configured_dataset(cfg);
  PreprocessSpec prep = prep_from_json(cfg);
  // cross-validation scores against the senior annotations
  GtPolicy gt = GtPolicy::senior;
  uint64_t seed = cfg.at("seed").get<uint64_t>();
  int folds = cfg.at("crossval").at("folds").get<int>();
  std::vector<double> thresholds = cfg.at("eval").at("thresholds").get<std::vector<double>>();

  StageConfig g = stage_from_json(cfg.at("global"), false).stage;
  StageConfig l = stage_from_json(cfg.at("local"), true).stage;
  UNetConfig unet_cfg = unet_from_json(cfg, ds.num_landmarks);
  LossConfig loss_cfg = loss_from_json(cfg);

  PipelineConfig pipe;
  pipe.prep = prep;
  pipe.global_stage = g;
  pipe.local_stage = l;

  std::vector<DatasetItem> cropped;
  std::vector<std::string> ids;
  for (const auto& item : ds.items) {
    cropped.push_back(preprocess(item, prep));
    ids.push_back(item.id);
  }

  int fold_counter = 0;
  FoldTrainFn train = [&](const std::vector<int>& train_idx) {
    std::vector<DatasetItem> global_items, local_items;
    for (int idx : train_idx) {
      global_items.push_back(scale_item(cropped[idx], g.scale_factor, Frame::global_scaled));
      local_items.push_back(scale_item(cropped[idx], l.scale_factor, Frame::local_scaled));
    }
    uint64_t fold_seed = seed + 1000003ull * static_cast<uint64_t>(fold_counter++);
    auto global_model = std::make_shared<UNetModel<float>>(
        train_global(global_items, {}, g, unet_cfg, loss_cfg, gt, fold_seed).model);
    auto local_model = std::make_shared<UNetModel<float>>(
        train_local(local_items, {}, l, unet_cfg, loss_cfg, gt, fold_seed ^ 0xabcdefull).model);
    return [&, global_model, local_model](int item_idx) {
      InferResult r =
          infer(cropped[item_idx].image, *global_model, *local_model, pipe, InferMode::full);
      return r.predictions;
    };
  };
  auto gt_of = [&](int idx) { return ground_truth(ds.items[idx], gt); };

  CrossvalResult result = crossval(static_cast<int>(ds.items.size()), folds, seed, train, gt_of,
                                   ds.pixel_spacing_mm, ids, thresholds);

  fs::path dir = make_run_dir(out_dir, cfg);
  std::vector<std::pair<std::string, EvalReport>> rows;
  for (size_t f = 0; f < result.per_fold.size(); ++f)
    rows.emplace_back("fold" + std::to_string(f), result.per_fold[f]);
  rows.emplace_back("pooled", result.pooled);
  {
    std::ofstream out(dir / "summary.csv");
    out << report_summary_csv(rows);
  }
  {
    std::ofstream out(dir / "per_landmark.csv");
    out << report_landmarks_csv(result.pooled);
  }
  write_manifest(dir, "crossval", cfg, {"summary.csv", "per_landmark.csv"});
  std::cout << "crossval pooled MRE " << result.pooled.mre_mm << " mm over " << folds
            << " folds (partition seed " << seed << ") in " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-stage attention-guided heatmap regression for landmark detection"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir, dataset_root, global_ckpt, local_ckpt, predictions_dir;
  int64_t seed_flag = -1;
  int threads_flag = -1;
  app.add_option("--config", config_path, "JSON config file (defaults embed the paper protocol)");
  app.add_option("--out", out_dir, "output directory (default runs/<stamp>-<confighash>)");
  app.add_option("--seed", seed_flag, "override config seed");
  app.add_option("--threads", threads_flag, "worker threads (0 = hardware)");
  app.add_option("--dataset", dataset_root, "dataset root directory");

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  int synth_count = -1, synth_canvas = -1;
  synth->add_option("--count", synth_count, "number of items");
  synth->add_option("--canvas", synth_canvas, "canvas size in px");

  auto* train_g = app.add_subcommand("train-global", "train the whole-image stage");
  auto* train_l = app.add_subcommand("train-local", "train the patch stage");

  auto* infer_cmd = app.add_subcommand("infer", "run two-stage inference on a split");
  std::string mode_flag, split_flag;
  bool dump_flag = false;
  infer_cmd->add_option("--global-ckpt", global_ckpt, "global-stage checkpoint");
  infer_cmd->add_option("--local-ckpt", local_ckpt, "local-stage checkpoint");
  infer_cmd->add_option("--mode", mode_flag, "full | stage1 | no-expand");
  infer_cmd->add_option("--split", split_flag, "dataset split to infer");
  infer_cmd->add_flag("--dump-heatmaps", dump_flag, "export H_G, H_M and patch stacks");

  auto* eval_cmd = app.add_subcommand("eval", "score prediction records against ground truth");
  std::string eval_split_flag, gt_flag;
  eval_cmd->add_option("--predictions", predictions_dir, "directory of <id>.txt records");
  eval_cmd->add_option("--split", eval_split_flag, "dataset split to score");
  eval_cmd->add_option("--gt", gt_flag, "average | senior | junior");

  auto* cv_cmd =
      app.add_subcommand("crossval", "k-fold cross-validation (train + infer per fold)");
  int folds_flag = -1;
  cv_cmd->add_option("--folds", folds_flag, "number of folds");

  CLI11_PARSE(app, argc, argv);

  try {
    json cfg = load_effective_config(config_path);
    if (seed_flag >= 0) cfg["seed"] = static_cast<uint64_t>(seed_flag);
    if (threads_flag >= 0) cfg["threads"] = threads_flag;
    if (!dataset_root.empty()) cfg["dataset"]["root"] = dataset_root;
    if (synth_count > 0) cfg["synth"]["count"] = synth_count;
    if (synth_canvas > 0) cfg["synth"]["canvas"] = synth_canvas;
    if (!mode_flag.empty()) cfg["infer"]["mode"] = mode_flag;
    if (!split_flag.empty()) cfg["infer"]["split"] = split_flag;
    if (dump_flag) cfg["infer"]["dump_heatmaps"] = true;
    if (!eval_split_flag.empty()) cfg["eval"]["split"] = eval_split_flag;
    if (!gt_flag.empty()) cfg["dataset"]["gt"] = gt_flag;
    if (folds_flag > 0) cfg["crossval"]["folds"] = folds_flag;

    int threads = cfg.at("threads").get<int>();
    if (threads > 0) set_num_threads(threads);

    if (synth->parsed()) return cmd_synth(cfg, out_dir);
    if (train_g->parsed()) return cmd_train(cfg, out_dir, false);
    if (train_l->parsed()) return cmd_train(cfg, out_dir, true);
    if (infer_cmd->parsed()) return cmd_infer(cfg, out_dir, global_ckpt, local_ckpt);
    if (eval_cmd->parsed()) return cmd_eval(cfg, out_dir, predictions_dir);
    if (cv_cmd->parsed()) return cmd_crossval(cfg, out_dir);
    throw ConfigError("no subcommand selected");
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
