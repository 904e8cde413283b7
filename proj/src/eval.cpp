#include "cephmark/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace cephmark {

RadialErrors radial_errors(const LandmarkSet& pred, const LandmarkSet& gt, double spacing_mm) {
  if (!(spacing_mm > 0.0)) throw ShapeError("radial_errors: spacing must be positive");
  if (pred.frame != gt.frame)
    throw ShapeError(std::string("radial_errors: frame mismatch ") + frame_name(pred.frame) +
                     " vs " + frame_name(gt.frame));
  if (pred.size() != gt.size())
    throw ShapeError("radial_errors: " + std::to_string(pred.size()) + " predictions vs " +
                     std::to_string(gt.size()) + " ground-truth landmarks");

  RadialErrors out;
  out.mm.resize(pred.size(), 0.0);
  out.valid.resize(pred.size(), 1);
  for (int i = 0; i < pred.size(); ++i) {
    if (!pred.valid[i] || !gt.valid[i]) {
      out.valid[i] = 0;
      out.mm[i] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    out.mm[i] = spacing_mm * std::hypot(pred.points[i].x - gt.points[i].x,
                                        pred.points[i].y - gt.points[i].y);
  }
  return out;
}

std::pair<double, double> mre_std(const std::vector<double>& errors) {
  if (errors.empty()) throw ShapeError("mre_std: no errors to aggregate");
  double mean = std::accumulate(errors.begin(), errors.end(), 0.0) / errors.size();
  double var = 0.0;
  for (double e : errors) var += (e - mean) * (e - mean);
  var /= errors.size();  // population standard deviation
  return {mean, std::sqrt(var)};
}

std::vector<double> sdr(const std::vector<double>& errors_mm, const std::vector<uint8_t>& valid,
                        const std::vector<double>& thresholds_mm) {
  if (errors_mm.empty()) throw ShapeError("sdr: no errors");
  if (errors_mm.size() != valid.size()) throw ShapeError("sdr: error/valid size mismatch");
  std::vector<double> out;
  out.reserve(thresholds_mm.size());
  for (double t : thresholds_mm) {
    int64_t hits = 0;
    for (size_t i = 0; i < errors_mm.size(); ++i)
      if (valid[i] && errors_mm[i] <= t) ++hits;  // inclusive boundary
    out.push_back(100.0 * static_cast<double>(hits) / static_cast<double>(errors_mm.size()));
  }
  return out;
}

void append_records(std::vector<LandmarkRecord>& out, const std::string& item_id,
                    const RadialErrors& errors) {
  for (size_t i = 0; i < errors.mm.size(); ++i)
    out.push_back({item_id, static_cast<int>(i), errors.mm[i], errors.valid[i] != 0});
}

EvalReport EvalReport::from_records(std::vector<LandmarkRecord> records,
                                    const std::vector<double>& thresholds) {
  EvalReport r;
  r.records = std::move(records);
  std::vector<double> all_mm, valid_mm;
  std::vector<uint8_t> valid_mask;
  for (const auto& rec : r.records) {
    all_mm.push_back(rec.valid ? rec.error_mm : std::numeric_limits<double>::quiet_NaN());
    valid_mask.push_back(rec.valid ? 1 : 0);
    if (rec.valid)
      valid_mm.push_back(rec.error_mm);
    else
      ++r.invalid_count;
  }
  r.valid_count = static_cast<int>(valid_mm.size());
  if (!valid_mm.empty()) {
    auto [mre, sd] = mre_std(valid_mm);
    r.mre_mm = mre;
    r.std_mm = sd;
  }
  if (!all_mm.empty()) {
    std::vector<double> percentages = sdr(all_mm, valid_mask, thresholds);
    for (size_t i = 0; i < thresholds.size(); ++i) r.sdr_percent[thresholds[i]] = percentages[i];
  }
  return r;
}

std::string report_summary_csv(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::ostringstream os;
  os << "split,mre_mm,std_mm";
  const auto* thresholds = rows.empty() ? nullptr : &rows.front().second.sdr_percent;
  if (thresholds)
    for (const auto& [t, pct] : *thresholds) {
      char col[32];
      std::snprintf(col, sizeof(col), ",sdr_%.1fmm", t);
      os << col;
    }
  os << ",valid,invalid\n";
  for (const auto& [name, r] : rows) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s,%.4f,%.4f", name.c_str(), r.mre_mm, r.std_mm);
    os << buf;
    for (const auto& [t, pct] : r.sdr_percent) {
      std::snprintf(buf, sizeof(buf), ",%.2f", pct);
      os << buf;
    }
    os << "," << r.valid_count << "," << r.invalid_count << "\n";
  }
  return os.str();
}

std::string report_landmarks_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "item_id,landmark,error_mm,valid\n";
  for (const auto& rec : report.records) {
    std::string err_field;
    if (rec.valid) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.6f", rec.error_mm);
      err_field = buf;
    }
    os << rec.item_id << "," << rec.landmark << "," << err_field << "," << (rec.valid ? 1 : 0)
       << "\n";
  }
  return os.str();
}

CrossvalResult crossval(int item_count, int folds, uint64_t seed, const FoldTrainFn& train,
                        const std::function<LandmarkSet(int)>& ground_truth_of,
                        double spacing_mm, const std::vector<std::string>& item_ids,
                        const std::vector<double>& thresholds) {
  if (folds < 2) throw ConfigError("crossval: need at least 2 folds");
  if (item_count < folds) throw ConfigError("crossval: fewer items than folds");
  if (!item_ids.empty() && static_cast<int>(item_ids.size()) != item_count)
    throw ConfigError("crossval: id list size mismatch");

  std::vector<int> order(item_count);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());

  // near-equal partition: the first (n % folds) folds take one extra item
  CrossvalResult result;
  result.pooled.fold_seed = seed;
  const int base = item_count / folds;
  const int extra = item_count % folds;
  int cursor = 0;
  for (int f = 0; f < folds; ++f) {
    int size = base + (f < extra ? 1 : 0);
    result.fold_items.emplace_back(order.begin() + cursor, order.begin() + cursor + size);
    cursor += size;
  }

  std::vector<LandmarkRecord> pooled_records;
  for (int f = 0; f < folds; ++f) {
    std::vector<int> train_items;
    for (int g = 0; g < folds; ++g)
      if (g != f)
        train_items.insert(train_items.end(), result.fold_items[g].begin(),
                           result.fold_items[g].end());
    std::sort(train_items.begin(), train_items.end());

    auto predict = train(train_items);
    std::vector<LandmarkRecord> fold_records;
    for (int idx : result.fold_items[f]) {
      LandmarkSet pred = predict(idx);
      RadialErrors err = radial_errors(pred, ground_truth_of(idx), spacing_mm);
      std::string id = item_ids.empty() ? std::to_string(idx) : item_ids[idx];
      append_records(fold_records, id, err);
    }
    pooled_records.insert(pooled_records.end(), fold_records.begin(), fold_records.end());
    EvalReport fold_report = EvalReport::from_records(std::move(fold_records), thresholds);
    fold_report.fold_seed = seed;
    result.per_fold.push_back(std::move(fold_report));
  }
  result.pooled = EvalReport::from_records(std::move(pooled_records), thresholds);
  result.pooled.fold_seed = seed;
  return result;
}

}  // namespace cephmark
