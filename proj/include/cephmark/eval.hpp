#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cephmark/codec.hpp"

namespace cephmark {

// Radial errors for one item; invalid predictions carry no distance and are
// tracked separately so they cannot pollute the mean.
struct RadialErrors {
  std::vector<double> mm;
  std::vector<uint8_t> valid;
};

// spacing converts pixel distance to mm. Both sets must share frame and K.
RadialErrors radial_errors(const LandmarkSet& pred, const LandmarkSet& gt, double spacing_mm);

// Arithmetic mean and population standard deviation (divide by n).
std::pair<double, double> mre_std(const std::vector<double>& errors);

inline const std::vector<double>& default_sdr_thresholds() {
  static const std::vector<double> t = {2.0, 2.5, 3.0, 4.0};
  return t;
}

// Successful detection rate per threshold: 100 * |{R_i <= t}| / total.
// Invalid detections count in the denominator and fail every threshold.
std::vector<double> sdr(const std::vector<double>& errors_mm, const std::vector<uint8_t>& valid,
                        const std::vector<double>& thresholds_mm = default_sdr_thresholds());

struct LandmarkRecord {
  std::string item_id;
  int landmark = 0;
  double error_mm = 0.0;
  bool valid = true;
};

struct EvalReport {
  std::vector<LandmarkRecord> records;
  double mre_mm = 0.0;
  double std_mm = 0.0;
  std::map<double, double> sdr_percent;  // threshold -> %
  int valid_count = 0;
  int invalid_count = 0;
  uint64_t fold_seed = 0;  // cross-validation partition seed, when applicable

  static EvalReport from_records(std::vector<LandmarkRecord> records,
                                 const std::vector<double>& thresholds = default_sdr_thresholds());
};

void append_records(std::vector<LandmarkRecord>& out, const std::string& item_id,
                    const RadialErrors& errors);

// summary.csv mirrors the benchmark table layout: MRE, Std, SDR columns.
std::string report_summary_csv(const std::vector<std::pair<std::string, EvalReport>>& rows);
// long-form per-landmark errors: item id, landmark index, R_i (mm).
std::string report_landmarks_csv(const EvalReport& report);

// Trains on the given item indices, returns a predictor for single items.
using FoldTrainFn =
    std::function<std::function<LandmarkSet(int item_index)>(const std::vector<int>& train_items)>;

struct CrossvalResult {
  std::vector<EvalReport> per_fold;
  EvalReport pooled;
  std::vector<std::vector<int>> fold_items;  // test partition actually used
};

// Seeded shuffle partitions item indices into near-equal folds (the first
// n % folds folds take one extra). Every fold is tested exactly once by a
// model trained on the remaining folds.
CrossvalResult crossval(int item_count, int folds, uint64_t seed, const FoldTrainFn& train,
                        const std::function<LandmarkSet(int item_index)>& ground_truth_of,
                        double spacing_mm,
                        const std::vector<std::string>& item_ids,
                        const std::vector<double>& thresholds = default_sdr_thresholds());

}  // namespace cephmark
