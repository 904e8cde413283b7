#pragma once

#include "cephmark/dataset.hpp"

namespace cephmark {

// Procedural desk-scale dataset: each image carries up to five geometric
// features whose landmark positions are exact by construction.
//
//   0: topmost point of a filled ellipse
//   1: rightmost point of the same ellipse
//   2: junction of a two-segment ridge corner
//   3: center of a small bright disc
//   4: outer top-left corner of a rectangle outline
struct SynthConfig {
  uint64_t seed = 1;
  int count = 200;
  int canvas = 256;
  int num_landmarks = 5;
  double min_separation = 24.0;  // pairwise landmark distance floor, px
  double noise_sigma = 0.02;
  double train_fraction = 0.8;   // leading ids train, remainder test1
  double pixel_spacing_mm = 1.0;  // synthetic "mm" == px

  void validate() const {
    if (count < 1) throw ConfigError("synth: count must be >= 1");
    if (canvas < 128) throw ConfigError("synth: canvas must be >= 128");
    if (num_landmarks < 1 || num_landmarks > 5)
      throw ConfigError("synth: supports 1..5 landmarks");
    if (!(min_separation >= 0.0)) throw ConfigError("synth: bad min_separation");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
      throw ConfigError("synth: train_fraction must be in (0, 1)");
  }
};

CephDataset synth_generate(const SynthConfig& config);

}  // namespace cephmark
