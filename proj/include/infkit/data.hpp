#pragma once

#include "infkit/model.hpp"
#include "infkit/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace infkit {

struct Dataset {
  LabeledSet train;
  LabeledSet test;
  int classes = 0;  // 0 for regression
};

// Gaussian class clusters with seeded random centers.
struct BlobsConfig {
  int classes = 10;
  Index dim = 16;
  Index train_per_class = 60;
  Index test_per_class = 20;
  double separation = 3.0;  // center norm
  double spread = 1.0;      // per-point standard deviation
};
Dataset make_blobs(const BlobsConfig& cfg, std::uint64_t seed);

// Noisy renderings of fixed 8x8 digit glyphs; raw pixel range [0, 255].
struct DigitsConfig {
  Index train_per_class = 60;
  Index test_per_class = 20;
  double noise = 16.0;    // additive pixel noise sigma
  double jitter = 0.15;   // multiplicative per-image intensity spread
};
inline constexpr Index kDigitSide = 8;
inline constexpr int kDigitClasses = 10;
Dataset make_digits(const DigitsConfig& cfg, std::uint64_t seed);

// Linear-regression data with a heterogeneous slice. The target is carried by
// features 2..dim-1; features 0 and 1 are redundant "echo" sensors correlated
// (by `echo`) with that signal. On the heterogeneous fraction the echo pair is
// replaced by amplified independent noise whose first channel additionally
// leaks into the target with flipped sign (strength `leak`). Heterogeneous
// rows carry upweight 1 so they form the default removal group.
struct ToyConfig {
  Index count = 1000;
  Index dim = 5;            // >= 3: two echo features + at least one signal
  Index test_count = 200;
  double hetero_fraction = 0.2;
  double amplify = 3.0;     // echo-channel noise amplification on hetero rows
  bool flip_sign = true;    // leak enters the target with a negative sign
  double noise = 0.1;
  double echo = 0.6;        // clean-row correlation between echo and signal
  double leak = 2.0;        // hetero leak strength of feature 0 into the target
  double weight_scale = 3.0;
};
struct ToyRegression {
  Dataset data;
  std::vector<Index> hetero_rows;  // rows of data.train
  Vector true_weights;             // echo entries are exactly zero
};
ToyRegression make_toy_regression(const ToyConfig& cfg, std::uint64_t seed);

// Checkerboard trigger: cells with even (row + col) gain `level`, then the
// image is clipped back to [lo, hi]. Poisoned rows are relabeled to the
// target class and get upweight 1.
struct BackdoorSpec {
  double level = 16.0;
  double poison_fraction = 0.3;
  int target_label = 0;
  double clip_lo = 0.0;
  double clip_hi = 255.0;
  Index side = kDigitSide;
};
std::vector<Index> implant_backdoor(LabeledSet& set, const BackdoorSpec& spec, std::uint64_t seed);

// Test-time trigger: pattern on every row, labels untouched.
void apply_backdoor_pattern(LabeledSet& set, const BackdoorSpec& spec);

// In-place input scaling (e.g. 1/255 after raw-space poisoning).
void scale_inputs(Dataset& data, double factor);

std::vector<Index> rows_with_label(const LabeledSet& set, double label);

// CSV exchange format: header "label,x0,...,x{d-1}", one example per row.
LabeledSet load_csv_set(const std::string& path);
void save_csv_set(const std::string& path, const LabeledSet& set);

}  // namespace infkit
