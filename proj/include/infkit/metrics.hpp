#pragma once

#include "infkit/model.hpp"
#include "infkit/types.hpp"

#include <string>
#include <vector>

namespace infkit {

// Evaluation metrics for the unlearning / editing protocols.
//
// Conventions (documented here once, used everywhere):
//   * losses are SUMS over the evaluated rows, not means;
//   * accuracies and f1 are percentages in [0, 100];
//   * f1 is the macro-averaged F1 over the *retained* classes, computed on the
//     full test set — examples of a removed class can only contribute false
//     positives. With no removed classes it is the plain macro-F1.
struct MetricsReport {
  double test_loss = 0.0;
  double test_acc = 0.0;   // percent
  double self_loss = 0.0;  // over the removed rows
  double self_acc = 0.0;   // percent
  double f1 = 0.0;         // percent, macro over retained classes
  std::vector<Index> histogram;  // argmax counts over the removed rows, per class
  bool has_self = false;         // false when the removed set is empty
};

// Per-row argmax of the network outputs (class 0 for single-output models).
std::vector<Index> argmax_predictions(const ModelSpec& spec, const ParamVector& params,
                                      const LabeledSet& set);

// Fraction of rows whose argmax matches the label, in percent.
double accuracy_percent(const std::vector<Index>& predictions, const Vector& labels);

// Macro-averaged F1 in percent over classes {0..classes-1} \ excluded.
// A retained class absent from both predictions and labels scores F1 = 0.
double macro_f1_percent(const std::vector<Index>& predictions, const Vector& labels,
                        Index classes, const std::vector<Index>& excluded = {});

// Full report. `removed` may be empty (self metrics flagged absent).
// `excluded_classes` lists class labels treated as removed for the F1 metric —
// pass the removed class for class-removal runs, nothing otherwise.
MetricsReport evaluate(const ModelSpec& spec, const ParamVector& params,
                       const LabeledSet& test_set, const LabeledSet& removed,
                       const std::vector<Index>& excluded_classes = {});

// "class,count" CSV of the inference histogram.
std::string histogram_csv(const MetricsReport& report);

}  // namespace infkit
