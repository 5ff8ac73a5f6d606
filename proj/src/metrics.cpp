#include "infkit/metrics.hpp"

#include <algorithm>
#include <sstream>

namespace infkit {

std::vector<Index> argmax_predictions(const ModelSpec& spec, const ParamVector& params,
                                      const LabeledSet& set) {
  const Matrix outputs = forward_batch(spec, params, set.inputs);
  std::vector<Index> preds(static_cast<std::size_t>(outputs.rows()));
  for (Index i = 0; i < outputs.rows(); ++i) {
    Index best = 0;
    outputs.row(i).maxCoeff(&best);
    preds[static_cast<std::size_t>(i)] = best;
  }
  return preds;
}

double accuracy_percent(const std::vector<Index>& predictions, const Vector& labels) {
  if (labels.size() == 0) return 0.0;
  if (static_cast<Index>(predictions.size()) != labels.size()) {
    throw ShapeError("accuracy: predictions/labels length mismatch");
  }
  Index hits = 0;
  for (Index i = 0; i < labels.size(); ++i) {
    if (predictions[static_cast<std::size_t>(i)] == static_cast<Index>(labels[i])) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(labels.size());
}

double macro_f1_percent(const std::vector<Index>& predictions, const Vector& labels,
                        Index classes, const std::vector<Index>& excluded) {
  if (classes <= 0) throw DomainError("macro_f1: classes must be positive");
  if (static_cast<Index>(predictions.size()) != labels.size()) {
    throw ShapeError("macro_f1: predictions/labels length mismatch");
  }
  std::vector<Index> tp(static_cast<std::size_t>(classes), 0);
  std::vector<Index> fp(static_cast<std::size_t>(classes), 0);
  std::vector<Index> fn(static_cast<std::size_t>(classes), 0);
  for (Index i = 0; i < labels.size(); ++i) {
    const auto truth = static_cast<Index>(labels[i]);  // out-of-range = never correct
    const Index pred = predictions[static_cast<std::size_t>(i)];
    if (pred == truth) {
      ++tp[static_cast<std::size_t>(pred)];
    } else {
      if (pred >= 0 && pred < classes) ++fp[static_cast<std::size_t>(pred)];
      if (truth >= 0 && truth < classes) ++fn[static_cast<std::size_t>(truth)];
    }
  }
  double sum = 0.0;
  Index retained = 0;
  for (Index c = 0; c < classes; ++c) {
    if (std::find(excluded.begin(), excluded.end(), c) != excluded.end()) continue;
    ++retained;
    const auto uc = static_cast<std::size_t>(c);
    const double denom = 2.0 * tp[uc] + fp[uc] + fn[uc];
    if (denom > 0) sum += 2.0 * tp[uc] / denom;
  }
  if (retained == 0) throw DomainError("macro_f1: every class excluded");
  return 100.0 * sum / static_cast<double>(retained);
}

MetricsReport evaluate(const ModelSpec& spec, const ParamVector& params,
                       const LabeledSet& test_set, const LabeledSet& removed,
                       const std::vector<Index>& excluded_classes) {
  if (test_set.size() == 0) throw DomainError("evaluate: empty test set");
  const Index classes = spec.layers.back().out;

  MetricsReport report;
  report.test_loss = loss_sum(spec, params, test_set, ones_mask(test_set.size()));
  const std::vector<Index> test_preds = argmax_predictions(spec, params, test_set);
  report.test_acc = accuracy_percent(test_preds, test_set.labels);
  report.f1 = macro_f1_percent(test_preds, test_set.labels, classes, excluded_classes);

  report.histogram.assign(static_cast<std::size_t>(classes), 0);
  if (removed.size() > 0) {
    report.has_self = true;
    report.self_loss = loss_sum(spec, params, removed, ones_mask(removed.size()));
    const std::vector<Index> self_preds = argmax_predictions(spec, params, removed);
    report.self_acc = accuracy_percent(self_preds, removed.labels);
    for (const Index p : self_preds) {
      if (p >= 0 && p < classes) ++report.histogram[static_cast<std::size_t>(p)];
    }
  }
  return report;
}

std::string histogram_csv(const MetricsReport& report) {
  std::ostringstream out;
  out << "class,count\n";
  for (std::size_t c = 0; c < report.histogram.size(); ++c) {
    out << c << "," << report.histogram[c] << "\n";
  }
  return out.str();
}

}  // namespace infkit
