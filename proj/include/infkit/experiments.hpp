#pragma once

#include "infkit/data.hpp"
#include "infkit/influence.hpp"
#include "infkit/metrics.hpp"
#include "infkit/model.hpp"
#include "infkit/selection.hpp"
#include "infkit/types.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace infkit {

// End-to-end editing protocols: class/group removal, example perturbation,
// data scoring, backdoor recovery, plus the retrain-from-scratch oracle they
// are judged against.
//
// Update rules (the one place the solve-direction S from influence.hpp picks
// up its sign and epsilon):
//   theoretical:          theta_J += (1/m) S_J, applied once. This is the
//                         eps = -|w|_1/m step of the group-upweighted risk
//                         (the group normalizer cancels, leaving 1/m).
//   normalized-iterative: theta_J += gamma S_J / ||S_J||, recomputing S at the
//                         current parameters every step, until the stop rule.

enum class UpdateMode { Theoretical, NormalizedIterative };

UpdateMode update_mode_from_string(const std::string& name);
std::string to_string(UpdateMode mode);

enum class StopRule { SelfAccThreshold, BestF1, MaxSteps };

StopRule stop_rule_from_string(const std::string& name);
std::string to_string(StopRule rule);

struct UpdatePolicy {
  UpdateMode mode = UpdateMode::NormalizedIterative;
  double gamma = 0.03;  // iterative step size; 0 makes every update a no-op
  StopRule stop = StopRule::MaxSteps;
  double threshold = 0.4;  // self-accuracy percent, SelfAccThreshold rule
  Index max_steps = 100;   // hard cap under every rule
  void validate() const;
};

struct StepRecord {
  Index step = 0;  // 0 = evaluation of the incoming parameters
  MetricsReport metrics;
  double update_norm = 0.0;  // ||delta theta||_2 applied at this step
  bool solver_converged = true;
  int solver_iterations = 0;
  int solver_restarts = 0;
  double solver_residual = 0.0;
  double solver_scale = 1.0;
};

struct RunResult {
  ParamVector params;       // final parameters (best-F1 step under that rule)
  IndexSet selection;       // the J the run updated
  std::vector<StepRecord> trace;
  bool aborted = false;     // a step's influence failed to converge
  std::string abort_reason;
  Index best_step = -1;     // step whose parameters were returned
};

// Called after each evaluated step with the parameters at that step.
using StepCallback = std::function<void(Index step, const ParamVector& params)>;

// Removal of the upweighted group (train.upweight is w). Selection happens
// once, at the incoming parameters, with the upweighted rows as the probe set;
// method `original` always updates the full parameter vector. Metrics are
// evaluated against `test_set` plus the removed rows each step.
// `excluded_classes` feeds the retained-class F1 (pass the removed class for
// class-removal runs).
RunResult remove_influence(Method method, const ModelSpec& spec, const ParamVector& theta,
                           const LabeledSet& train, const LabeledSet& test_set,
                           const SelectionCriterion& selection, const EngineConfig& engine,
                           const UpdatePolicy& policy,
                           const std::vector<Index>& excluded_classes = {},
                           const DiagnosticsSink& sink = {}, const StepCallback& on_step = {});

// A dataset change Z -> Z': `rows` are the changed training rows and
// `replacements` their new versions (same count; unflagged rows must stay
// identical by construction here). The influence difference of old minus new
// examples is solved as a single system against the training-set Hessian.
struct PerturbationSpec {
  std::vector<Index> rows;
  LabeledSet replacements;
  void validate(const ModelSpec& spec, const LabeledSet& train) const;
};

// Self metrics are evaluated on the replacement examples (how far the model
// has moved toward the new labels).
RunResult perturb_influence(Method method, const ModelSpec& spec, const ParamVector& theta,
                            const LabeledSet& train, const PerturbationSpec& pspec,
                            const LabeledSet& test_set, const SelectionCriterion& selection,
                            const EngineConfig& engine, const UpdatePolicy& policy,
                            const std::vector<Index>& excluded_classes = {},
                            const DiagnosticsSink& sink = {}, const StepCallback& on_step = {});

// Estimated loss change of each probe example under removal of the upweighted
// group: s_i = (1/m) <grad l(z_i)|_J, S_J>. Positive means removing the group
// is predicted to raise that example's loss.
Vector score_examples(const ModelSpec& spec, const ParamVector& params, const LabeledSet& probes,
                      const InfluenceResult& influence, const IndexSet& J, Index train_count);

// Patterned copies of a raw [0,255] test set for backdoor evaluation: the
// first keeps the true labels, the second relabels everything to the backdoor
// target. Inputs are scaled by `input_scale` afterwards (use the same factor
// as the training pipeline).
std::pair<LabeledSet, LabeledSet> backdoor_eval_sets(const LabeledSet& raw_clean_test,
                                                     const BackdoorSpec& bdspec,
                                                     double input_scale);

struct BackdoorReport {
  RunResult run;           // the removal run over the poisoned rows
  MetricsReport test;      // clean test set, final parameters
  MetricsReport bd_true;   // patterned test inputs, true labels
  MetricsReport bd_label;  // patterned test inputs, backdoor labels
  std::vector<std::pair<double, double>> bd_trace;  // per step: true-acc, bd-acc
};

// Unlearns the poisoned rows (poisoned_train.upweight marks them) and reports
// the clean/patterned metric triple. The eval sets must be pre-built with
// backdoor_eval_sets so their scaling matches the training inputs.
BackdoorReport backdoor_recover(Method method, const ModelSpec& spec,
                                const ParamVector& poisoned_theta,
                                const LabeledSet& poisoned_train, const LabeledSet& clean_test,
                                const LabeledSet& bd_test_true, const LabeledSet& bd_test_label,
                                const SelectionCriterion& selection, const EngineConfig& engine,
                                const UpdatePolicy& policy, const DiagnosticsSink& sink = {});

// Ground truth: retrains from the same initial parameters on a modified set.
ParamVector retrain_oracle(const ModelSpec& spec, const ParamVector& init,
                           const LabeledSet& modified_train, const TrainConfig& cfg);

// Least-squares optimum of a linear (single identity layer, unhalved squared
// loss) model's J coordinates with every other coordinate held at `params`.
Vector constrained_linear_optimum(const ModelSpec& spec, const ParamVector& params,
                                  const LabeledSet& set, const IndexSet& J);

// The two-weight linear-regression comparison: train on the contaminated set,
// remove the heterogeneous group with each method for policy.max_steps
// normalized updates over J = the first two weights, and measure the final
// distance of theta_J to the constrained clean optimum.
struct ToyDominanceResult {
  double gif = 0.0;
  double freezing = 0.0;
  double projecting = 0.0;
  Vector optimum;           // theta_J*, the constrained clean optimum
  IndexSet selection;       // the two weight indices
};

ToyDominanceResult toy_dominance(const ToyConfig& cfg, std::uint64_t seed,
                                 const EngineConfig& engine, const UpdatePolicy& policy);

// Flat per-step CSV of a run trace.
std::string steps_csv(const RunResult& run);

}  // namespace infkit
