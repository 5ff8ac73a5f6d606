#include "infkit/experiments.hpp"

#include "infkit/io.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <utility>

namespace infkit {

UpdateMode update_mode_from_string(const std::string& name) {
  if (name == "theoretical") return UpdateMode::Theoretical;
  if (name == "normalized-iterative" || name == "normalized_iterative" || name == "iterative") {
    return UpdateMode::NormalizedIterative;
  }
  throw ConfigError("unknown update mode: " + name);
}

std::string to_string(UpdateMode mode) {
  return mode == UpdateMode::Theoretical ? "theoretical" : "normalized-iterative";
}

StopRule stop_rule_from_string(const std::string& name) {
  if (name == "self-acc" || name == "self_acc") return StopRule::SelfAccThreshold;
  if (name == "best-f1" || name == "best_f1") return StopRule::BestF1;
  if (name == "max-steps" || name == "max_steps") return StopRule::MaxSteps;
  throw ConfigError("unknown stop rule: " + name);
}

std::string to_string(StopRule rule) {
  switch (rule) {
    case StopRule::SelfAccThreshold: return "self-acc";
    case StopRule::BestF1: return "best-f1";
    case StopRule::MaxSteps: return "max-steps";
  }
  throw DomainError("unknown stop rule");
}

void UpdatePolicy::validate() const {
  if (!std::isfinite(gamma) || gamma < 0) throw ConfigError("update: gamma must be >= 0");
  if (!std::isfinite(threshold) || threshold < 0) {
    throw ConfigError("update: threshold must be >= 0");
  }
  if (max_steps < 0) throw ConfigError("update: max_steps must be >= 0");
}

namespace {

std::vector<Index> flagged_rows(const Vector& upweight) {
  std::vector<Index> rows;
  for (Index i = 0; i < upweight.size(); ++i) {
    if (upweight[i] != 0.0) rows.push_back(i);
  }
  return rows;
}

// Shared update loop. `rhs` rebuilds the solve right-hand side at the current
// parameters; `hessian_set` supplies curvature (its upweight drives the
// newton-mode coefficients). `test_set` may be null to skip metric evaluation
// (the toy protocol tracks parameter distance instead).
RunResult run_update_loop(Method method, const ModelSpec& spec, ParamVector theta,
                          const LabeledSet& hessian_set,
                          const std::function<Vector(const ParamVector&)>& rhs,
                          const LabeledSet* test_set, const LabeledSet& removed, IndexSet J,
                          const EngineConfig& engine, const UpdatePolicy& policy,
                          const std::vector<Index>& excluded, const DiagnosticsSink& sink,
                          const StepCallback& on_step) {
  policy.validate();
  const Index n = theta.size();
  if (method == Method::Original) J = IndexSet::full(n);

  RunResult out;
  out.selection = J;

  auto eval_step = [&](Index k, double norm, const InfluenceResult* res) {
    StepRecord rec;
    rec.step = k;
    if (test_set != nullptr) rec.metrics = evaluate(spec, theta, *test_set, removed, excluded);
    rec.update_norm = norm;
    if (res != nullptr) {
      rec.solver_converged = res->converged;
      rec.solver_iterations = res->iterations;
      rec.solver_restarts = res->restarts;
      rec.solver_residual = res->residual;
      rec.solver_scale = res->scale;
    }
    out.trace.push_back(std::move(rec));
    if (on_step) on_step(k, theta);
  };

  eval_step(0, 0.0, nullptr);

  ParamVector best = theta;
  Index best_step = 0;
  double best_f1 = out.trace.front().metrics.f1;

  const Index steps =
      policy.mode == UpdateMode::Theoretical ? std::min<Index>(1, policy.max_steps)
                                             : policy.max_steps;
  const auto m = static_cast<double>(hessian_set.size());

  for (Index k = 1; k <= steps; ++k) {
    InfluenceResult res;
    try {
      res = solve_influence_system(method, spec, theta, hessian_set, rhs(theta), J, engine, sink);
    } catch (const Error& err) {
      out.aborted = true;
      out.abort_reason = err.what();
      break;
    }
    if (!res.converged) {
      out.aborted = true;
      out.abort_reason = "influence solve did not converge (method " + res.method + ")";
      break;
    }

    Vector update;
    if (policy.mode == UpdateMode::Theoretical) {
      update = res.vector / m;
    } else {
      const double norm = res.vector.norm();
      if (norm == 0.0) break;  // nothing left to undo
      update = (policy.gamma / norm) * res.vector;
    }
    for (Index a = 0; a < J.size(); ++a) {
      theta.values[J.indices[static_cast<std::size_t>(a)]] += update[a];
    }
    eval_step(k, update.norm(), &res);

    const MetricsReport& now = out.trace.back().metrics;
    if (now.f1 > best_f1) {
      best_f1 = now.f1;
      best = theta;
      best_step = k;
    }
    if (policy.stop == StopRule::SelfAccThreshold && now.has_self &&
        now.self_acc <= policy.threshold) {
      break;
    }
  }

  if (policy.stop == StopRule::BestF1 && !out.aborted) {
    out.params = std::move(best);
    out.best_step = best_step;
  } else {
    out.params = std::move(theta);
    out.best_step = out.trace.back().step;
  }
  return out;
}

IndexSet choose_selection(Method method, const ModelSpec& spec, const ParamVector& theta,
                          const LabeledSet& probe, const SelectionCriterion& criterion) {
  if (method == Method::Original) return IndexSet::full(theta.size());
  return select_parameters(spec, theta, probe, criterion);
}

}  // namespace

RunResult remove_influence(Method method, const ModelSpec& spec, const ParamVector& theta,
                           const LabeledSet& train, const LabeledSet& test_set,
                           const SelectionCriterion& selection, const EngineConfig& engine,
                           const UpdatePolicy& policy, const std::vector<Index>& excluded_classes,
                           const DiagnosticsSink& sink, const StepCallback& on_step) {
  const std::vector<Index> rows = flagged_rows(train.upweight);
  const LabeledSet removed = subset(train, rows);
  const IndexSet J = choose_selection(method, spec, theta, removed, selection);
  auto rhs = [&](const ParamVector& at) {
    return grad(spec, at, train, train.upweight, /*regularized=*/false);
  };
  return run_update_loop(method, spec, theta, train, rhs, &test_set, removed, J, engine, policy,
                         excluded_classes, sink, on_step);
}

void PerturbationSpec::validate(const ModelSpec& spec, const LabeledSet& train) const {
  replacements.validate(spec);
  if (static_cast<Index>(rows.size()) != replacements.size()) {
    throw ShapeError("perturbation: rows/replacements length mismatch");
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= train.size()) throw DomainError("perturbation: row out of range");
    if (i > 0 && rows[i] <= rows[i - 1]) throw DomainError("perturbation: rows must be increasing");
  }
}

RunResult perturb_influence(Method method, const ModelSpec& spec, const ParamVector& theta,
                            const LabeledSet& train, const PerturbationSpec& pspec,
                            const LabeledSet& test_set, const SelectionCriterion& selection,
                            const EngineConfig& engine, const UpdatePolicy& policy,
                            const std::vector<Index>& excluded_classes, const DiagnosticsSink& sink,
                            const StepCallback& on_step) {
  pspec.validate(spec, train);
  const LabeledSet changed_old = subset(train, pspec.rows);

  LabeledSet hessian_set = train;
  hessian_set.upweight.setZero();
  for (const Index r : pspec.rows) hessian_set.upweight[r] = 1.0;

  const IndexSet J = choose_selection(method, spec, theta, changed_old, selection);
  const Vector ones_old = ones_mask(changed_old.size());
  auto rhs = [&](const ParamVector& at) {
    const Vector g_old = grad(spec, at, changed_old, ones_old, /*regularized=*/false);
    const Vector g_new = grad(spec, at, pspec.replacements, ones_old, /*regularized=*/false);
    return Vector(g_old - g_new);
  };
  return run_update_loop(method, spec, theta, hessian_set, rhs, &test_set, pspec.replacements, J,
                         engine, policy, excluded_classes, sink, on_step);
}

Vector score_examples(const ModelSpec& spec, const ParamVector& params, const LabeledSet& probes,
                      const InfluenceResult& influence, const IndexSet& J, Index train_count) {
  if (train_count <= 0) throw DomainError("score: train_count must be positive");
  Vector scores(probes.size());
  for (Index i = 0; i < probes.size(); ++i) {
    scores[i] =
        influence_score(spec, params, probes, i, influence.vector, J) / train_count;
  }
  return scores;
}

std::pair<LabeledSet, LabeledSet> backdoor_eval_sets(const LabeledSet& raw_clean_test,
                                                     const BackdoorSpec& bdspec,
                                                     double input_scale) {
  LabeledSet bd_true = raw_clean_test;
  apply_backdoor_pattern(bd_true, bdspec);
  bd_true.inputs *= input_scale;
  LabeledSet bd_label = bd_true;
  bd_label.labels.setConstant(static_cast<double>(bdspec.target_label));
  return {std::move(bd_true), std::move(bd_label)};
}

BackdoorReport backdoor_recover(Method method, const ModelSpec& spec,
                                const ParamVector& poisoned_theta,
                                const LabeledSet& poisoned_train, const LabeledSet& clean_test,
                                const LabeledSet& bd_test_true, const LabeledSet& bd_test_label,
                                const SelectionCriterion& selection, const EngineConfig& engine,
                                const UpdatePolicy& policy, const DiagnosticsSink& sink) {
  BackdoorReport report;
  auto on_step = [&](Index, const ParamVector& at) {
    const std::vector<Index> preds = argmax_predictions(spec, at, bd_test_true);
    report.bd_trace.emplace_back(accuracy_percent(preds, bd_test_true.labels),
                                 accuracy_percent(preds, bd_test_label.labels));
  };
  report.run = remove_influence(method, spec, poisoned_theta, poisoned_train, clean_test,
                                selection, engine, policy, {}, sink, on_step);

  const LabeledSet removed = subset(poisoned_train, flagged_rows(poisoned_train.upweight));
  report.test = evaluate(spec, report.run.params, clean_test, removed);
  report.bd_true = evaluate(spec, report.run.params, bd_test_true, removed);
  report.bd_label = evaluate(spec, report.run.params, bd_test_label, removed);
  return report;
}

ParamVector retrain_oracle(const ModelSpec& spec, const ParamVector& init,
                           const LabeledSet& modified_train, const TrainConfig& cfg) {
  return train(spec, init, modified_train, cfg).params;
}

Vector constrained_linear_optimum(const ModelSpec& spec, const ParamVector& params,
                                  const LabeledSet& set, const IndexSet& J) {
  if (spec.layers.size() != 1 || spec.layers.front().act != Activation::Identity ||
      spec.loss != LossKind::Mse || spec.layers.front().out != 1) {
    throw DomainError("constrained optimum: needs a single-output linear squared-loss model");
  }
  J.validate(params.size());
  const Index dim = spec.layers.front().in;

  // prediction = A theta_J + fixed, where fixed comes from the frozen entries
  ParamVector frozen = params;
  for (const Index j : J.indices) frozen.values[j] = 0.0;
  const Vector fixed = forward_batch(spec, frozen, set.inputs).col(0);

  Matrix A(set.size(), J.size());
  for (Index a = 0; a < J.size(); ++a) {
    const Index j = J.indices[static_cast<std::size_t>(a)];
    if (j < dim) {
      A.col(a) = set.inputs.col(j);
    } else {
      A.col(a).setOnes();  // the bias coordinate
    }
  }
  return A.colPivHouseholderQr().solve(set.labels - fixed);
}

ToyDominanceResult toy_dominance(const ToyConfig& cfg, std::uint64_t seed,
                                 const EngineConfig& engine, const UpdatePolicy& policy) {
  const ToyRegression toy = make_toy_regression(cfg, seed);

  ModelSpec spec;
  spec.layers = {LayerSpec{cfg.dim, 1, Activation::Identity, true}};
  spec.loss = LossKind::Mse;

  // Anchor at the exact least-squares minimizer: the influence expansion is
  // taken at a stationary point of the full training loss.
  Matrix design(cfg.count, cfg.dim + 1);
  design.leftCols(cfg.dim) = toy.data.train.inputs;
  design.col(cfg.dim).setOnes();
  ParamVector trained = zero_params(spec);
  trained.values = (design.transpose() * design)
                       .ldlt()
                       .solve(design.transpose() * toy.data.train.labels);

  ToyDominanceResult out;
  out.selection = IndexSet{{0, 1}, 2.0 / static_cast<double>(trained.size())};
  const LabeledSet clean = drop_rows(toy.data.train, toy.hetero_rows);
  out.optimum = constrained_linear_optimum(spec, trained, clean, out.selection);

  auto rhs = [&](const ParamVector& at) {
    return grad(spec, at, toy.data.train, toy.data.train.upweight, /*regularized=*/false);
  };
  auto distance = [&](Method method) {
    const RunResult run =
        run_update_loop(method, spec, trained, toy.data.train, rhs, nullptr, LabeledSet{},
                        out.selection, engine, policy, {}, {}, {});
    Vector theta_j(out.selection.size());
    for (Index a = 0; a < out.selection.size(); ++a) {
      theta_j[a] = run.params.values[out.selection.indices[static_cast<std::size_t>(a)]];
    }
    return (theta_j - out.optimum).norm();
  };
  out.gif = distance(Method::Gif);
  out.freezing = distance(Method::Freezing);
  out.projecting = distance(Method::Projecting);
  return out;
}

std::string steps_csv(const RunResult& run) {
  std::ostringstream out;
  out << "step,test_loss,test_acc,self_loss,self_acc,f1,update_norm,solver_converged,"
         "solver_iterations,solver_restarts,solver_residual,solver_scale\n";
  for (const StepRecord& rec : run.trace) {
    out << rec.step << "," << io::format_double(rec.metrics.test_loss) << ","
        << io::format_double(rec.metrics.test_acc) << ",";
    if (rec.metrics.has_self) {
      out << io::format_double(rec.metrics.self_loss) << "," << io::format_double(rec.metrics.self_acc);
    } else {
      out << ",";
    }
    out << "," << io::format_double(rec.metrics.f1) << "," << io::format_double(rec.update_norm) << ","
        << (rec.solver_converged ? 1 : 0) << "," << rec.solver_iterations << ","
        << rec.solver_restarts << "," << io::format_double(rec.solver_residual) << ","
        << io::format_double(rec.solver_scale) << "\n";
  }
  return out.str();
}

}  // namespace infkit
