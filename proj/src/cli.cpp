#include "infkit/cli.hpp"

#include "infkit/checkpoint.hpp"
#include "infkit/config.hpp"
#include "infkit/data.hpp"
#include "infkit/experiments.hpp"
#include "infkit/influence.hpp"
#include "infkit/io.hpp"
#include "infkit/metrics.hpp"
#include "infkit/model.hpp"
#include "infkit/rng.hpp"
#include "infkit/selection.hpp"
#include "infkit/spectral.hpp"
#include "infkit/types.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace infkit::cli {

namespace {

using io::json;

struct GlobalFlags {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string checkpoint;  // input checkpoint (skips training)
  std::string out = "results";
  std::optional<std::string> method;
  std::optional<std::string> criterion;
  std::optional<double> mr;
  std::optional<std::string> hessian;
  bool deterministic = false;
  bool diagnostics = false;  // stream per-iteration solver records to JSONL
};

void add_common_flags(CLI::App* sub, GlobalFlags& g) {
  sub->add_option("--config", g.config_path, "run configuration file (JSON)");
  sub->add_option("--seed", g.seed, "run seed; every random stream derives from it");
  sub->add_option("--checkpoint", g.checkpoint, "input checkpoint (.gifc or .json); skips training");
  sub->add_option("--out", g.out, "results directory (created if missing)");
  sub->add_option("--method", g.method, "influence method: gif|freezing|projecting|original");
  sub->add_option("--criterion", g.criterion,
                  "selection criterion: highest-grad|highest-out|lowest-grad|lowest-out|random|full");
  sub->add_option("--mr", g.mr, "modification ratio: fraction of parameters selected, in (0, 1]");
  sub->add_option("--hessian", g.hessian, "hessian mode: plain|newton");
  sub->add_flag("--deterministic", g.deterministic,
                "single-threaded deterministic reductions; identical config+seed gives "
                "byte-identical result files");
  sub->add_flag("--diagnostics", g.diagnostics,
                "stream per-iteration solver records to diagnostics.jsonl");
}

void configure_threads(bool deterministic) {
  int threads = 1;
  if (const char* env = std::getenv("INFKIT_THREADS")) {
    threads = std::max(1, std::atoi(env));
  }
  if (deterministic) threads = 1;
  Eigen::setNbThreads(threads);
}

RunSpec make_spec(const GlobalFlags& g) {
  RunSpec spec = g.config_path.empty() ? default_run_spec() : load_run_spec(g.config_path);
  if (g.method) spec.method = method_from_string(*g.method);
  if (g.criterion) spec.selection.kind = criterion_from_string(*g.criterion);
  if (g.mr) {
    if (!(*g.mr > 0.0) || *g.mr > 1.0) throw ConfigError("--mr must be in (0, 1]");
    spec.selection.ratio = *g.mr;
  }
  if (g.hessian) spec.engine.mode = hessian_mode_from_string(*g.hessian);
  seed_run_spec(spec, g.seed);
  return spec;
}

std::string out_path(const GlobalFlags& g, const std::string& name) {
  return g.out + "/" + name;
}

// ---------------------------------------------------------------------------
// JSON renderings. Artifact names inside result.json stay relative so the
// same run in a different --out directory produces identical bytes.

json model_json(const ModelSpec& model) {
  json layers = json::array();
  for (const LayerSpec& layer : model.layers) {
    layers.push_back({{"in", layer.in},
                      {"out", layer.out},
                      {"activation", to_string(layer.act)},
                      {"bias", layer.bias}});
  }
  return {{"layers", layers}, {"loss", to_string(model.loss)}, {"l2_weight", model.l2_weight}};
}

json metrics_json(const MetricsReport& m) {
  json j;
  j["test_loss"] = m.test_loss;
  j["test_acc"] = m.test_acc;
  j["f1"] = m.f1;
  j["has_self"] = m.has_self;
  if (m.has_self) {
    j["self_loss"] = m.self_loss;
    j["self_acc"] = m.self_acc;
  }
  j["histogram"] = m.histogram;
  return j;
}

MetricsReport metrics_from_json(const json& j) {
  MetricsReport m;
  m.test_loss = j.at("test_loss").get<double>();
  m.test_acc = j.at("test_acc").get<double>();
  m.f1 = j.at("f1").get<double>();
  m.has_self = j.at("has_self").get<bool>();
  if (m.has_self) {
    m.self_loss = j.at("self_loss").get<double>();
    m.self_acc = j.at("self_acc").get<double>();
  }
  m.histogram = j.at("histogram").get<std::vector<Index>>();
  return m;
}

json step_json(const StepRecord& rec) {
  json j;
  j["step"] = rec.step;
  j["metrics"] = metrics_json(rec.metrics);
  j["update_norm"] = rec.update_norm;
  j["solver_converged"] = rec.solver_converged;
  j["solver_iterations"] = rec.solver_iterations;
  j["solver_restarts"] = rec.solver_restarts;
  j["solver_residual"] = rec.solver_residual;
  j["solver_scale"] = rec.solver_scale;
  return j;
}

StepRecord step_from_json(const json& j) {
  StepRecord rec;
  rec.step = j.at("step").get<Index>();
  rec.metrics = metrics_from_json(j.at("metrics"));
  rec.update_norm = j.at("update_norm").get<double>();
  rec.solver_converged = j.at("solver_converged").get<bool>();
  rec.solver_iterations = j.at("solver_iterations").get<int>();
  rec.solver_restarts = j.at("solver_restarts").get<int>();
  rec.solver_residual = j.at("solver_residual").get<double>();
  rec.solver_scale = j.at("solver_scale").get<double>();
  return rec;
}

json run_json(const RunResult& run, Index param_count) {
  json j;
  j["selection"] = {{"indices", run.selection.indices},
                    {"ratio", run.selection.ratio},
                    {"count", run.selection.size()},
                    {"param_count", param_count}};
  j["aborted"] = run.aborted;
  j["abort_reason"] = run.abort_reason;
  j["best_step"] = run.best_step;
  json trace = json::array();
  for (const StepRecord& rec : run.trace) trace.push_back(step_json(rec));
  j["trace"] = std::move(trace);
  return j;
}

RunResult run_from_json(const json& j) {
  RunResult run;
  run.selection.indices = j.at("selection").at("indices").get<std::vector<Index>>();
  run.selection.ratio = j.at("selection").at("ratio").get<double>();
  run.aborted = j.at("aborted").get<bool>();
  run.abort_reason = j.at("abort_reason").get<std::string>();
  run.best_step = j.at("best_step").get<Index>();
  for (const json& rec : j.at("trace")) run.trace.push_back(step_from_json(rec));
  return run;
}

json influence_json(const InfluenceResult& res) {
  json j;
  j["method"] = res.method;
  j["converged"] = res.converged;
  j["diverged"] = res.diverged;
  j["iterations"] = res.iterations;
  j["restarts"] = res.restarts;
  j["scale"] = res.scale;
  j["residual"] = res.residual;
  j["norm"] = res.vector.norm();
  return j;
}

// "step,class_0,...": one histogram row per evaluated step.
std::string trace_histogram_csv(const RunResult& run) {
  std::size_t classes = 0;
  for (const StepRecord& rec : run.trace) classes = std::max(classes, rec.metrics.histogram.size());
  std::ostringstream out;
  out << "step";
  for (std::size_t c = 0; c < classes; ++c) out << ",class_" << c;
  out << "\n";
  for (const StepRecord& rec : run.trace) {
    out << rec.step;
    for (std::size_t c = 0; c < classes; ++c) {
      out << ",";
      if (c < rec.metrics.histogram.size()) out << rec.metrics.histogram[c];
    }
    out << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Shared plumbing.

struct RunContext {
  GlobalFlags flags;
  RunSpec spec;
  Dataset data;
  ModelSpec model;
  json result;  // command, seed, config echo, resolved model
};

RunContext make_context(const char* command, const GlobalFlags& g) {
  configure_threads(g.deterministic);
  RunContext ctx;
  ctx.flags = g;
  ctx.spec = make_spec(g);
  ctx.data = build_dataset(ctx.spec.data, g.seed);
  ctx.model = resolve_model(ctx.spec, ctx.data);
  ctx.result["command"] = command;
  ctx.result["seed"] = g.seed;
  ctx.result["deterministic"] = g.deterministic;
  ctx.result["config"] = render_run_spec(ctx.spec);
  ctx.result["resolved_model"] = model_json(ctx.model);
  return ctx;
}

// Loads the input checkpoint or trains from the seeded init.
ParamVector acquire_params(RunContext& ctx) {
  if (!ctx.flags.checkpoint.empty()) {
    ParamVector params = load_checkpoint_auto(ctx.flags.checkpoint);
    check_checkpoint_matches(params, ctx.model);
    ctx.result["params_from"] = "checkpoint";
    return params;
  }
  const ParamVector init =
      random_params(ctx.model, rng::derive_seed(ctx.flags.seed, "init"));
  const TrainResult trained = train(ctx.model, init, ctx.data.train, ctx.spec.train);
  ctx.result["params_from"] = "training";
  ctx.result["train"] = {{"final_loss", trained.final_loss},
                         {"final_grad_norm", trained.final_grad_norm},
                         {"epochs_run", trained.epochs_run}};
  return trained.params;
}

// The removal/perturbation group: rows already upweighted by the generator
// (the toy heterogeneous slice), else the rows labeled eval.remove_label.
std::vector<Index> removal_group(RunContext& ctx) {
  LabeledSet& train_set = ctx.data.train;
  std::vector<Index> rows;
  for (Index i = 0; i < train_set.size(); ++i) {
    if (train_set.upweight[i] > 0.0) rows.push_back(i);
  }
  if (!rows.empty()) return rows;
  rows = rows_with_label(train_set, ctx.spec.eval.remove_label);
  if (rows.empty()) {
    throw DomainError("no training rows carry label " +
                      io::format_double(ctx.spec.eval.remove_label));
  }
  for (const Index i : rows) train_set.upweight[i] = 1.0;
  return rows;
}

std::vector<Index> excluded_for_removal(const RunContext& ctx) {
  if (!ctx.spec.eval.excluded_classes.empty()) return ctx.spec.eval.excluded_classes;
  if (ctx.data.classes > 0) {
    return {static_cast<Index>(std::llround(ctx.spec.eval.remove_label))};
  }
  return {};
}

std::unique_ptr<io::JsonlWriter> diagnostics_writer(const RunContext& ctx) {
  if (!ctx.flags.diagnostics) return nullptr;
  return std::make_unique<io::JsonlWriter>(out_path(ctx.flags, "diagnostics.jsonl"));
}

DiagnosticsSink make_sink(io::JsonlWriter* writer) {
  if (!writer) return {};
  return [writer](const IterationRecord& rec) {
    writer->write({{"method", rec.method},
                   {"restart", rec.restart},
                   {"k", rec.k},
                   {"scale", rec.scale},
                   {"residual", rec.residual}});
  };
}

void write_walk_artifacts(RunContext& ctx, const RunResult& run) {
  io::atomic_write_bytes(out_path(ctx.flags, "steps.csv"), steps_csv(run));
  io::atomic_write_bytes(out_path(ctx.flags, "histogram.csv"), trace_histogram_csv(run));
  save_checkpoint(out_path(ctx.flags, "checkpoint.gifc"), run.params);
  json artifacts = {{"steps_csv", "steps.csv"},
                    {"histogram_csv", "histogram.csv"},
                    {"checkpoint", "checkpoint.gifc"}};
  if (ctx.flags.diagnostics) artifacts["diagnostics"] = "diagnostics.jsonl";
  ctx.result["artifacts"] = std::move(artifacts);
}

void finish(RunContext& ctx) {
  io::write_json_file(out_path(ctx.flags, "result.json"), ctx.result);
}

// ---------------------------------------------------------------------------
// Subcommands.

void cmd_train(const GlobalFlags& g) {
  RunContext ctx = make_context("train", g);
  const ParamVector params = acquire_params(ctx);
  const MetricsReport report =
      evaluate(ctx.model, params, ctx.data.test, subset(ctx.data.train, {}), {});
  ctx.result["metrics"] = metrics_json(report);
  save_checkpoint(out_path(g, "checkpoint.gifc"), params);
  save_checkpoint_json(out_path(g, "checkpoint.json"), params);
  ctx.result["artifacts"] = {{"checkpoint", "checkpoint.gifc"},
                             {"checkpoint_json", "checkpoint.json"}};
  finish(ctx);
}

void cmd_select(const GlobalFlags& g) {
  RunContext ctx = make_context("select", g);
  const ParamVector params = acquire_params(ctx);
  const std::vector<Index> rows = removal_group(ctx);
  const IndexSet J =
      select_parameters(ctx.model, params, subset(ctx.data.train, rows), ctx.spec.selection);

  json per_tensor = json::array();
  for (const LayerMapEntry& entry : params.layer_map) {
    const Index lo = entry.offset;
    const Index hi = entry.offset + entry.size();
    Index count = 0;
    for (const Index i : J.indices) count += (i >= lo && i < hi) ? 1 : 0;
    per_tensor.push_back({{"tensor", entry.name}, {"size", entry.size()}, {"selected", count}});
  }
  ctx.result["selection"] = {{"indices", J.indices},
                             {"ratio", J.ratio},
                             {"count", J.size()},
                             {"param_count", params.size()},
                             {"per_tensor", std::move(per_tensor)}};

  std::ostringstream csv;
  csv << "position,index\n";
  for (Index i = 0; i < J.size(); ++i) {
    csv << i << "," << J.indices[static_cast<std::size_t>(i)] << "\n";
  }
  io::atomic_write_bytes(out_path(g, "selection.csv"), csv.str());
  ctx.result["artifacts"] = {{"selection_csv", "selection.csv"}};
  finish(ctx);
}

// Solves the group-removal system once and returns (params, J, result).
struct SolvedInfluence {
  ParamVector params;
  IndexSet J;
  InfluenceResult influence;
};

SolvedInfluence solve_for_group(RunContext& ctx, io::JsonlWriter* writer) {
  SolvedInfluence s{acquire_params(ctx), {}, {}};
  const std::vector<Index> rows = removal_group(ctx);
  s.J = select_parameters(ctx.model, s.params, subset(ctx.data.train, rows), ctx.spec.selection);
  s.influence = solve_influence(ctx.spec.method, ctx.model, s.params, ctx.data.train, s.J,
                                ctx.spec.engine, make_sink(writer));
  return s;
}

void cmd_influence(const GlobalFlags& g) {
  RunContext ctx = make_context("influence", g);
  auto writer = diagnostics_writer(ctx);
  const SolvedInfluence s = solve_for_group(ctx, writer.get());

  ctx.result["influence"] = influence_json(s.influence);
  ctx.result["selection"] = {{"indices", s.J.indices}, {"count", s.J.size()}};

  std::ostringstream csv;
  csv << "position,index,value\n";
  for (Index i = 0; i < s.influence.vector.size(); ++i) {
    const Index flat = s.J.is_full(s.params.size()) ? i : s.J.indices[static_cast<std::size_t>(i)];
    csv << i << "," << flat << "," << io::format_double(s.influence.vector[i]) << "\n";
  }
  io::atomic_write_bytes(out_path(g, "influence.csv"), csv.str());
  json artifacts = {{"influence_csv", "influence.csv"}};
  if (g.diagnostics) artifacts["diagnostics"] = "diagnostics.jsonl";
  ctx.result["artifacts"] = std::move(artifacts);
  finish(ctx);
}

void cmd_remove(const GlobalFlags& g) {
  RunContext ctx = make_context("remove", g);
  auto writer = diagnostics_writer(ctx);
  const ParamVector params = acquire_params(ctx);
  removal_group(ctx);
  const RunResult run =
      remove_influence(ctx.spec.method, ctx.model, params, ctx.data.train, ctx.data.test,
                       ctx.spec.selection, ctx.spec.engine, ctx.spec.update,
                       excluded_for_removal(ctx), make_sink(writer.get()));
  ctx.result["run"] = run_json(run, params.size());
  ctx.result["final"] = metrics_json(run.trace.back().metrics);
  write_walk_artifacts(ctx, run);
  finish(ctx);
}

void cmd_perturb(const GlobalFlags& g) {
  RunContext ctx = make_context("perturb", g);
  auto writer = diagnostics_writer(ctx);
  const ParamVector params = acquire_params(ctx);
  const std::vector<Index> group = removal_group(ctx);

  // relabel a seeded sample of the group to eval.perturb_to
  const Index k = std::max<Index>(
      1, static_cast<Index>(std::llround(ctx.spec.eval.perturb_fraction *
                                         static_cast<double>(group.size()))));
  rng::Stream stream(ctx.flags.seed, "perturb-rows");
  const std::vector<Index> picks = stream.sample(static_cast<Index>(group.size()), k);
  PerturbationSpec pspec;
  for (const Index p : picks) pspec.rows.push_back(group[static_cast<std::size_t>(p)]);
  std::sort(pspec.rows.begin(), pspec.rows.end());
  pspec.replacements = subset(ctx.data.train, pspec.rows);
  pspec.replacements.labels.setConstant(ctx.spec.eval.perturb_to);

  // the walk's group is exactly the perturbed rows
  ctx.data.train.upweight.setZero();
  for (const Index r : pspec.rows) ctx.data.train.upweight[r] = 1.0;

  const RunResult run = perturb_influence(
      ctx.spec.method, ctx.model, params, ctx.data.train, pspec, ctx.data.test,
      ctx.spec.selection, ctx.spec.engine, ctx.spec.update, ctx.spec.eval.excluded_classes,
      make_sink(writer.get()));
  ctx.result["run"] = run_json(run, params.size());
  ctx.result["final"] = metrics_json(run.trace.back().metrics);
  ctx.result["perturbation"] = {{"rows", pspec.rows}, {"to", ctx.spec.eval.perturb_to}};
  write_walk_artifacts(ctx, run);
  finish(ctx);
}

void cmd_score(const GlobalFlags& g) {
  RunContext ctx = make_context("score", g);
  auto writer = diagnostics_writer(ctx);
  const SolvedInfluence s = solve_for_group(ctx, writer.get());
  const LabeledSet& probes = ctx.spec.eval.probe == "train" ? ctx.data.train : ctx.data.test;
  const Vector scores = score_examples(ctx.model, s.params, probes, s.influence, s.J,
                                       ctx.data.train.size());

  std::ostringstream csv;
  csv << "row,label,score\n";
  for (Index i = 0; i < scores.size(); ++i) {
    csv << i << "," << io::format_double(probes.labels[i]) << ","
        << io::format_double(scores[i]) << "\n";
  }
  io::atomic_write_bytes(out_path(g, "scores.csv"), csv.str());

  std::vector<Index> order(static_cast<std::size_t>(scores.size()));
  for (Index i = 0; i < scores.size(); ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    return std::abs(scores[a]) > std::abs(scores[b]) || (std::abs(scores[a]) == std::abs(scores[b]) && a < b);
  });
  order.resize(std::min<std::size_t>(order.size(), 10));

  ctx.result["influence"] = influence_json(s.influence);
  ctx.result["scores"] = {{"probe", ctx.spec.eval.probe},
                          {"count", scores.size()},
                          {"mean", scores.size() ? scores.mean() : 0.0},
                          {"min", scores.size() ? scores.minCoeff() : 0.0},
                          {"max", scores.size() ? scores.maxCoeff() : 0.0},
                          {"top_rows", order}};
  json artifacts = {{"scores_csv", "scores.csv"}};
  if (g.diagnostics) artifacts["diagnostics"] = "diagnostics.jsonl";
  ctx.result["artifacts"] = std::move(artifacts);
  finish(ctx);
}

void cmd_backdoor(const GlobalFlags& g) {
  configure_threads(g.deterministic);
  RunContext ctx;
  ctx.flags = g;
  ctx.spec = make_spec(g);
  if (ctx.spec.data.kind == DataKind::Toy) {
    throw ConfigError("backdoor needs a classification dataset");
  }

  // poison in raw input space, then scale like the training pipeline
  DataConfig raw_cfg = ctx.spec.data;
  raw_cfg.input_scale = 1.0;
  ctx.data = build_dataset(raw_cfg, g.seed);
  const LabeledSet raw_test = ctx.data.test;
  const std::vector<Index> poisoned = implant_backdoor(
      ctx.data.train, ctx.spec.eval.backdoor, rng::derive_seed(g.seed, "backdoor"));
  auto [bd_true, bd_label] =
      backdoor_eval_sets(raw_test, ctx.spec.eval.backdoor, ctx.spec.data.input_scale);
  scale_inputs(ctx.data, ctx.spec.data.input_scale);

  ctx.model = resolve_model(ctx.spec, ctx.data);
  ctx.result["command"] = "backdoor";
  ctx.result["seed"] = g.seed;
  ctx.result["deterministic"] = g.deterministic;
  ctx.result["config"] = render_run_spec(ctx.spec);
  ctx.result["resolved_model"] = model_json(ctx.model);

  auto writer = diagnostics_writer(ctx);
  const ParamVector params = acquire_params(ctx);  // trains on the poisoned set
  const BackdoorReport report = backdoor_recover(
      ctx.spec.method, ctx.model, params, ctx.data.train, ctx.data.test, bd_true, bd_label,
      ctx.spec.selection, ctx.spec.engine, ctx.spec.update, make_sink(writer.get()));

  ctx.result["run"] = run_json(report.run, params.size());
  ctx.result["poisoned_rows"] = poisoned;
  ctx.result["report"] = {{"test", metrics_json(report.test)},
                          {"bd_true_label", metrics_json(report.bd_true)},
                          {"bd_label", metrics_json(report.bd_label)}};

  std::ostringstream bd_csv;
  bd_csv << "step,bd_true_acc,bd_label_acc\n";
  for (std::size_t i = 0; i < report.bd_trace.size(); ++i) {
    bd_csv << i << "," << io::format_double(report.bd_trace[i].first) << ","
           << io::format_double(report.bd_trace[i].second) << "\n";
  }
  io::atomic_write_bytes(out_path(g, "bd_trace.csv"), bd_csv.str());
  write_walk_artifacts(ctx, report.run);
  ctx.result["artifacts"]["bd_trace_csv"] = "bd_trace.csv";
  finish(ctx);
}

void cmd_spectrum(const GlobalFlags& g) {
  RunContext ctx = make_context("spectrum", g);
  const ParamVector params = acquire_params(ctx);
  const Index n = params.size();
  const int k = ctx.spec.eval.spectrum_count > 0
                    ? static_cast<int>(std::min<Index>(ctx.spec.eval.spectrum_count, n))
                    : static_cast<int>(std::min<Index>(n, 32));
  const int iters = static_cast<int>(std::min<Index>(n, 600));
  const std::vector<SpectrumReport> sweep = negative_rate_sweep(
      ctx.model, params, ctx.data.train, ctx.spec.eval.spectrum_shifts, k, iters,
      rng::derive_seed(g.seed, "lanczos"), ctx.spec.engine.regularized);

  io::atomic_write_bytes(out_path(g, "spectrum.csv"), sweep_csv(sweep));
  json reports = json::array();
  for (const SpectrumReport& rep : sweep) {
    reports.push_back({{"shift", rep.shift},
                       {"negative_fraction", rep.negative_fraction},
                       {"iterations", rep.iterations},
                       {"breakdown", rep.breakdown},
                       {"top_eigenvalues", rep.top_eigenvalues}});
  }
  ctx.result["spectrum"] = std::move(reports);
  ctx.result["artifacts"] = {{"spectrum_csv", "spectrum.csv"}};
  finish(ctx);
}

void cmd_report(const GlobalFlags& g, const std::string& input) {
  configure_threads(g.deterministic);
  const json result = io::read_json_file(input);
  if (!result.is_object() || !result.contains("run")) {
    throw ConfigError("report: " + input + " is not a walk result file (missing \"run\")");
  }
  const RunResult run = run_from_json(result.at("run"));
  io::atomic_write_bytes(out_path(g, "steps.csv"), steps_csv(run));
  io::atomic_write_bytes(out_path(g, "histogram.csv"), trace_histogram_csv(run));
}

std::string error_kind(const Error& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const CheckpointError*>(&e)) return "checkpoint";
  if (dynamic_cast<const ConvergenceError*>(&e)) return "convergence";
  if (dynamic_cast<const TrainError*>(&e)) return "train";
  if (dynamic_cast<const ShapeError*>(&e)) return "shape";
  if (dynamic_cast<const DomainError*>(&e)) return "domain";
  if (dynamic_cast<const SingularError*>(&e)) return "singular";
  if (dynamic_cast<const NumericError*>(&e)) return "numeric";
  return "error";
}

void write_error_record(const std::string& out, const std::string& command, const std::string& kind,
                        const std::string& message) {
  try {
    io::write_json_file(out + "/error.json",
                        {{"command", command}, {"error", kind}, {"message", message}});
  } catch (...) {
    // the error record is best-effort; the exit code carries the failure
  }
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"generalized-influence toolkit"};
  app.require_subcommand(1);

  GlobalFlags g;
  std::string report_input;

  CLI::App* train_cmd = app.add_subcommand("train", "train a model and write its checkpoint");
  CLI::App* select_cmd = app.add_subcommand("select", "pick target parameters for a group");
  CLI::App* influence_cmd =
      app.add_subcommand("influence", "solve the group-removal influence system once");
  CLI::App* remove_cmd =
      app.add_subcommand("remove", "walk the parameters to remove the configured group");
  CLI::App* perturb_cmd =
      app.add_subcommand("perturb", "walk toward a label change on sampled group rows");
  CLI::App* score_cmd =
      app.add_subcommand("score", "score probe examples by predicted loss change");
  CLI::App* backdoor_cmd =
      app.add_subcommand("backdoor", "poison, train, then unlearn the poisoned rows");
  CLI::App* spectrum_cmd =
      app.add_subcommand("spectrum", "hessian spectrum sweep over the configured shifts");
  CLI::App* report_cmd =
      app.add_subcommand("report", "re-render the CSV artifacts of an existing result.json");
  report_cmd->add_option("input", report_input, "result.json produced by a walk subcommand")
      ->required();

  for (CLI::App* sub : {train_cmd, select_cmd, influence_cmd, remove_cmd, perturb_cmd, score_cmd,
                        backdoor_cmd, spectrum_cmd, report_cmd}) {
    add_common_flags(sub, g);
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    io::ensure_dir(g.out);
    if (train_cmd->parsed()) cmd_train(g);
    if (select_cmd->parsed()) cmd_select(g);
    if (influence_cmd->parsed()) cmd_influence(g);
    if (remove_cmd->parsed()) cmd_remove(g);
    if (perturb_cmd->parsed()) cmd_perturb(g);
    if (score_cmd->parsed()) cmd_score(g);
    if (backdoor_cmd->parsed()) cmd_backdoor(g);
    if (spectrum_cmd->parsed()) cmd_spectrum(g);
    if (report_cmd->parsed()) cmd_report(g, report_input);
    return 0;
  } catch (const Error& e) {
    std::fprintf(stderr, "infkit %s: %s\n", command.c_str(), e.what());
    write_error_record(g.out, command, error_kind(e), e.what());
    return 1;
  }
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace infkit::cli
