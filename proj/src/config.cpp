#include "infkit/config.hpp"

#include "infkit/rng.hpp"

#include <cmath>
#include <set>
#include <string>
#include <utility>

namespace infkit {

namespace {

using io::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError("config: " + path + ": " + what);
}

// Tracks which keys of one object were consumed; leftovers are typos.
class Keys {
 public:
  Keys(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  bool has(const char* k) {
    seen_.insert(k);
    return j_.contains(k);
  }

  const json& at(const char* k) const { return j_.at(k); }
  std::string sub(const char* k) const { return path_ + "." + k; }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) fail(path_ + "." + item.key(), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

double as_double(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  return v.get<double>();
}

long long as_int(const json& v, const std::string& path) {
  if (!v.is_number_integer() && !v.is_number_unsigned()) fail(path, "expected an integer");
  return v.get<long long>();
}

bool as_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) fail(path, "expected a boolean");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) fail(path, "expected a string");
  return v.get<std::string>();
}

void get(Keys& keys, const char* k, double& out) {
  if (keys.has(k)) out = as_double(keys.at(k), keys.sub(k));
}

void get(Keys& keys, const char* k, int& out) {
  if (keys.has(k)) out = static_cast<int>(as_int(keys.at(k), keys.sub(k)));
}

void get(Keys& keys, const char* k, Index& out) {
  if (keys.has(k)) out = static_cast<Index>(as_int(keys.at(k), keys.sub(k)));
}

void get(Keys& keys, const char* k, bool& out) {
  if (keys.has(k)) out = as_bool(keys.at(k), keys.sub(k));
}

void get(Keys& keys, const char* k, std::string& out) {
  if (keys.has(k)) out = as_string(keys.at(k), keys.sub(k));
}

template <class E>
void get_enum(Keys& keys, const char* k, E& out, E (*from)(const std::string&)) {
  if (!keys.has(k)) return;
  const std::string name = as_string(keys.at(k), keys.sub(k));
  try {
    out = from(name);
  } catch (const ConfigError& e) {
    fail(keys.sub(k), e.what());
  }
}

void parse_model(const json& j, ModelSpec& model) {
  Keys keys(j, "model");
  if (keys.has("layers")) {
    const json& arr = keys.at("layers");
    if (!arr.is_array()) fail("model.layers", "expected an array");
    model.layers.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string path = "model.layers[" + std::to_string(i) + "]";
      Keys lk(arr[i], path);
      LayerSpec layer;
      get(lk, "in", layer.in);
      get(lk, "out", layer.out);
      get_enum(lk, "activation", layer.act, activation_from_string);
      get(lk, "bias", layer.bias);
      lk.finish();
      model.layers.push_back(layer);
    }
  }
  get_enum(keys, "loss", model.loss, loss_from_string);
  get(keys, "l2_weight", model.l2_weight);
  keys.finish();
}

void parse_data(const json& j, DataConfig& data) {
  Keys keys(j, "data");
  get_enum(keys, "kind", data.kind, data_kind_from_string);
  if (keys.has("blobs")) {
    Keys bk(keys.at("blobs"), "data.blobs");
    get(bk, "classes", data.blobs.classes);
    get(bk, "dim", data.blobs.dim);
    get(bk, "train_per_class", data.blobs.train_per_class);
    get(bk, "test_per_class", data.blobs.test_per_class);
    get(bk, "separation", data.blobs.separation);
    get(bk, "spread", data.blobs.spread);
    bk.finish();
  }
  if (keys.has("digits")) {
    Keys dk(keys.at("digits"), "data.digits");
    get(dk, "train_per_class", data.digits.train_per_class);
    get(dk, "test_per_class", data.digits.test_per_class);
    get(dk, "noise", data.digits.noise);
    get(dk, "jitter", data.digits.jitter);
    dk.finish();
  }
  if (keys.has("toy")) {
    Keys tk(keys.at("toy"), "data.toy");
    get(tk, "count", data.toy.count);
    get(tk, "dim", data.toy.dim);
    get(tk, "test_count", data.toy.test_count);
    get(tk, "hetero_fraction", data.toy.hetero_fraction);
    get(tk, "amplify", data.toy.amplify);
    get(tk, "flip_sign", data.toy.flip_sign);
    get(tk, "noise", data.toy.noise);
    get(tk, "echo", data.toy.echo);
    get(tk, "leak", data.toy.leak);
    get(tk, "weight_scale", data.toy.weight_scale);
    tk.finish();
  }
  if (keys.has("csv")) {
    Keys ck(keys.at("csv"), "data.csv");
    get(ck, "train_path", data.train_path);
    get(ck, "test_path", data.test_path);
    get(ck, "classes", data.csv_classes);
    ck.finish();
  }
  get(keys, "input_scale", data.input_scale);
  keys.finish();
}

void parse_train(const json& j, TrainConfig& train) {
  Keys keys(j, "train");
  get(keys, "lr", train.lr);
  get(keys, "epochs", train.epochs);
  get(keys, "batch", train.batch);
  get(keys, "momentum", train.momentum);
  get_enum(keys, "schedule", train.schedule, lr_schedule_from_string);
  get(keys, "step_decay", train.step_decay);
  get(keys, "step_every", train.step_every);
  get(keys, "regularized", train.regularized);
  keys.finish();
}

void parse_selection(const json& j, SelectionCriterion& selection) {
  Keys keys(j, "selection");
  get_enum(keys, "criterion", selection.kind, criterion_from_string);
  get(keys, "ratio", selection.ratio);
  keys.finish();
}

void parse_influence(const json& j, Method& method, EngineConfig& engine) {
  Keys keys(j, "influence");
  get_enum(keys, "method", method, method_from_string);
  get_enum(keys, "hessian", engine.mode, hessian_mode_from_string);
  get_enum(keys, "route", engine.route, route_from_string);
  get(keys, "dense_limit", engine.dense_limit);
  get(keys, "regularized", engine.regularized);
  if (keys.has("lissa")) {
    Keys lk(keys.at("lissa"), "influence.lissa");
    get(lk, "max_iters", engine.lissa.max_iters);
    get(lk, "tol", engine.lissa.tol);
    get(lk, "mu", engine.lissa.mu);
    get(lk, "initial_scale", engine.lissa.initial_scale);
    get(lk, "auto_scale", engine.lissa.auto_scale);
    get(lk, "power_iters", engine.lissa.power_iters);
    get(lk, "rescale", engine.lissa.rescale);
    get(lk, "max_restarts", engine.lissa.max_restarts);
    get(lk, "divergence_window", engine.lissa.divergence_window);
    get(lk, "divergence_growth", engine.lissa.divergence_growth);
    get(lk, "sample", engine.lissa.sample);
    lk.finish();
  }
  keys.finish();
}

void parse_update(const json& j, UpdatePolicy& update) {
  Keys keys(j, "update");
  get_enum(keys, "mode", update.mode, update_mode_from_string);
  get(keys, "gamma", update.gamma);
  get_enum(keys, "stop", update.stop, stop_rule_from_string);
  get(keys, "threshold", update.threshold);
  get(keys, "max_steps", update.max_steps);
  keys.finish();
}

void parse_eval(const json& j, EvalConfig& eval) {
  Keys keys(j, "eval");
  get(keys, "remove_label", eval.remove_label);
  if (keys.has("excluded_classes")) {
    const json& arr = keys.at("excluded_classes");
    if (!arr.is_array()) fail("eval.excluded_classes", "expected an array");
    eval.excluded_classes.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      eval.excluded_classes.push_back(static_cast<Index>(
          as_int(arr[i], "eval.excluded_classes[" + std::to_string(i) + "]")));
    }
  }
  get(keys, "probe", eval.probe);
  get(keys, "perturb_fraction", eval.perturb_fraction);
  get(keys, "perturb_to", eval.perturb_to);
  if (keys.has("backdoor")) {
    Keys bk(keys.at("backdoor"), "eval.backdoor");
    get(bk, "level", eval.backdoor.level);
    get(bk, "poison_fraction", eval.backdoor.poison_fraction);
    get(bk, "target_label", eval.backdoor.target_label);
    get(bk, "clip_lo", eval.backdoor.clip_lo);
    get(bk, "clip_hi", eval.backdoor.clip_hi);
    get(bk, "side", eval.backdoor.side);
    bk.finish();
  }
  get(keys, "spectrum_count", eval.spectrum_count);
  if (keys.has("spectrum_shifts")) {
    const json& arr = keys.at("spectrum_shifts");
    if (!arr.is_array()) fail("eval.spectrum_shifts", "expected an array");
    eval.spectrum_shifts.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      eval.spectrum_shifts.push_back(
          as_double(arr[i], "eval.spectrum_shifts[" + std::to_string(i) + "]"));
    }
  }
  keys.finish();
}

void check_ranges(const RunSpec& spec) {
  if (!spec.model.layers.empty()) spec.model.validate();
  spec.update.validate();
  if (!(spec.selection.ratio > 0.0) || spec.selection.ratio > 1.0) {
    fail("selection.ratio", "must be in (0, 1]");
  }
  if (!(spec.data.input_scale > 0.0) || !std::isfinite(spec.data.input_scale)) {
    fail("data.input_scale", "must be a positive number");
  }
  if (!(spec.eval.perturb_fraction > 0.0) || spec.eval.perturb_fraction > 1.0) {
    fail("eval.perturb_fraction", "must be in (0, 1]");
  }
  if (spec.eval.probe != "test" && spec.eval.probe != "train") {
    fail("eval.probe", "must be \"test\" or \"train\"");
  }
  if (spec.eval.spectrum_count < 0) fail("eval.spectrum_count", "must be >= 0");
  if (spec.engine.dense_limit < 0) fail("influence.dense_limit", "must be >= 0");
}

}  // namespace

DataKind data_kind_from_string(const std::string& name) {
  if (name == "blobs") return DataKind::Blobs;
  if (name == "digits") return DataKind::Digits;
  if (name == "toy") return DataKind::Toy;
  if (name == "csv") return DataKind::Csv;
  throw ConfigError("unknown data kind '" + name + "'");
}

std::string to_string(DataKind kind) {
  switch (kind) {
    case DataKind::Blobs: return "blobs";
    case DataKind::Digits: return "digits";
    case DataKind::Toy: return "toy";
    case DataKind::Csv: return "csv";
  }
  return "?";
}

RunSpec default_run_spec() {
  RunSpec spec;
  spec.data.kind = DataKind::Blobs;
  spec.data.blobs.classes = 3;
  spec.data.blobs.dim = 4;
  spec.data.blobs.train_per_class = 30;
  spec.data.blobs.test_per_class = 12;
  spec.train.epochs = 300;
  spec.train.batch = 0;
  spec.selection.kind = CriterionKind::HighestGradients;
  spec.selection.ratio = 0.3;
  spec.update.mode = UpdateMode::NormalizedIterative;
  spec.update.gamma = 0.75;
  spec.update.stop = StopRule::SelfAccThreshold;
  spec.update.threshold = 1.0;
  spec.update.max_steps = 80;
  return spec;
}

RunSpec parse_run_spec(const io::json& j) {
  RunSpec spec = default_run_spec();
  if (j.is_null()) return spec;
  Keys root(j, "config");
  if (root.has("model")) parse_model(root.at("model"), spec.model);
  if (root.has("data")) parse_data(root.at("data"), spec.data);
  if (root.has("train")) parse_train(root.at("train"), spec.train);
  if (root.has("selection")) parse_selection(root.at("selection"), spec.selection);
  if (root.has("influence")) parse_influence(root.at("influence"), spec.method, spec.engine);
  if (root.has("update")) parse_update(root.at("update"), spec.update);
  if (root.has("eval")) parse_eval(root.at("eval"), spec.eval);
  root.finish();
  check_ranges(spec);
  return spec;
}

io::json render_run_spec(const RunSpec& spec) {
  json model;
  model["layers"] = json::array();
  for (const LayerSpec& layer : spec.model.layers) {
    model["layers"].push_back({{"in", layer.in},
                               {"out", layer.out},
                               {"activation", to_string(layer.act)},
                               {"bias", layer.bias}});
  }
  model["loss"] = to_string(spec.model.loss);
  model["l2_weight"] = spec.model.l2_weight;

  json data;
  data["kind"] = to_string(spec.data.kind);
  data["blobs"] = {{"classes", spec.data.blobs.classes},
                   {"dim", spec.data.blobs.dim},
                   {"train_per_class", spec.data.blobs.train_per_class},
                   {"test_per_class", spec.data.blobs.test_per_class},
                   {"separation", spec.data.blobs.separation},
                   {"spread", spec.data.blobs.spread}};
  data["digits"] = {{"train_per_class", spec.data.digits.train_per_class},
                    {"test_per_class", spec.data.digits.test_per_class},
                    {"noise", spec.data.digits.noise},
                    {"jitter", spec.data.digits.jitter}};
  data["toy"] = {{"count", spec.data.toy.count},
                 {"dim", spec.data.toy.dim},
                 {"test_count", spec.data.toy.test_count},
                 {"hetero_fraction", spec.data.toy.hetero_fraction},
                 {"amplify", spec.data.toy.amplify},
                 {"flip_sign", spec.data.toy.flip_sign},
                 {"noise", spec.data.toy.noise},
                 {"echo", spec.data.toy.echo},
                 {"leak", spec.data.toy.leak},
                 {"weight_scale", spec.data.toy.weight_scale}};
  data["csv"] = {{"train_path", spec.data.train_path},
                 {"test_path", spec.data.test_path},
                 {"classes", spec.data.csv_classes}};
  data["input_scale"] = spec.data.input_scale;

  json train;
  train["lr"] = spec.train.lr;
  train["epochs"] = spec.train.epochs;
  train["batch"] = spec.train.batch;
  train["momentum"] = spec.train.momentum;
  train["schedule"] = to_string(spec.train.schedule);
  train["step_decay"] = spec.train.step_decay;
  train["step_every"] = spec.train.step_every;
  train["regularized"] = spec.train.regularized;

  json selection;
  selection["criterion"] = to_string(spec.selection.kind);
  selection["ratio"] = spec.selection.ratio;

  json influence;
  influence["method"] = to_string(spec.method);
  influence["hessian"] = to_string(spec.engine.mode);
  influence["route"] = to_string(spec.engine.route);
  influence["dense_limit"] = spec.engine.dense_limit;
  influence["regularized"] = spec.engine.regularized;
  influence["lissa"] = {{"max_iters", spec.engine.lissa.max_iters},
                        {"tol", spec.engine.lissa.tol},
                        {"mu", spec.engine.lissa.mu},
                        {"initial_scale", spec.engine.lissa.initial_scale},
                        {"auto_scale", spec.engine.lissa.auto_scale},
                        {"power_iters", spec.engine.lissa.power_iters},
                        {"rescale", spec.engine.lissa.rescale},
                        {"max_restarts", spec.engine.lissa.max_restarts},
                        {"divergence_window", spec.engine.lissa.divergence_window},
                        {"divergence_growth", spec.engine.lissa.divergence_growth},
                        {"sample", spec.engine.lissa.sample}};

  json update;
  update["mode"] = to_string(spec.update.mode);
  update["gamma"] = spec.update.gamma;
  update["stop"] = to_string(spec.update.stop);
  update["threshold"] = spec.update.threshold;
  update["max_steps"] = spec.update.max_steps;

  json eval;
  eval["remove_label"] = spec.eval.remove_label;
  eval["excluded_classes"] = spec.eval.excluded_classes;
  eval["probe"] = spec.eval.probe;
  eval["perturb_fraction"] = spec.eval.perturb_fraction;
  eval["perturb_to"] = spec.eval.perturb_to;
  eval["backdoor"] = {{"level", spec.eval.backdoor.level},
                      {"poison_fraction", spec.eval.backdoor.poison_fraction},
                      {"target_label", spec.eval.backdoor.target_label},
                      {"clip_lo", spec.eval.backdoor.clip_lo},
                      {"clip_hi", spec.eval.backdoor.clip_hi},
                      {"side", spec.eval.backdoor.side}};
  eval["spectrum_count"] = spec.eval.spectrum_count;
  eval["spectrum_shifts"] = spec.eval.spectrum_shifts;

  json out;
  out["model"] = std::move(model);
  out["data"] = std::move(data);
  out["train"] = std::move(train);
  out["selection"] = std::move(selection);
  out["influence"] = std::move(influence);
  out["update"] = std::move(update);
  out["eval"] = std::move(eval);
  return out;
}

RunSpec load_run_spec(const std::string& path) {
  return parse_run_spec(io::read_json_file(path));
}

void seed_run_spec(RunSpec& spec, std::uint64_t seed) {
  spec.train.seed = rng::derive_seed(seed, "train-shuffle");
  spec.selection.seed = rng::derive_seed(seed, "selection");
  spec.engine.lissa.seed = rng::derive_seed(seed, "lissa-sample");
}

Dataset build_dataset(const DataConfig& cfg, std::uint64_t seed) {
  const std::uint64_t data_seed = rng::derive_seed(seed, "data");
  Dataset data;
  switch (cfg.kind) {
    case DataKind::Blobs:
      data = make_blobs(cfg.blobs, data_seed);
      break;
    case DataKind::Digits:
      data = make_digits(cfg.digits, data_seed);
      break;
    case DataKind::Toy:
      data = make_toy_regression(cfg.toy, data_seed).data;
      break;
    case DataKind::Csv: {
      if (cfg.train_path.empty()) throw ConfigError("config: data.csv.train_path: required");
      data.train = load_csv_set(cfg.train_path);
      data.test = cfg.test_path.empty() ? data.train : load_csv_set(cfg.test_path);
      data.classes = cfg.csv_classes;
      break;
    }
  }
  if (cfg.input_scale != 1.0) scale_inputs(data, cfg.input_scale);
  return data;
}

ModelSpec resolve_model(const RunSpec& spec, const Dataset& data) {
  if (!spec.model.layers.empty()) {
    spec.model.validate();
    return spec.model;
  }
  const Index dim = data.train.inputs.cols();
  ModelSpec model;
  if (data.classes > 0) {
    model.layers = {LayerSpec{dim, 8, Activation::Tanh, true},
                    LayerSpec{8, data.classes, Activation::Identity, true}};
    model.loss = LossKind::CrossEntropy;
    model.l2_weight = 1e-3;
  } else {
    model.layers = {LayerSpec{dim, 1, Activation::Identity, true}};
    model.loss = LossKind::Mse;
    model.l2_weight = 0.0;
  }
  return model;
}

}  // namespace infkit
