#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "infkit/config.hpp"
#include "infkit/io.hpp"

#include <filesystem>
#include <string>

using namespace infkit;
using io::json;

namespace {

struct TempDir {
  TempDir() {
    path = (std::filesystem::temp_directory_path() / "infkit-config-test").string();
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return path + "/" + name; }
  std::string path;
};

}  // namespace

TEST_CASE("default spec renders and round-trips byte-identically") {
  const RunSpec spec = default_run_spec();
  CHECK(spec.data.kind == DataKind::Blobs);
  CHECK(spec.data.blobs.classes == 3);
  CHECK(spec.selection.kind == CriterionKind::HighestGradients);
  CHECK(spec.selection.ratio == 0.3);
  CHECK(spec.method == Method::Gif);
  CHECK(spec.update.stop == StopRule::SelfAccThreshold);

  const json echo = render_run_spec(spec);
  const RunSpec back = parse_run_spec(echo);
  CHECK(render_run_spec(back) == echo);
  CHECK(render_run_spec(back).dump(2) == echo.dump(2));

  // null config = pure defaults
  CHECK(render_run_spec(parse_run_spec(json())) == echo);
  // the echo never leaks derived seeds
  CHECK(echo.dump().find("seed") == std::string::npos);
}

TEST_CASE("every section key parses and echoes back") {
  json j;
  j["model"] = {{"layers", json::array({{{"in", 6}, {"out", 5}, {"activation", "relu"}, {"bias", false}},
                                        {{"in", 5}, {"out", 2}}})},
                {"loss", "cross_entropy"},
                {"l2_weight", 0.25}};
  j["data"] = {{"kind", "toy"},
               {"blobs", {{"classes", 7}, {"dim", 9}}},
               {"digits", {{"noise", 4.0}, {"jitter", 0.5}}},
               {"toy", {{"count", 400}, {"dim", 6}, {"echo", 0.5}, {"flip_sign", false}}},
               {"csv", {{"train_path", "a.csv"}, {"test_path", "b.csv"}, {"classes", 2}}},
               {"input_scale", 0.5}};
  j["train"] = {{"lr", 0.2},       {"epochs", 7},      {"batch", 16},
                {"momentum", 0.9}, {"schedule", "step"}, {"step_decay", 0.5},
                {"step_every", 3}, {"regularized", false}};
  j["selection"] = {{"criterion", "lowest-out"}, {"ratio", 0.15}};
  j["influence"] = {{"method", "projecting"},
                    {"hessian", "newton"},
                    {"route", "lissa"},
                    {"dense_limit", 123},
                    {"regularized", false},
                    {"lissa", {{"max_iters", 500}, {"tol", 1e-8}, {"mu", 5.0}, {"auto_scale", true}, {"sample", 32}}}};
  j["update"] = {{"mode", "theoretical"}, {"gamma", 0.06}, {"stop", "best-f1"}, {"threshold", 2.5}, {"max_steps", 40}};
  j["eval"] = {{"remove_label", 2.0},
               {"excluded_classes", json::array({1, 2})},
               {"probe", "train"},
               {"perturb_fraction", 0.25},
               {"perturb_to", 3.0},
               {"backdoor", {{"level", 32.0}, {"poison_fraction", 0.1}, {"target_label", 4}, {"clip_lo", -1.0}, {"clip_hi", 1.0}, {"side", 4}}},
               {"spectrum_count", 12},
               {"spectrum_shifts", json::array({0.0, 0.5})}};

  const RunSpec spec = parse_run_spec(j);
  REQUIRE(spec.model.layers.size() == 2);
  CHECK(spec.model.layers[0].act == Activation::Relu);
  CHECK_FALSE(spec.model.layers[0].bias);
  CHECK(spec.model.layers[1].act == Activation::Identity);  // defaulted
  CHECK(spec.model.loss == LossKind::CrossEntropy);
  CHECK(spec.model.l2_weight == 0.25);
  CHECK(spec.data.kind == DataKind::Toy);
  CHECK(spec.data.blobs.classes == 7);
  CHECK(spec.data.blobs.train_per_class == 30);  // default-spec value kept
  CHECK(spec.data.toy.count == 400);
  CHECK_FALSE(spec.data.toy.flip_sign);
  CHECK(spec.data.train_path == "a.csv");
  CHECK(spec.data.input_scale == 0.5);
  CHECK(spec.train.epochs == 7);
  CHECK(spec.train.schedule == LrSchedule::Step);
  CHECK(spec.selection.kind == CriterionKind::LowestOutputs);
  CHECK(spec.method == Method::Projecting);
  CHECK(spec.engine.mode == HessianMode::Newton);
  CHECK(spec.engine.route == SolveRoute::Lissa);
  CHECK(spec.engine.lissa.max_iters == 500);
  CHECK(spec.engine.lissa.auto_scale);
  CHECK(spec.engine.lissa.mu == 5.0);
  CHECK(spec.update.mode == UpdateMode::Theoretical);
  CHECK(spec.update.gamma == 0.06);
  CHECK(spec.eval.remove_label == 2.0);
  CHECK(spec.eval.excluded_classes == std::vector<Index>{1, 2});
  CHECK(spec.eval.probe == "train");
  CHECK(spec.eval.backdoor.target_label == 4);
  CHECK(spec.eval.spectrum_count == 12);
  CHECK(spec.eval.spectrum_shifts == std::vector<double>{0.0, 0.5});

  // render -> parse -> render is the identity on the echo
  const json echo = render_run_spec(spec);
  CHECK(render_run_spec(parse_run_spec(echo)) == echo);
}

TEST_CASE("unknown keys are rejected with their path") {
  auto rejects = [](const json& j, const char* needle) {
    try {
      parse_run_spec(j);
      FAIL_CHECK("expected ConfigError for ", needle);
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  rejects(json{{"typo_section", json::object()}}, "typo_section");
  rejects(json{{"model", {{"l2weight", 0.1}}}}, "model.l2weight");
  rejects(json{{"model", {{"layers", json::array({{{"in", 2}, {"out", 1}, {"act", "tanh"}}})}}}},
          "model.layers[0].act");
  rejects(json{{"data", {{"toy", {{"amplitude", 2.0}}}}}}, "data.toy.amplitude");
  rejects(json{{"influence", {{"lissa", {{"tolerance", 1e-6}}}}}}, "influence.lissa.tolerance");
  rejects(json{{"eval", {{"backdoor", {{"strength", 1.0}}}}}}, "eval.backdoor.strength");
  rejects(json{{"train", {{"seed", 7}}}}, "train.seed");  // seeds are not config
}

TEST_CASE("type and enum violations raise ConfigError") {
  CHECK_THROWS_AS(parse_run_spec(json{{"train", {{"epochs", "many"}}}}), ConfigError);
  CHECK_THROWS_AS(parse_run_spec(json{{"train", {{"epochs", 2.5}}}}), ConfigError);
  CHECK_THROWS_AS(parse_run_spec(json{{"train", {{"regularized", 1}}}}), ConfigError);
  CHECK_THROWS_AS(parse_run_spec(json{{"update", {{"gamma", "big"}}}}), ConfigError);
  CHECK_THROWS_AS(parse_run_spec(json{{"influence", {{"method", "gradient-descent"}}}}), ConfigError);
  CHECK_THROWS_AS(parse_run_spec(json{{"selection", {{"criterion", "best"}}}}), ConfigError);
  CHECK_THROWS_AS(parse_run_spec(json{{"data", {{"kind", "imagenet"}}}}), ConfigError);
  CHECK_THROWS_AS(parse_run_spec(json{{"model", {{"layers", json::object()}}}}), ConfigError);
  CHECK_THROWS_AS(parse_run_spec(json(3)), ConfigError);  // not an object
}

TEST_CASE("range violations raise ConfigError") {
  CHECK_THROWS_AS(parse_run_spec(json{{"selection", {{"ratio", 0.0}}}}), ConfigError);
  CHECK_THROWS_AS(parse_run_spec(json{{"selection", {{"ratio", 1.5}}}}), ConfigError);
  CHECK_THROWS_AS(parse_run_spec(json{{"data", {{"input_scale", 0.0}}}}), ConfigError);
  CHECK_THROWS_AS(parse_run_spec(json{{"eval", {{"perturb_fraction", 1.5}}}}), ConfigError);
  CHECK_THROWS_AS(parse_run_spec(json{{"eval", {{"probe", "validation"}}}}), ConfigError);
  CHECK_THROWS_AS(parse_run_spec(json{{"update", {{"gamma", -0.1}}}}), ConfigError);
}

TEST_CASE("seed_run_spec derives distinct stream seeds and leaves the echo alone") {
  RunSpec spec = default_run_spec();
  const json before = render_run_spec(spec);
  seed_run_spec(spec, 42);
  CHECK(spec.train.seed != 0);
  CHECK(spec.selection.seed != 0);
  CHECK(spec.engine.lissa.seed != 0);
  CHECK(spec.train.seed != spec.selection.seed);
  CHECK(spec.selection.seed != spec.engine.lissa.seed);
  CHECK(render_run_spec(spec) == before);

  RunSpec other = default_run_spec();
  seed_run_spec(other, 43);
  CHECK(other.train.seed != spec.train.seed);
}

TEST_CASE("build_dataset materializes each kind deterministically") {
  RunSpec spec = default_run_spec();

  const Dataset blobs = build_dataset(spec.data, 5);
  CHECK(blobs.classes == 3);
  CHECK(blobs.train.size() == 90);
  CHECK(blobs.train.inputs.cols() == 4);
  const Dataset again = build_dataset(spec.data, 5);
  CHECK(blobs.train.inputs == again.train.inputs);
  CHECK(blobs.train.labels == again.train.labels);
  const Dataset reseeded = build_dataset(spec.data, 6);
  CHECK(blobs.train.inputs != reseeded.train.inputs);

  spec.data.kind = DataKind::Toy;
  spec.data.toy.count = 50;
  spec.data.toy.test_count = 10;
  const Dataset toy = build_dataset(spec.data, 5);
  CHECK(toy.classes == 0);
  CHECK(toy.train.size() == 50);
  CHECK(toy.train.upweight.sum() == doctest::Approx(10.0));  // hetero rows pre-marked

  spec.data.kind = DataKind::Digits;
  spec.data.digits.train_per_class = 3;
  spec.data.digits.test_per_class = 1;
  spec.data.input_scale = 1.0 / 255.0;
  const Dataset digits = build_dataset(spec.data, 5);
  CHECK(digits.classes == 10);
  CHECK(digits.train.inputs.maxCoeff() <= 1.0 + 1e-12);
  CHECK(digits.train.inputs.maxCoeff() > 0.5);  // scale applied, not degenerate
}

TEST_CASE("csv kind loads what save_csv_set wrote") {
  TempDir tmp;
  const Dataset blobs = build_dataset(default_run_spec().data, 11);
  save_csv_set(tmp.file("train.csv"), blobs.train);
  save_csv_set(tmp.file("test.csv"), blobs.test);

  RunSpec spec = default_run_spec();
  spec.data.kind = DataKind::Csv;
  spec.data.train_path = tmp.file("train.csv");
  spec.data.test_path = tmp.file("test.csv");
  spec.data.csv_classes = 3;
  const Dataset loaded = build_dataset(spec.data, 0);
  CHECK(loaded.classes == 3);
  CHECK(loaded.train.size() == blobs.train.size());
  CHECK((loaded.train.inputs - blobs.train.inputs).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(loaded.train.labels == blobs.train.labels);

  spec.data.test_path.clear();  // no test split: evaluate on train
  const Dataset no_test = build_dataset(spec.data, 0);
  CHECK(no_test.test.size() == no_test.train.size());

  spec.data.train_path.clear();
  CHECK_THROWS_AS(build_dataset(spec.data, 0), ConfigError);
}

TEST_CASE("resolve_model sizes the bundled default to the data") {
  RunSpec spec = default_run_spec();
  const Dataset blobs = build_dataset(spec.data, 3);
  const ModelSpec cls = resolve_model(spec, blobs);
  REQUIRE(cls.layers.size() == 2);
  CHECK(cls.layers[0].in == 4);
  CHECK(cls.layers[0].act == Activation::Tanh);
  CHECK(cls.layers[1].out == 3);
  CHECK(cls.loss == LossKind::CrossEntropy);

  spec.data.kind = DataKind::Toy;
  spec.data.toy.count = 40;
  spec.data.toy.test_count = 8;
  const Dataset toy = build_dataset(spec.data, 3);
  const ModelSpec reg = resolve_model(spec, toy);
  REQUIRE(reg.layers.size() == 1);
  CHECK(reg.layers[0].in == 5);
  CHECK(reg.layers[0].out == 1);
  CHECK(reg.loss == LossKind::Mse);

  spec.model.layers = {LayerSpec{4, 6, Activation::Sigmoid, true},
                       LayerSpec{6, 3, Activation::Identity, true}};
  spec.model.loss = LossKind::CrossEntropy;
  const ModelSpec kept = resolve_model(spec, blobs);
  CHECK(kept.layers[0].out == 6);
  CHECK(kept.layers[0].act == Activation::Sigmoid);
}

TEST_CASE("load_run_spec reads a config file") {
  TempDir tmp;
  json j;
  j["update"] = {{"gamma", 0.12}, {"max_steps", 7}};
  io::write_json_file(tmp.file("run.json"), j);
  const RunSpec spec = load_run_spec(tmp.file("run.json"));
  CHECK(spec.update.gamma == 0.12);
  CHECK(spec.update.max_steps == 7);
  CHECK(spec.train.epochs == 300);  // untouched default

  io::write_json_file(tmp.file("bad.json"), json{{"mystery", 1}});
  CHECK_THROWS_AS(load_run_spec(tmp.file("bad.json")), ConfigError);
}
