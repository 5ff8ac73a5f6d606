#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "infkit/checkpoint.hpp"
#include "infkit/io.hpp"
#include "infkit/model.hpp"

#include <cstdio>
#include <filesystem>
#include <string>

using namespace infkit;

namespace {

struct TempDir {
  TempDir() {
    path = (std::filesystem::temp_directory_path() / "infkit-ckpt-test").string();
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return path + "/" + name; }
  std::string path;
};

ModelSpec demo_spec() {
  ModelSpec spec;
  spec.layers = {{5, 4, Activation::Tanh, true}, {4, 3, Activation::Identity, false}};
  spec.loss = LossKind::CrossEntropy;
  return spec;
}

}  // namespace

TEST_CASE("binary checkpoints round-trip bitwise") {
  TempDir tmp;
  const ModelSpec spec = demo_spec();
  const ParamVector params = random_params(spec, 99);

  const std::string path = tmp.file("model.ckpt");
  save_checkpoint(path, params);
  const ParamVector loaded = load_checkpoint(path);

  CHECK(loaded.values == params.values);  // bitwise
  REQUIRE(loaded.layer_map.size() == params.layer_map.size());
  for (std::size_t i = 0; i < loaded.layer_map.size(); ++i) {
    CHECK(loaded.layer_map[i].name == params.layer_map[i].name);
    CHECK(loaded.layer_map[i].shape == params.layer_map[i].shape);
    CHECK(loaded.layer_map[i].offset == params.layer_map[i].offset);
  }
  check_checkpoint_matches(loaded, spec);
}

TEST_CASE("binary layout starts with magic, version, tensor count") {
  TempDir tmp;
  const ModelSpec spec = demo_spec();
  const ParamVector params = random_params(spec, 3);
  const std::string path = tmp.file("model.ckpt");
  save_checkpoint(path, params);

  const std::string bytes = io::read_bytes(path);
  REQUIRE(bytes.size() > 12);
  CHECK(bytes.substr(0, 4) == "GIFC");
  std::uint32_t version, count;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&count, bytes.data() + 8, 4);
  CHECK(version == kCheckpointVersion);
  CHECK(count == 3);  // two weights + one bias
  // First tensor record: name length then name.
  std::uint32_t name_len;
  std::memcpy(&name_len, bytes.data() + 12, 4);
  CHECK(bytes.substr(16, name_len) == "dense0.weight");
}

TEST_CASE("json checkpoints round-trip exactly") {
  TempDir tmp;
  const ModelSpec spec = demo_spec();
  const ParamVector params = random_params(spec, 17);
  const std::string path = tmp.file("model.json");
  save_checkpoint_json(path, params);
  const ParamVector loaded = load_checkpoint_json(path);
  CHECK(loaded.values == params.values);  // doubles survive the JSON mirror
  check_checkpoint_matches(loaded, spec);

  // auto dispatch picks the format from the suffix
  save_checkpoint_auto(tmp.file("a.json"), params);
  save_checkpoint_auto(tmp.file("a.ckpt"), params);
  CHECK(load_checkpoint_auto(tmp.file("a.json")).values == params.values);
  CHECK(load_checkpoint_auto(tmp.file("a.ckpt")).values == params.values);
  CHECK(io::read_bytes(tmp.file("a.ckpt")).substr(0, 4) == "GIFC");
  CHECK(io::read_bytes(tmp.file("a.json"))[0] == '{');
}

TEST_CASE("corrupted checkpoints are rejected") {
  TempDir tmp;
  const ModelSpec spec = demo_spec();
  const ParamVector params = random_params(spec, 5);
  const std::string path = tmp.file("model.ckpt");
  save_checkpoint(path, params);
  const std::string good = io::read_bytes(path);

  SUBCASE("bad magic") {
    std::string bad = good;
    bad[0] = 'X';
    io::atomic_write_bytes(path, bad);
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
  }
  SUBCASE("bad version") {
    std::string bad = good;
    bad[4] = 9;
    io::atomic_write_bytes(path, bad);
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
  }
  SUBCASE("truncated") {
    io::atomic_write_bytes(path, good.substr(0, good.size() / 2));
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
  }
  SUBCASE("trailing garbage") {
    io::atomic_write_bytes(path, good + "zzz");
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
  }
  SUBCASE("missing file") { CHECK_THROWS(load_checkpoint(tmp.file("nope.ckpt"))); }
}

TEST_CASE("model mismatch is detected") {
  TempDir tmp;
  const ParamVector params = random_params(demo_spec(), 1);
  ModelSpec other = demo_spec();
  other.layers[0].out = 6;
  other.layers[1].in = 6;
  CHECK_THROWS_AS(check_checkpoint_matches(params, other), CheckpointError);
}
