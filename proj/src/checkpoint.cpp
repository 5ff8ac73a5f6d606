#include "infkit/checkpoint.hpp"

#include "infkit/io.hpp"

#include <bit>
#include <cstring>

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace infkit {

namespace {

constexpr char kMagic[4] = {'G', 'I', 'F', 'C'};

void append_raw(std::string& out, const void* data, std::size_t bytes) {
  out.append(static_cast<const char*>(data), bytes);
}

template <typename T>
void append_pod(std::string& out, T value) {
  append_raw(out, &value, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

  template <typename T>
  T pod() {
    T value;
    raw(&value, sizeof(T));
    return value;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void raw(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }

  bool exhausted() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) {
    if (pos_ + n > bytes_.size()) {
      throw CheckpointError("'" + path_ + "' is truncated");
    }
  }

  const std::string& bytes_;
  const std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, const ParamVector& params) {
  params.validate();
  std::string out;
  append_raw(out, kMagic, 4);
  append_pod<std::uint32_t>(out, kCheckpointVersion);
  append_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.layer_map.size()));
  for (const LayerMapEntry& e : params.layer_map) {
    append_pod<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.append(e.name);
    append_pod<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
    for (Index d : e.shape) append_pod<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    append_raw(out, params.values.data() + e.offset,
               static_cast<std::size_t>(e.size()) * sizeof(double));
  }
  io::atomic_write_bytes(path, out);
}

ParamVector load_checkpoint(const std::string& path) {
  const std::string bytes = io::read_bytes(path);
  Reader in(bytes, path);

  char magic[4];
  in.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw CheckpointError("'" + path + "' does not start with the GIFC magic");
  }
  const auto version = in.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("'" + path + "' has unsupported version " + std::to_string(version));
  }
  const auto count = in.pod<std::uint32_t>();

  ParamVector params;
  std::vector<double> values;
  for (std::uint32_t t = 0; t < count; ++t) {
    LayerMapEntry e;
    e.name = in.str(in.pod<std::uint32_t>());
    const auto rank = in.pod<std::uint32_t>();
    if (rank == 0 || rank > 2) {
      throw CheckpointError("tensor '" + e.name + "' in '" + path + "' has unsupported rank " +
                            std::to_string(rank));
    }
    Index size = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const auto dim = in.pod<std::uint64_t>();
      e.shape.push_back(static_cast<Index>(dim));
      size *= static_cast<Index>(dim);
    }
    e.offset = static_cast<Index>(values.size());
    values.resize(values.size() + static_cast<std::size_t>(size));
    in.raw(values.data() + e.offset, static_cast<std::size_t>(size) * sizeof(double));
    params.layer_map.push_back(std::move(e));
  }
  if (!in.exhausted()) {
    throw CheckpointError("'" + path + "' has trailing bytes");
  }
  params.values = Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
  params.validate();
  return params;
}

void save_checkpoint_json(const std::string& path, const ParamVector& params) {
  params.validate();
  io::json layers = io::json::array();
  for (const LayerMapEntry& e : params.layer_map) {
    io::json values = io::json::array();
    for (Index i = 0; i < e.size(); ++i) values.push_back(params.values[e.offset + i]);
    layers.push_back({{"name", e.name}, {"shape", e.shape}, {"values", std::move(values)}});
  }
  io::write_json_file(path, {{"format", "gifc"},
                             {"version", kCheckpointVersion},
                             {"layers", std::move(layers)}});
}

ParamVector load_checkpoint_json(const std::string& path) {
  const io::json j = io::read_json_file(path);
  try {
    if (j.at("format") != "gifc" || j.at("version") != kCheckpointVersion) {
      throw CheckpointError("'" + path + "' is not a gifc v" +
                            std::to_string(kCheckpointVersion) + " checkpoint");
    }
    ParamVector params;
    std::vector<double> values;
    for (const io::json& layer : j.at("layers")) {
      LayerMapEntry e;
      e.name = layer.at("name").get<std::string>();
      e.shape = layer.at("shape").get<std::vector<Index>>();
      e.offset = static_cast<Index>(values.size());
      for (const io::json& v : layer.at("values")) values.push_back(v.get<double>());
      if (static_cast<Index>(values.size()) - e.offset != e.size()) {
        throw CheckpointError("tensor '" + e.name + "' in '" + path +
                              "' has a value count that does not match its shape");
      }
      params.layer_map.push_back(std::move(e));
    }
    params.values = Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
    params.validate();
    return params;
  } catch (const io::json::exception& e) {
    throw CheckpointError("'" + path + "' is malformed: " + e.what());
  }
}

namespace {
bool has_json_suffix(const std::string& path) {
  return path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
}
}  // namespace

void save_checkpoint_auto(const std::string& path, const ParamVector& params) {
  if (has_json_suffix(path)) {
    save_checkpoint_json(path, params);
  } else {
    save_checkpoint(path, params);
  }
}

ParamVector load_checkpoint_auto(const std::string& path) {
  return has_json_suffix(path) ? load_checkpoint_json(path) : load_checkpoint(path);
}

void check_checkpoint_matches(const ParamVector& params, const ModelSpec& spec) {
  const auto expected = layer_map_for(spec);
  if (expected.size() != params.layer_map.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(params.layer_map.size()) +
                          " tensors but the model defines " + std::to_string(expected.size()));
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const LayerMapEntry& want = expected[i];
    const LayerMapEntry& got = params.layer_map[i];
    if (want.name != got.name || want.shape != got.shape || want.offset != got.offset) {
      throw CheckpointError("checkpoint tensor '" + got.name + "' does not match model tensor '" +
                            want.name + "'");
    }
  }
}

}  // namespace infkit
