#pragma once

#include "infkit/types.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <string>

namespace infkit::io {

using nlohmann::json;

// All writers go through a temp-file-then-rename so readers never observe a
// half-written artifact.
void atomic_write_bytes(const std::string& path, const std::string& bytes);
std::string read_bytes(const std::string& path);

void write_json_file(const std::string& path, const json& j);
json read_json_file(const std::string& path);

void ensure_parent_dir(const std::string& path);
void ensure_dir(const std::string& path);

// Shortest round-trip decimal rendering, for CSV cells.
std::string format_double(double x);

// Streaming JSON-lines sink (solver diagnostics). Not atomic by design: a
// crash should still leave the records written so far.
class JsonlWriter {
 public:
  explicit JsonlWriter(const std::string& path);
  void write(const json& j);

 private:
  std::ofstream out_;
};

}  // namespace infkit::io
