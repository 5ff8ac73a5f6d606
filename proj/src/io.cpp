#include "infkit/io.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <system_error>

namespace infkit::io {

namespace fs = std::filesystem;

void ensure_parent_dir(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

void ensure_dir(const std::string& path) {
  if (!path.empty()) fs::create_directories(path);
}

void atomic_write_bytes(const std::string& path, const std::string& bytes) {
  ensure_parent_dir(path);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + tmp + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write to '" + tmp + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error("cannot move '" + tmp + "' into place: " + ec.message());
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_json_file(const std::string& path, const json& j) {
  atomic_write_bytes(path, j.dump(2) + "\n");
}

json read_json_file(const std::string& path) {
  const std::string text = read_bytes(path);
  json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw Error("'" + path + "' is not valid JSON");
  return j;
}

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

JsonlWriter::JsonlWriter(const std::string& path) {
  ensure_parent_dir(path);
  out_.open(path, std::ios::trunc);
  if (!out_) throw Error("cannot open '" + path + "' for writing");
}

void JsonlWriter::write(const json& j) { out_ << j.dump() << "\n"; }

}  // namespace infkit::io
