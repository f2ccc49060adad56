#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace r2i {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string read_file(const fs::path& path);

/// Writes through a sibling temp file and renames, so readers never see a partial file.
void write_file_atomic(const fs::path& path, std::string_view contents);

/// Copies bytes verbatim, creating parent directories.
void copy_file_bytes(const fs::path& from, const fs::path& to);

/// Reads one JSON value per non-empty line. With `tolerate_torn_tail`, an
/// unparsable final line (interrupted append) is ignored instead of raising.
std::vector<json> read_jsonl(const fs::path& path, bool tolerate_torn_tail = false);

/// Serializes records one per line (compact, keys sorted) and writes atomically.
void write_jsonl(const fs::path& path, const std::vector<json>& records);

std::string to_jsonl(const std::vector<json>& records);

/// Serialized line appender; safe to share between worker threads.
class JsonlAppender {
 public:
  explicit JsonlAppender(const fs::path& path);

  void append(const json& record);

 private:
  std::mutex mu_;
  std::ofstream out_;
};

}  // namespace r2i
