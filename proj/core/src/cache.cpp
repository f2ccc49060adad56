#include "r2i/cache.hpp"

#include <chrono>

#include "r2i/error.hpp"
#include "r2i/io.hpp"

namespace r2i {

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path ResponseCache::entry_path(const std::string& key) const {
  if (key.size() < 8 || key.find_first_not_of("0123456789abcdef") != std::string::npos) {
    throw PreconditionError("cache key must be a hex digest");
  }
  return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<std::string> ResponseCache::get(const std::string& key) const {
  const auto path = entry_path(key);
  if (!std::filesystem::exists(path)) return std::nullopt;
  try {
    const auto entry = json::parse(read_file(path));
    if (entry.value("key", "") != key) return std::nullopt;
    return entry.at("response").get<std::string>();
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

bool ResponseCache::put(const std::string& key, const std::string& response) {
  const auto path = entry_path(key);
  if (std::filesystem::exists(path)) return false;
  const auto created = std::chrono::duration_cast<std::chrono::seconds>(
                           std::chrono::system_clock::now().time_since_epoch())
                           .count();
  json entry = {{"key", key}, {"response", response}, {"created_at", created}};
  write_file_atomic(path, entry.dump());
  return true;
}

std::size_t ResponseCache::size() const {
  std::size_t n = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir_)) {
    if (e.is_regular_file() && e.path().extension() == ".json") ++n;
  }
  return n;
}

}  // namespace r2i
