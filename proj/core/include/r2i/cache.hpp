#pragma once

#include <filesystem>
#include <optional>
#include <string>

namespace r2i {

/// Content-addressed response store on disk: one JSON file per key at
/// `<dir>/<key[0:2]>/<key>.json`. Entries are immutable; a second put for the
/// same key keeps the first response.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  std::optional<std::string> get(const std::string& key) const;

  /// Returns false when an entry already existed.
  bool put(const std::string& key, const std::string& response);

  std::size_t size() const;

 private:
  std::filesystem::path entry_path(const std::string& key) const;

  std::filesystem::path dir_;
};

}  // namespace r2i
