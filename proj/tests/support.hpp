#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>

#include "r2i/corpus.hpp"
#include "r2i/image.hpp"
#include "r2i/pipeline.hpp"

namespace r2i::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::filesystem::path fixtures();

/// Deterministic test pattern: a smooth gradient plus a few solid blocks.
Image pattern_image(int width, int height, unsigned salt = 0);

/// Writes a JPEG (quality 95) or PNG by extension and returns its ImageRecord.
ImageRecord write_test_image(const std::filesystem::path& path, int width, int height, unsigned salt = 0);

/// The end-to-end fixture config with its work directory moved to `work_dir`.
PipelineConfig e2e_config(const std::filesystem::path& work_dir);

/// Relative path -> SHA-256 for every file under each of `roots` (relative to base).
std::map<std::string, std::string> tree_digest(const std::filesystem::path& base, const std::vector<std::string>& roots);

/// Reads `path/to/file  digest` lines as written by sha256sum.
std::map<std::string, std::string> read_sha256_list(const std::filesystem::path& file);

/// Applies `wrap` to every distinct client of a set.
ClientSet wrap_clients(const ClientSet& in,
                       const std::function<std::shared_ptr<ModelClient>(std::shared_ptr<ModelClient>)>& wrap);

/// Forwards to `inner` until `budget` calls have passed through, then throws
/// a retryable TransportError for every later call. The budget is shared.
class FailAfter final : public ModelClient {
 public:
  FailAfter(std::shared_ptr<ModelClient> inner, std::shared_ptr<std::atomic<long>> budget)
      : inner_(std::move(inner)), budget_(std::move(budget)) {}
  std::string chat(const ChatRequest& request) override;
  const std::string& endpoint_id() const override { return inner_->endpoint_id(); }
  const std::string& model() const override { return inner_->model(); }

 private:
  std::shared_ptr<ModelClient> inner_;
  std::shared_ptr<std::atomic<long>> budget_;
};

}  // namespace r2i::testing
