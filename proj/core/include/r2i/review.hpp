#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "r2i/bench.hpp"

namespace r2i {

struct PromotionRule {
  int quorum = 3;  // distinct annotators, each answering valid, difficult and correct
};

/// Rejected as soon as any verdict has a false flag; promoted once `quorum`
/// distinct annotators are all-true; pending otherwise.
ItemStatus evaluate_review(std::span<const ReviewVerdict> verdicts, const PromotionRule& rule = {});

/// Records a verdict on a pending item, replacing the annotator's earlier one.
/// A verdict with any false flag rejects the item immediately. Throws
/// ConflictError on promoted or rejected items.
void submit_verdict(BenchItem& item, ReviewVerdict verdict, const PromotionRule& rule = {});

/// Moves a pending item that meets the quorum to promoted.
bool promote_if_ready(BenchItem& item, const PromotionRule& rule = {});

struct ItemPage {
  std::vector<BenchItem> items;
  std::size_t total = 0;
  std::size_t page = 1;
  std::size_t pages = 0;
};

/// Thread-safe bench file with review state. Every mutation rewrites the file
/// atomically before returning.
class ReviewStore {
 public:
  using Now = std::function<std::string()>;

  ReviewStore(std::filesystem::path bench_file, PromotionRule rule = {}, Now now = {});

  ItemPage list(std::optional<ItemStatus> status, std::size_t page, std::size_t page_size) const;
  BenchItem get(const std::string& item_id) const;
  BenchItem submit(const std::string& item_id, ReviewVerdict verdict);
  std::size_t promote_ready();
  std::vector<BenchItem> snapshot() const;

 private:
  std::size_t index_of(const std::string& item_id) const;
  void persist() const;

  mutable std::mutex mu_;
  std::filesystem::path path_;
  PromotionRule rule_;
  Now now_;
  std::vector<BenchItem> items_;
};

/// Current UTC time as "YYYY-MM-DDTHH:MM:SSZ".
std::string utc_timestamp();

/// HTTP+JSON front end for a ReviewStore. Tokens map bearer strings to
/// annotator ids.
class ReviewServer {
 public:
  ReviewServer(std::shared_ptr<ReviewStore> store, std::map<std::string, std::string> tokens,
               std::size_t page_size = 20);
  ~ReviewServer();
  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  /// Binds (port 0 picks a free one) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0);

  /// Binds and serves on the calling thread until stop().
  void run(const std::string& host, int port);

  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
};

}  // namespace r2i
