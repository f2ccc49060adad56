#include "r2i/review.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <set>

#include "r2i/error.hpp"
#include "r2i/io.hpp"

namespace r2i {

ItemStatus evaluate_review(std::span<const ReviewVerdict> verdicts, const PromotionRule& rule) {
  std::set<std::string> approvers;
  for (const auto& v : verdicts) {
    if (!v.valid || !v.difficult || !v.correct) return ItemStatus::rejected;
    approvers.insert(v.annotator_id);
  }
  return static_cast<int>(approvers.size()) >= rule.quorum ? ItemStatus::promoted : ItemStatus::pending;
}

void submit_verdict(BenchItem& item, ReviewVerdict verdict, const PromotionRule& rule) {
  if (item.status != ItemStatus::pending) {
    throw ConflictError("item " + item.item_id + " is already " + std::string(to_string(item.status)));
  }
  if (verdict.annotator_id.empty()) throw PreconditionError("verdict without annotator");
  auto it = std::find_if(item.review.begin(), item.review.end(),
                         [&](const ReviewVerdict& v) { return v.annotator_id == verdict.annotator_id; });
  if (it != item.review.end()) {
    *it = std::move(verdict);
  } else {
    item.review.push_back(std::move(verdict));
  }
  if (evaluate_review(item.review, rule) == ItemStatus::rejected) item.status = ItemStatus::rejected;
}

bool promote_if_ready(BenchItem& item, const PromotionRule& rule) {
  if (item.status != ItemStatus::pending || evaluate_review(item.review, rule) != ItemStatus::promoted) return false;
  item.status = ItemStatus::promoted;
  return true;
}

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

ReviewStore::ReviewStore(fs::path bench_file, PromotionRule rule, Now now)
    : path_(std::move(bench_file)), rule_(rule), now_(now ? std::move(now) : Now(utc_timestamp)) {
  items_ = read_bench(path_);
}

ItemPage ReviewStore::list(std::optional<ItemStatus> status, std::size_t page, std::size_t page_size) const {
  if (page < 1 || page_size < 1) throw PreconditionError("page and page_size start at 1");
  std::lock_guard lock(mu_);
  std::vector<const BenchItem*> matching;
  for (const auto& item : items_) {
    if (!status || item.status == *status) matching.push_back(&item);
  }
  ItemPage out;
  out.total = matching.size();
  out.page = page;
  out.pages = (matching.size() + page_size - 1) / page_size;
  for (std::size_t i = (page - 1) * page_size; i < matching.size() && i < page * page_size; ++i) {
    out.items.push_back(*matching[i]);
  }
  return out;
}

std::size_t ReviewStore::index_of(const std::string& item_id) const {
  auto it = std::find_if(items_.begin(), items_.end(), [&](const BenchItem& i) { return i.item_id == item_id; });
  if (it == items_.end()) throw NotFoundError("no bench item " + item_id);
  return static_cast<std::size_t>(it - items_.begin());
}

BenchItem ReviewStore::get(const std::string& item_id) const {
  std::lock_guard lock(mu_);
  return items_[index_of(item_id)];
}

BenchItem ReviewStore::submit(const std::string& item_id, ReviewVerdict verdict) {
  std::lock_guard lock(mu_);
  BenchItem& item = items_[index_of(item_id)];
  if (verdict.timestamp.empty()) verdict.timestamp = now_();
  BenchItem updated = item;
  submit_verdict(updated, std::move(verdict), rule_);
  item = std::move(updated);
  persist();
  return item;
}

std::size_t ReviewStore::promote_ready() {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (auto& item : items_) n += promote_if_ready(item, rule_) ? 1 : 0;
  if (n > 0) persist();
  return n;
}

std::vector<BenchItem> ReviewStore::snapshot() const {
  std::lock_guard lock(mu_);
  return items_;
}

void ReviewStore::persist() const { write_bench(path_, items_); }

}  // namespace r2i
