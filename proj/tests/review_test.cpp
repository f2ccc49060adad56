#include <gtest/gtest.h>

#include "r2i/error.hpp"
#include "r2i/io.hpp"
#include "r2i/review.hpp"
#include "support.hpp"

namespace r2i {
namespace {

using testing::TempDir;

ReviewVerdict verdict(const std::string& who, bool ok = true) { return {who, ok, true, ok, std::nullopt, "t"}; }

BenchItem pending_item(const std::string& id) {
  BenchItem item;
  item.item_id = id;
  item.full_image = "images/" + id + ".full.jpg";
  item.crop_image = "images/" + id + ".crop.jpg";
  item.question = "q";
  item.answer = "a";
  return item;
}

TEST(ReviewRule, QuorumOfDistinctAllTrueAnnotators) {
  EXPECT_EQ(evaluate_review({}), ItemStatus::pending);
  const std::vector<ReviewVerdict> two{verdict("a"), verdict("b")};
  EXPECT_EQ(evaluate_review(two), ItemStatus::pending);
  const std::vector<ReviewVerdict> three{verdict("a"), verdict("b"), verdict("c")};
  EXPECT_EQ(evaluate_review(three), ItemStatus::promoted);
  const std::vector<ReviewVerdict> repeat{verdict("a"), verdict("a"), verdict("b")};
  EXPECT_EQ(evaluate_review(repeat), ItemStatus::pending);
  const std::vector<ReviewVerdict> veto{verdict("a"), verdict("b"), verdict("c"), verdict("d", false)};
  EXPECT_EQ(evaluate_review(veto), ItemStatus::rejected);
  EXPECT_EQ(evaluate_review(two, {2}), ItemStatus::promoted);
}

TEST(ReviewRule, SubmitReplacesAndClosedItemsConflict) {
  BenchItem item = pending_item("x");
  submit_verdict(item, verdict("a"));
  submit_verdict(item, verdict("a"));
  EXPECT_EQ(item.review.size(), 1u);
  submit_verdict(item, verdict("b"));
  submit_verdict(item, verdict("c"));
  EXPECT_EQ(item.status, ItemStatus::pending);
  EXPECT_TRUE(promote_if_ready(item));
  EXPECT_EQ(item.status, ItemStatus::promoted);
  EXPECT_FALSE(promote_if_ready(item));
  EXPECT_THROW(submit_verdict(item, verdict("d")), ConflictError);

  BenchItem other = pending_item("y");
  submit_verdict(other, verdict("a", false));
  EXPECT_EQ(other.status, ItemStatus::rejected);
  EXPECT_THROW(submit_verdict(other, verdict("b")), ConflictError);
  BenchItem anon = pending_item("z");
  EXPECT_THROW(submit_verdict(anon, verdict("")), PreconditionError);
}

fs::path write_items(const TempDir& dir, int n) {
  std::vector<BenchItem> items;
  for (int i = 0; i < n; ++i) items.push_back(pending_item("i" + std::to_string(i)));
  const fs::path path = dir / "bench.jsonl";
  write_bench(path, items);
  return path;
}

TEST(ReviewStore, PersistsEveryMutation) {
  TempDir dir;
  const fs::path path = write_items(dir, 5);
  ReviewStore store(path, {}, [] { return std::string("2026-02-03T04:05:06Z"); });
  for (const char* who : {"a", "b", "c"}) store.submit("i1", verdict(who));
  store.submit("i2", verdict("a", false));
  EXPECT_EQ(read_bench(path)[1].review.size(), 3u);
  EXPECT_EQ(read_bench(path)[2].status, ItemStatus::rejected);
  EXPECT_EQ(store.promote_ready(), 1u);
  EXPECT_EQ(store.promote_ready(), 0u);

  ReviewStore reopened(path);
  EXPECT_EQ(reopened.get("i1").status, ItemStatus::promoted);
  ReviewVerdict untimed = verdict("q");
  untimed.timestamp.clear();
  const BenchItem after = store.submit("i3", untimed);
  EXPECT_EQ(after.review[0].timestamp, "2026-02-03T04:05:06Z");
  EXPECT_THROW(store.get("nope"), NotFoundError);
  EXPECT_THROW(store.submit("i1", verdict("d")), ConflictError);
  EXPECT_EQ(read_bench(path)[1].review.size(), 3u);
}

TEST(ReviewStore, Paging) {
  TempDir dir;
  ReviewStore store(write_items(dir, 5));
  const ItemPage p = store.list(std::nullopt, 2, 2);
  EXPECT_EQ(p.total, 5u);
  EXPECT_EQ(p.pages, 3u);
  ASSERT_EQ(p.items.size(), 2u);
  EXPECT_EQ(p.items[0].item_id, "i2");
  EXPECT_TRUE(store.list(ItemStatus::promoted, 1, 10).items.empty());
  EXPECT_TRUE(store.list(std::nullopt, 4, 2).items.empty());
  EXPECT_THROW(store.list(std::nullopt, 0, 2), PreconditionError);
}

TEST(ReviewStore, TimestampFormat) {
  const std::string t = utc_timestamp();
  ASSERT_EQ(t.size(), 20u);
  EXPECT_EQ(t[10], 'T');
  EXPECT_EQ(t.back(), 'Z');
}

}  // namespace
}  // namespace r2i
