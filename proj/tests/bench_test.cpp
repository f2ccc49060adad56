#include <map>
#include <set>

#include <gtest/gtest.h>

#include "r2i/bench.hpp"
#include "r2i/error.hpp"
#include "r2i/io.hpp"
#include "r2i/stub_clients.hpp"
#include "support.hpp"

namespace r2i {
namespace {

using testing::TempDir;

TEST(Format, SeededShareOfMcq) {
  std::size_t mcq = 0;
  for (int i = 0; i < 4000; ++i) {
    const std::string id = "item-" + std::to_string(i);
    const AnswerFormat f = select_format(id, 0.735);
    EXPECT_EQ(select_format(id, 0.735), f);
    mcq += f == AnswerFormat::mcq;
  }
  EXPECT_NEAR(static_cast<double>(mcq) / 4000.0, 0.735, 0.03);
  EXPECT_EQ(select_format("x", 0.0), AnswerFormat::open);
  EXPECT_EQ(select_format("x", 1.0), AnswerFormat::mcq);
}

TEST(Mcq, ShuffleIsAPermutationSeededByItem) {
  const std::vector<std::string> d{"blue", "green", "white"};
  std::map<char, int> letters;
  for (int i = 0; i < 400; ++i) {
    const std::string id = "it" + std::to_string(i);
    const McqOptions o = shuffle_options(id, "red", d);
    ASSERT_EQ(o.options.size(), 4u);
    EXPECT_EQ(std::set<std::string>(o.options.begin(), o.options.end()),
              (std::set<std::string>{"red", "blue", "green", "white"}));
    EXPECT_EQ(o.options[static_cast<std::size_t>(o.gold_letter - 'A')], "red");
    EXPECT_EQ(o.gold(), std::string(1, o.gold_letter) + ". red");
    EXPECT_EQ(shuffle_options(id, "red", d).options, o.options);
    ++letters[o.gold_letter];
  }
  EXPECT_EQ(letters.size(), 4u);
  for (const auto& [l, n] : letters) EXPECT_GT(n, 60) << l;
}

TEST(Mcq, DistractorValidation) {
  EXPECT_TRUE(parse_distractors(R"(["blue", "green", "white"])", "red"));
  EXPECT_FALSE(parse_distractors(R"(["blue", "green"])", "red"));
  EXPECT_FALSE(parse_distractors(R"(["blue", "Blue.", "white"])", "red"));
  EXPECT_FALSE(parse_distractors(R"(["blue", "RED", "white"])", "red"));
  EXPECT_FALSE(parse_distractors(R"(["blue", 3, "white"])", "red"));
  EXPECT_FALSE(parse_distractors("blue, green, white", "red"));
}

TEST(Mcq, OneRegenerationThenFallback) {
  const PromptTemplates prompts = default_prompts();
  ScriptedClient gen("d", {std::string(R"(["red", "blue", "green"])"), std::string(R"(["pink", "blue", "green"])")});
  const std::string crop = encode_png(Image(2, 2));
  const auto o = make_mcq("i1", "What color?", "red", crop, gen, prompts);
  ASSERT_TRUE(o);
  EXPECT_EQ(gen.request_count(), 2u);
  EXPECT_EQ(gen.requests()[1].params.seed, 1);
  ScriptedClient bad("d", [](const ChatRequest&) { return std::string("[]"); });
  EXPECT_FALSE(make_mcq("i1", "What color?", "red", crop, bad, prompts));
  EXPECT_EQ(bad.request_count(), 2u);
  EXPECT_THROW(make_mcq("i1", "q", " ", crop, bad, prompts), PreconditionError);
}

TEST(Dimension, ParsingAndRetry) {
  EXPECT_EQ(parse_dimension("Counting."), Dimension::counting);
  EXPECT_EQ(parse_dimension("This is an OCR question"), Dimension::ocr);
  EXPECT_FALSE(parse_dimension("color or material"));
  EXPECT_FALSE(parse_dimension("texture"));
  ScriptedClient c("cls", {std::string("texture"), std::string("material")});
  EXPECT_EQ(classify_dimension("What is it made of?", "", c, default_prompts()), Dimension::material);
  const auto reqs = c.requests();
  EXPECT_EQ(reqs[1].prompt, render_classify_prompt(default_prompts(), "What is it made of?") + "\n\n" +
                                default_prompts().classify_retry);
  ScriptedClient never("cls", [](const ChatRequest&) { return std::string("texture"); });
  EXPECT_FALSE(classify_dimension("q", "", never, default_prompts()));
}

struct BenchFixture {
  TempDir dir;
  ManifestEntry entry;
  RegionProposal proposal;
  SynthesizedQA qa;

  BenchFixture() {
    entry.record = testing::write_test_image(dir / "Full.JPG", 900, 820, 4);
    entry.partition = Partition::bench;
    proposal = {entry.record.image_id + "-b0", entry.record.image_id, {100, 100, 180, 160}, "cup", 0.01};
    qa.qa_id = make_qa_id(proposal.box_id, 0);
    qa.box_id = proposal.box_id;
    qa.question = "What color is the cup?";
    qa.consensus = {true, std::string("Red"), 7, 8};
  }
};

TEST(BenchItem, BuildWritesBothViews) {
  BenchFixture f;
  const BenchItem item = build_bench_item(f.entry, f.proposal, f.qa, f.dir / "bench" / "images");
  EXPECT_EQ(item.item_id, f.qa.qa_id);
  EXPECT_EQ(item.answer, "Red");
  EXPECT_EQ(item.status, ItemStatus::pending);
  EXPECT_EQ(item.full_image.filename(), f.qa.qa_id + ".full.jpg");
  EXPECT_EQ(read_file(item.full_image), read_file(f.entry.record.path));
  const Image crop = read_image(item.crop_image);
  EXPECT_EQ(crop.width(), 160);
  EXPECT_EQ(crop.height(), 120);

  ManifestEntry train = f.entry;
  train.partition = Partition::train;
  EXPECT_THROW(build_bench_item(train, f.proposal, f.qa, f.dir / "b"), PreconditionError);
  SynthesizedQA rejected = f.qa;
  rejected.consensus = {false, std::nullopt, 3, 8};
  EXPECT_THROW(build_bench_item(f.entry, f.proposal, rejected, f.dir / "b"), PreconditionError);
}

TEST(BenchItem, FileRoundTripWithRelativePaths) {
  BenchFixture f;
  BenchItem item = build_bench_item(f.entry, f.proposal, f.qa, f.dir / "bench" / "images");
  item.format = AnswerFormat::mcq;
  item.options = {"Blue", "Red", "Green", "White"};
  item.answer = "B. Red";
  item.dimension = Dimension::color;
  item.review.push_back({"ann-a", true, true, true, std::string("ok"), "2026-01-01T00:00:00Z"});
  write_bench(f.dir / "bench" / "bench.jsonl", std::vector<BenchItem>{item});
  const auto rows = read_jsonl(f.dir / "bench" / "bench.jsonl");
  EXPECT_EQ(rows[0]["full_image"], "images/" + item.item_id + ".full.jpg");
  const auto back = read_bench(f.dir / "bench" / "bench.jsonl");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(fs::weakly_canonical(back[0].full_image), fs::weakly_canonical(item.full_image));
  BenchItem normalized = back[0];
  normalized.full_image = item.full_image;
  normalized.crop_image = item.crop_image;
  EXPECT_EQ(normalized, item);

  json bad = to_json(item);
  bad["options"] = json::array({"a", "b"});
  EXPECT_THROW(bench_item_from_json(bad), DataError);
}

BenchItem promoted(const std::string& id, Dimension d, const fs::path& full, const fs::path& crop) {
  BenchItem item;
  item.item_id = id;
  item.full_image = full;
  item.crop_image = crop;
  item.question = "What is written?";
  item.answer = "open";
  item.dimension = d;
  item.status = ItemStatus::promoted;
  return item;
}

TEST(DualView, SamePromptBothViews) {
  TempDir dir;
  const std::string full = encode_png(Image(4, 4, {9, 9, 9})), crop = encode_png(Image(2, 2, {1, 2, 3}));
  write_file_atomic(dir / "full.jpg", full);
  write_file_atomic(dir / "crop.jpg", crop);
  const std::vector<BenchItem> items{promoted("a", Dimension::ocr, dir / "full.jpg", dir / "crop.jpg"),
                                     promoted("b", Dimension::ocr, dir / "full.jpg", dir / "missing.jpg")};
  ScriptedClient model("m", [&](const ChatRequest& r) { return std::string(r.image == crop ? "OPEN" : "closed"); });
  ScriptedClient judge_client("j", [](const ChatRequest&) { return std::string("\\boxed{No}"); });
  EvalOptions opts;
  opts.concurrency = 2;
  const auto recs = run_dual_view(items, model, &judge_client, default_prompts(), opts);
  ASSERT_EQ(recs.size(), 4u);
  EXPECT_EQ(recs[0].view, View::global);
  EXPECT_EQ(recs[0].score, 0);
  EXPECT_EQ(recs[0].tier, ScoreTier::judge);
  EXPECT_EQ(recs[1].score, 1);
  EXPECT_EQ(recs[1].tier, ScoreTier::rule);
  EXPECT_TRUE(recs[3].failed);
  EXPECT_EQ(recs[3].item_id, "b");
  const auto reqs = model.requests();
  for (const auto& r : reqs) EXPECT_EQ(r.prompt, reqs[0].prompt);
  EXPECT_EQ(eval_record_from_json(to_json(recs[3])), recs[3]);

  std::vector<BenchItem> pending = items;
  pending[0].status = ItemStatus::pending;
  EXPECT_THROW(run_dual_view(pending, model, nullptr, default_prompts()), PreconditionError);
}

EvalRecord rec(const std::string& id, View v, int score, bool failed = false) {
  EvalRecord r;
  r.item_id = id;
  r.view = v;
  r.model_id = "m";
  r.score = score;
  r.failed = failed;
  return r;
}

TEST(Gap, WeightedRowsAndOmittedDimensions) {
  std::vector<BenchItem> items{promoted("c1", Dimension::counting, "", ""), promoted("c2", Dimension::counting, "", ""),
                               promoted("o1", Dimension::ocr, "", "")};
  const std::vector<EvalRecord> recs{rec("c1", View::global, 0), rec("c1", View::regional, 1),
                                     rec("c2", View::global, 1), rec("c2", View::regional, 1),
                                     rec("o1", View::global, 0, true), rec("o1", View::regional, 1)};
  const GapReport r = compute_gap(recs, items);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.failed, 1u);
  EXPECT_EQ(r.omitted.size(), 4u);
  EXPECT_DOUBLE_EQ(r.rows[0].global_acc, 50.0);
  EXPECT_DOUBLE_EQ(r.rows[0].gap, 50.0);
  EXPECT_EQ(r.rows[1].global_n, 0u);
  EXPECT_DOUBLE_EQ(r.global_acc, 50.0);
  EXPECT_DOUBLE_EQ(r.regional_acc, 100.0);
  const auto dup = std::vector<EvalRecord>{rec("c1", View::global, 0), rec("c1", View::global, 1)};
  EXPECT_THROW(compute_gap(dup, items), DataError);
  EXPECT_THROW(compute_gap(std::vector<EvalRecord>{rec("zz", View::global, 0)}, items), DataError);
}

TEST(Gap, DisplayRoundsEachSideFirst) {
  EXPECT_DOUBLE_EQ(display_gap(55.124, 70.336), 15.22);
  EXPECT_DOUBLE_EQ(display_gap(10.004, 10.006), 0.01);
  GapReport r;
  r.model_id = "m";
  r.rows.push_back({Dimension::color, 1, 1, 1, 0, 1, 0.0, 100.0, 100.0});
  r.regional_acc = 100.0;
  const std::vector<GapReport> reports{r};
  const std::string table = format_gap_table(reports);
  EXPECT_NE(table.find("Zooming Gap"), std::string::npos);
  EXPECT_NE(table.find("100.00"), std::string::npos);
  EXPECT_NE(table.find("Identification"), std::string::npos);
}

}  // namespace
}  // namespace r2i
