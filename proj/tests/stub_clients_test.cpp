#include <gtest/gtest.h>

#include "r2i/bench.hpp"
#include "r2i/corpus.hpp"
#include "r2i/error.hpp"
#include "r2i/io.hpp"
#include "r2i/prompts.hpp"
#include "r2i/scorer.hpp"
#include "r2i/stub_clients.hpp"
#include "r2i/synthesis.hpp"
#include "support.hpp"

namespace r2i {
namespace {

using testing::TempDir;

TEST(Scripted, QueueThenHandlerThenExhaustion) {
  ScriptedClient a("x", {std::string("one"), ScriptedFailure{429}}, [](const ChatRequest& r) { return r.prompt; });
  EXPECT_EQ(a.chat({"p", "", {}}), "one");
  try {
    a.chat({"p", "", {}});
    FAIL();
  } catch (const TransportError& e) {
    EXPECT_EQ(e.status(), 429);
    EXPECT_TRUE(e.retryable());
  }
  EXPECT_EQ(a.chat({"echo", "", {}}), "echo");
  EXPECT_EQ(a.request_count(), 3u);
  a.clear();
  EXPECT_EQ(a.request_count(), 0u);

  ScriptedClient b("x", {std::string("only")});
  b.chat({"p", "", {}});
  EXPECT_THROW(b.chat({"p", "", {}}), TransportError);
}

TEST(Transcript, ReplaysByDigest) {
  TempDir dir;
  const ChatRequest known{"hello", "", {0.0, 16, 2}};
  write_jsonl(dir / "t.jsonl", {json{{"digest", request_digest("t", "m", known)}, {"response", "world"}}});
  TranscriptClient c("t", "m", dir / "t.jsonl");
  EXPECT_EQ(c.chat(known), "world");
  ChatRequest other = known;
  other.params.seed = 3;
  try {
    c.chat(other);
    FAIL();
  } catch (const TransportError& e) {
    EXPECT_EQ(e.status(), 404);
    EXPECT_FALSE(e.retryable());
  }
}

TEST(Synthetic, DeterministicAndSelfConsistent) {
  const std::string q = "What color is the frame of the door?";
  const std::string truth = SyntheticClient::truth(q);
  EXPECT_EQ(SyntheticClient::truth(q + " Answer based on the region inside the red bounding box."), truth);

  const PromptTemplates prompts = default_prompts();
  SyntheticClient judge_client("judge", SyntheticRole::judge);
  const ScoreRecord yes = score(q, truth, "It is clearly something else", AnswerFormat::open, &judge_client, prompts.judge);
  EXPECT_EQ(yes.score, 0);
  const ScoreRecord judged =
      score(q, truth, "I would say the colour is " + truth + " overall", AnswerFormat::open, &judge_client, prompts.judge);
  EXPECT_EQ(judged.tier, ScoreTier::judge);
  EXPECT_EQ(judged.score, 1);

  SyntheticClient t1("teacher-a", SyntheticRole::teacher, 0);
  SyntheticClient t1_again("teacher-a", SyntheticRole::teacher, 0);
  for (int seed = 0; seed < 4; ++seed) {
    const ChatRequest req{render_answer_prompt(prompts, q), "", {1.0, 1024, seed}};
    EXPECT_EQ(t1.chat(req), t1_again.chat(req));
  }
}

TEST(Synthetic, ProposerChainYieldsParsableOutput) {
  TempDir dir;
  const ImageRecord img = testing::write_test_image(dir / "a.jpg", 1000, 800, 1);
  const std::string bytes = read_file(img.path);
  const PromptTemplates prompts = default_prompts();
  SyntheticClient inv("inventory", SyntheticRole::inventory);
  SyntheticClient seg("segmenter", SyntheticRole::segmenter);
  const auto labels = parse_label_list(inv.chat({prompts.inventory, bytes, {}}));
  EXPECT_EQ(labels.size(), 3u);
  const auto boxes = parse_box_list(seg.chat({render_segment_prompt(prompts, labels[0]), bytes, {}}), labels[0]);
  EXPECT_FALSE(boxes.empty());
}

TEST(Synthetic, ClassifierAndDistractorsFollowTheQuestion) {
  const PromptTemplates prompts = default_prompts();
  SyntheticClient cls("classifier", SyntheticRole::classifier);
  SyntheticClient dis("distractor", SyntheticRole::distractor);
  int classified = 0;
  for (int i = 0; i < 30; ++i) {
    const std::string q = "How many bolts can be seen on the sign " + std::to_string(i) + "?";
    if (classify_dimension(q, "", cls, prompts) == Dimension::counting) ++classified;
    const std::string truth = SyntheticClient::truth(q);
    const auto mcq = make_mcq("id" + std::to_string(i), q, truth, "", dis, prompts);
    ASSERT_TRUE(mcq) << q;
    EXPECT_EQ(mcq->options[static_cast<std::size_t>(mcq->gold_letter - 'A')], truth);
  }
  EXPECT_EQ(classified, 30);
}

}  // namespace
}  // namespace r2i
