#include <algorithm>

#include <gtest/gtest.h>

#include "r2i/error.hpp"
#include "r2i/io.hpp"
#include "r2i/stub_clients.hpp"
#include "r2i/synthesis.hpp"
#include "r2i/text.hpp"
#include "support.hpp"

namespace r2i {
namespace {

using testing::TempDir;

TEST(Crop, SizesRoundUp) {
  EXPECT_EQ(scaled_size({0, 0, 10, 7}, 2.0).width, 20);
  EXPECT_EQ(scaled_size({0, 0, 10, 7}, 1.5).height, 11);
  EXPECT_EQ(scaled_size({0, 0, 3, 3}, 1.0).width, 3);
  EXPECT_THROW(scaled_size({0, 0, 3, 3}, 0.0), PreconditionError);
}

TEST(Crop, UnitScaleIsExactPixels) {
  const Image src = testing::pattern_image(64, 48, 3);
  const PixelBox box{5, 7, 30, 40};
  EXPECT_EQ(render_crop(src, box, 1.0), crop(src, box));
  const Image big = render_crop(src, box, 2.0);
  EXPECT_EQ(big.width(), 50);
  EXPECT_EQ(big.height(), 66);
}

TEST(Crop, WritesLosslessPngAndRejectsBadBoxes) {
  TempDir dir;
  const ImageRecord img = testing::write_test_image(dir / "a.png", 120, 90, 5);
  const CropSpec spec = crop_region(img, {10, 10, 50, 30}, 2.0, dir / "crops", "x-b0");
  EXPECT_EQ(spec.crop_path, dir / "crops" / "x-b0.png");
  EXPECT_EQ(spec.crop_width, 80);
  EXPECT_EQ(spec.crop_height, 40);
  EXPECT_EQ(read_image(spec.crop_path), render_crop(read_image(img.path), {10, 10, 50, 30}, 2.0));
  EXPECT_EQ(crop_spec_from_json(to_json(spec)), spec);
  EXPECT_THROW(crop_region(img, {10, 10, 130, 30}, 2.0, dir / "crops", "x-b1"), PreconditionError);
}

TEST(Questions, ParsingKeepsOrderCapsAndSkipsRepeats) {
  const auto qs = parse_question_list(
      R"(```json
[{"question": "What color is the cup?"}, {"question": "  "}, "What  color is the CUP?",
 {"question": "How many books?"}, {"other": 1}, {"question": "Is the lamp on?"}]
```)",
      2);
  EXPECT_EQ(qs, (std::vector<std::string>{"What color is the cup?", "How many books?"}));
  EXPECT_TRUE(parse_question_list("[]", 3).empty());
  EXPECT_THROW(parse_question_list("Here are some questions", 3), DataError);
}

CropSpec write_crop(const TempDir& dir) {
  const ImageRecord img = testing::write_test_image(dir / "a.png", 64, 64);
  return crop_region(img, {0, 0, 32, 32}, 2.0, dir.path(), "c-b0");
}

TEST(Questions, OneJsonRepromptThenFailure) {
  TempDir dir;
  const CropSpec crop = write_crop(dir);
  const PromptTemplates prompts = default_prompts();
  ScriptedClient ok("gen", {std::string("sure"), std::string(R"(["What is written on the sign?"])")});
  const auto a = generate_questions(crop, ok, prompts, 3);
  EXPECT_FALSE(a.failed);
  EXPECT_EQ(a.questions.size(), 1u);
  EXPECT_EQ(a.raw_responses.size(), 2u);
  EXPECT_EQ(ok.requests()[1].prompt, with_json_retry(prompts, render_question_prompt(prompts)));
  EXPECT_EQ(ok.requests()[0].image_bytes, read_file(crop.crop_path).size());

  ScriptedClient bad("gen", [](const ChatRequest&) { return std::string("no"); });
  const auto b = generate_questions(crop, bad, prompts, 3);
  EXPECT_TRUE(b.failed);
  EXPECT_TRUE(b.questions.empty());
  EXPECT_EQ(bad.request_count(), 2u);
}

TEST(Answers, SeedsDistinguishRepeatedSamples) {
  TempDir dir;
  const CropSpec crop = write_crop(dir);
  auto t1 = std::make_shared<ScriptedClient>("t1", [](const ChatRequest& r) { return "Red " + std::to_string(*r.params.seed); });
  auto t2 = std::make_shared<ScriptedClient>("t2", [](const ChatRequest&) { return std::string(" red. "); });
  const std::vector<Teacher> teachers{{"t1", t1}, {"t2", t2}};
  DecodeParams params;
  params.seed = 10;
  params.temperature = 0.7;
  const auto samples = sample_answers(crop, "What color?", teachers, 3, default_prompts(), params);
  ASSERT_EQ(samples.size(), 6u);
  EXPECT_EQ(samples[2].teacher_id, "t1");
  EXPECT_EQ(samples[2].sample_index, 2);
  EXPECT_EQ(samples[2].raw_text, "Red 12");
  EXPECT_EQ(samples[5].normalized_text, "red");
  const auto reqs = t1->requests();
  EXPECT_NE(reqs[0].digest, reqs[1].digest);
  EXPECT_EQ(reqs[0].params.temperature, 0.7);
  EXPECT_THROW(sample_answers(crop, "q", {}, 1, default_prompts()), PreconditionError);
}

TEST(Answers, TransportFailurePropagates) {
  TempDir dir;
  const CropSpec crop = write_crop(dir);
  auto t = std::make_shared<ScriptedClient>("t", std::vector<ScriptedClient::Reply>{std::string("a"), ScriptedFailure{500}});
  const std::vector<Teacher> teachers{{"t", t}};
  EXPECT_THROW(sample_answers(crop, "q", teachers, 2, default_prompts()), TransportError);
}

TEST(Consensus, StrictThreshold) {
  const std::vector<std::string> four{"Red", "red.", "RED", " red ", "blue", "blue", "green", "two"};
  const Consensus c = consensus(std::span<const std::string>(four), 4);
  EXPECT_FALSE(c.accepted);
  EXPECT_EQ(c.majority_count, 4);
  EXPECT_EQ(c.total, 8);
  EXPECT_FALSE(c.label);
  const Consensus d = consensus(std::span<const std::string>(four), 3);
  EXPECT_TRUE(d.accepted);
  ASSERT_TRUE(d.label);
  EXPECT_EQ(normalize_answer(*d.label), "red");
}

TEST(Consensus, LabelIsMostFrequentRawFormWithLexicographicTies) {
  const std::vector<std::string> a{"red.", "Red", "Red", "red.", "red", "blue"};
  EXPECT_EQ(consensus(std::span<const std::string>(a), 2).label, "Red");
  const std::vector<std::string> b{"red.", "red.", "Red", "Red", "Red", "red.", "x"};
  EXPECT_EQ(consensus(std::span<const std::string>(b), 2).label, "Red");
  const std::vector<std::string> c{"b", "b", "a", "a", "c"};
  EXPECT_EQ(consensus(std::span<const std::string>(c), 1).label, "a");
}

TEST(Consensus, PermutationInvariant) {
  std::vector<std::string> xs{"cat", "Cat", "dog", "cat.", "dog", "Dog", "bird", "DOG"};
  std::sort(xs.begin(), xs.end());
  const Consensus first = consensus(std::span<const std::string>(xs), 3);
  do {
    EXPECT_EQ(consensus(std::span<const std::string>(xs), 3), first);
  } while (std::next_permutation(xs.begin(), xs.end()));
  EXPECT_EQ(first.label, "dog");
}

TEST(Consensus, Preconditions) {
  EXPECT_THROW(consensus(std::span<const std::string>(), 0), PreconditionError);
  const std::vector<std::string> xs{"a", "b"};
  EXPECT_THROW(consensus(std::span<const std::string>(xs), 2), PreconditionError);
  EXPECT_THROW(consensus(std::span<const std::string>(xs), -1), PreconditionError);
}

TEST(SynthesizedQA, JsonRoundTrip) {
  SynthesizedQA qa{make_qa_id("img-b3", 2), "img-b3", "What?", {{"t", 0, "A", "a"}, {"t", 1, "A.", "a"}},
                   {true, std::string("A"), 2, 2}};
  EXPECT_EQ(qa.qa_id, "img-b3-q2");
  EXPECT_EQ(synthesized_qa_from_json(to_json(qa)), qa);
}

}  // namespace
}  // namespace r2i
