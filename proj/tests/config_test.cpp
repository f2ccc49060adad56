#include <gtest/gtest.h>

#include "r2i/config.hpp"
#include "r2i/error.hpp"
#include "r2i/hash.hpp"
#include "r2i/io.hpp"
#include "support.hpp"

namespace r2i {
namespace {

using testing::TempDir;

TEST(Config, DefaultsAreValid) {
  const PipelineConfig c = default_config();
  EXPECT_NO_THROW(validate(c));
  EXPECT_EQ(c.tau, 0.1);
  EXPECT_EQ(c.scale_factor, 2.0);
  EXPECT_EQ(c.consensus_threshold, 6);
  EXPECT_EQ(c.teachers.size() * static_cast<std::size_t>(c.samples_per_teacher), 8u);
  EXPECT_EQ(c.trials, 4);
  EXPECT_EQ(c.max_correct, 2);
  EXPECT_EQ(c.promotion.quorum, 3);
  EXPECT_EQ(c.m_star, 24u);
  EXPECT_EQ(c.epsilon, 1e-6);
  EXPECT_EQ(c.min_dim, 800);
}

TEST(Config, LoadsYamlAndResolvesPathsAgainstTheFile) {
  TempDir dir;
  write_file_atomic(dir / "judge.txt", "custom {question} {gt} {response}");
  write_file_atomic(dir / "c.yaml", R"(seed: 3
work_dir: out
corpus:
  roots: [imgs, /abs/imgs]
  bench_fraction: 0.3
proposals:
  proposer: annotations
  annotations: ann.jsonl
  tau: 0.05
synthesis:
  teachers: [t1, t2, t3]
  samples_per_teacher: 2
  consensus_threshold: 4
distill:
  variant: bbox_in_question
  overlay_color: [0, 255, 0]
attention:
  k_star: 1
endpoints:
  - endpoint_id: t1
    base_url: http://localhost:9000/v1
    model: some-model
    requests_per_minute: 30
prompts:
  judge_file: judge.txt
)" + std::string("  judge_sha256: ") + sha256_hex("custom {question} {gt} {response}") + "\n");
  const PipelineConfig c = load_config(dir / "c.yaml");
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.work_dir, dir / "out");
  EXPECT_EQ(c.corpus_roots[0], dir / "imgs");
  EXPECT_EQ(c.corpus_roots[1], fs::path("/abs/imgs"));
  EXPECT_EQ(c.proposer, ProposerKind::annotations);
  EXPECT_EQ(c.annotations, dir / "ann.jsonl");
  EXPECT_EQ(c.variant, GroundingVariant::bbox_in_question);
  EXPECT_EQ(c.grounding.color, (Rgb{0, 255, 0}));
  EXPECT_EQ(c.k_star, 1u);
  EXPECT_EQ(c.endpoints.at("t1").requests_per_minute, 30);
  EXPECT_EQ(c.endpoints.at("t1").max_retries, 5);
  EXPECT_EQ(c.prompts.judge, "custom {question} {gt} {response}");
}

PreconditionError load_error(const std::string& yaml) {
  TempDir dir;
  write_file_atomic(dir / "c.yaml", yaml);
  try {
    load_config(dir / "c.yaml");
  } catch (const PreconditionError& e) {
    return e;
  }
  ADD_FAILURE() << "config loaded: " << yaml;
  return PreconditionError("");
}

TEST(Config, RejectsUnknownKeysTypesAndRanges) {
  EXPECT_NE(std::string(load_error("corpus:\n  rootz: [a]\n").what()).find("corpus.rootz"), std::string::npos);
  EXPECT_NE(std::string(load_error("seed: seven\n").what()).find("seed"), std::string::npos);
  load_error("proposals:\n  tau: 0\n");
  load_error("synthesis:\n  consensus_threshold: 8\n");
  load_error("distill:\n  max_correct: 4\n");
  load_error("corpus:\n  bench_fraction: 1.0\n");
  load_error("proposals:\n  proposer: magic\n");
  load_error("seed: [unclosed\n");
}

TEST(Config, JudgeTemplateIsPinned) {
  const std::string what = load_error("prompts:\n  judge: \"{question} {gt} {response} changed\"\n").what();
  EXPECT_NE(what.find("judge template checksum"), std::string::npos);
}

TEST(Config, ChecksumIgnoresLocationsAndThroughput) {
  PipelineConfig a = default_config();
  PipelineConfig b = a;
  b.work_dir = "/elsewhere";
  b.concurrency = 9;
  b.cache = false;
  b.corpus_roots = {"/x"};
  b.annotations = "/y.jsonl";
  b.review_tokens = {{"secret-token", "ann"}};
  EXPECT_EQ(config_checksum(a), config_checksum(b));
  b.seed = 1;
  EXPECT_NE(config_checksum(a), config_checksum(b));
  PipelineConfig c = a;
  c.prompts.question += " ";
  EXPECT_NE(config_checksum(a), config_checksum(c));
  EXPECT_EQ(to_json(b).dump().find("secret-token"), std::string::npos);
}

TEST(Config, ExampleFileLoads) {
  const fs::path example = testing::fixtures().parent_path().parent_path() / "config" / "r2i.example.yaml";
  ASSERT_TRUE(fs::exists(example));
  const PipelineConfig c = load_config(example);
  EXPECT_FALSE(c.endpoints.empty());
  for (const auto& t : c.teachers) EXPECT_TRUE(c.endpoints.contains(t)) << t;
}

}  // namespace
}  // namespace r2i
