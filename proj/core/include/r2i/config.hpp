#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "r2i/distill.hpp"
#include "r2i/model_client.hpp"
#include "r2i/prompts.hpp"
#include "r2i/review.hpp"

namespace r2i {

enum class ProposerKind { inventory, annotations };

/// Endpoint ids for each model role. Every role speaks the same chat contract.
struct RoleMap {
  std::string inventory = "inventory";
  std::string segmenter = "segmenter";
  std::string generator = "generator";
  std::string student = "student";
  std::string judge = "judge";
  std::string distractor = "distractor";
  std::string classifier = "classifier";
  std::vector<std::string> eval_models{"student"};
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::filesystem::path work_dir = "r2i-work";

  // corpus
  std::vector<std::filesystem::path> corpus_roots;
  int min_dim = 800;
  double bench_fraction = 0.2;

  // proposals
  ProposerKind proposer = ProposerKind::inventory;
  std::filesystem::path annotations;
  double tau = 0.1;
  std::size_t proposals_cap = 8;
  int min_box_side = 16;
  std::size_t max_labels = 16;

  // synthesis
  bool direct_synthesis = false;
  double scale_factor = 2.0;
  std::size_t questions_k = 3;
  std::vector<std::string> teachers{"teacher-a", "teacher-b"};
  int samples_per_teacher = 4;
  int consensus_threshold = 6;
  double teacher_temperature = 1.0;

  // distill
  GroundingVariant variant = GroundingVariant::bbox_in_image;
  GroundingStyle grounding;
  int trials = 4;
  int max_correct = 2;
  double student_temperature = 1.0;

  // bench
  double mcq_fraction = 0.735;
  PromotionRule promotion;
  std::map<std::string, std::string> review_tokens;  // bearer token -> annotator id

  // attention
  std::size_t m_star = 24;
  std::optional<std::size_t> k_star;
  double epsilon = 1e-6;

  RoleMap roles;
  std::map<std::string, ModelEndpoint> endpoints;
  PromptTemplates prompts = default_prompts();
  std::string judge_template_sha256 = default_judge_template_sha256();

  std::size_t concurrency = 4;
  bool cache = true;
};

PipelineConfig default_config();

/// Reads a YAML config. Relative paths resolve against the file's directory;
/// unknown keys and a judge template whose SHA-256 differs from the pinned
/// value are errors.
PipelineConfig load_config(const std::filesystem::path& path);

/// Effective configuration as canonical JSON (prompts included).
nlohmann::json to_json(const PipelineConfig& config);

/// SHA-256 of the canonical JSON form without filesystem locations and
/// concurrency settings; recorded in every output manifest.
std::string config_checksum(const PipelineConfig& config);

/// Throws PreconditionError on out-of-range values.
void validate(const PipelineConfig& config);

}  // namespace r2i
