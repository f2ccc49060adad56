#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "r2i/corpus.hpp"
#include "r2i/image.hpp"
#include "r2i/model_client.hpp"
#include "r2i/prompts.hpp"
#include "r2i/scorer.hpp"

namespace r2i {

enum class GroundingVariant { bbox_in_image, bbox_in_question, no_bbox };

std::string_view to_string(GroundingVariant v);
GroundingVariant grounding_variant_from_string(std::string_view s);

struct GroundingStyle {
  std::string image_suffix = "Answer based on the region inside the red bounding box.";
  std::string question_suffix = "Answer based on the region {bbox} of the image.";  // {bbox} -> "[x1, y1, x2, y2]"
  Rgb color{255, 0, 0};
  double stroke_fraction = 0.004;
  int min_stroke = 3;
};

/// max(min_stroke, round(stroke_fraction * max(width, height))).
int stroke_width(int width, int height, const GroundingStyle& style = {});

/// The full image with the box outline painted inward from its border.
Image render_overlay(const Image& source, const PixelBox& box, const GroundingStyle& style = {});

struct Provenance {
  std::string image_id;
  std::string box_id;
  std::string qa_id;
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct AugmentedSample {
  std::string sample_id;
  std::filesystem::path image_path;  // rendered overlay, or the untouched source file
  std::string question;
  std::string answer;
  PixelBox bbox;
  GroundingVariant variant = GroundingVariant::bbox_in_image;
  Provenance provenance;
  friend bool operator==(const AugmentedSample&, const AugmentedSample&) = default;
};

nlohmann::json to_json(const AugmentedSample& s);
AugmentedSample augmented_sample_from_json(const nlohmann::json& j);

/// "{qa_id}-{variant}"
std::string make_sample_id(std::string_view qa_id, GroundingVariant variant);

/// Applies the grounding transform. Overlays are written as JPEG q95 to
/// `render_dir/{sample_id}.jpg`; the other variants point at the source file.
AugmentedSample ground_to_full(const ImageRecord& image, const PixelBox& bbox, std::string_view question,
                               std::string_view answer, GroundingVariant variant, std::string_view qa_id,
                               const std::filesystem::path& render_dir, const GroundingStyle& style = {});

/// The augmented question alone, without rendering anything.
std::string grounded_question(std::string_view question, const PixelBox& bbox, GroundingVariant variant,
                              const GroundingStyle& style = {});

struct TrialRecord {
  std::string response;
  ScoreRecord score;
};

struct DifficultyVerdict {
  std::string sample_id;
  int trials = 0;
  int correct = 0;
  bool kept = false;
  std::vector<TrialRecord> trial_records;
};

nlohmann::json to_json(const DifficultyVerdict& v);
DifficultyVerdict difficulty_verdict_from_json(const nlohmann::json& j);

/// kept <=> correct <= max_correct.
bool keep_sample(int correct, int max_correct);

struct DifficultyOptions {
  int trials = 4;
  int max_correct = 2;
  DecodeParams student_params{1.0, 1024, std::nullopt};
  DecodeParams judge_params{};
};

/// Queries the student `trials` times on (I', Q') with seeds 0..trials-1 and
/// scores each reply with the tiered scorer. Student transport failures
/// propagate so the caller can defer the sample.
DifficultyVerdict difficulty_filter(const AugmentedSample& sample, ModelClient& student, ModelClient* judge_client,
                                    const PromptTemplates& prompts, const DifficultyOptions& options = {});

struct DatasetManifest {
  std::size_t total = 0;
  std::map<std::string, std::size_t> per_variant;
  std::string config_checksum;
  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

nlohmann::json to_json(const DatasetManifest& m);

/// Writes `dataset.jsonl` sorted by sample_id, `images/{sample_id}{ext}` and
/// `manifest.json` under out_dir. Any previous images directory is replaced.
DatasetManifest emit_dataset(std::span<const AugmentedSample> samples, const std::filesystem::path& out_dir,
                             std::string_view config_checksum);

}  // namespace r2i
