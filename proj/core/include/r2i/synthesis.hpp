#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "r2i/corpus.hpp"
#include "r2i/image.hpp"
#include "r2i/model_client.hpp"
#include "r2i/prompts.hpp"

namespace r2i {

/// A rendered zoom-in crop. Everything downstream of cropping sees only this.
struct CropSpec {
  std::string box_id;
  std::filesystem::path crop_path;
  double scale_factor = 2.0;
  int crop_width = 0;
  int crop_height = 0;
  friend bool operator==(const CropSpec&, const CropSpec&) = default;
};

nlohmann::json to_json(const CropSpec& c);
CropSpec crop_spec_from_json(const nlohmann::json& j);

/// ceil(box dims * scale).
ImageSize scaled_size(const PixelBox& box, double scale);

/// Crop then bilinear resize to scaled_size. Scale 1 returns the exact source pixels.
Image render_crop(const Image& source, const PixelBox& box, double scale);

/// Renders the crop of `bbox` and writes it losslessly to `out_dir/{box_id}.png`.
CropSpec crop_region(const ImageRecord& image, const PixelBox& bbox, double scale,
                     const std::filesystem::path& out_dir, const std::string& box_id);

/// Parses the generator's JSON list of {"question": ...}; keeps at most k
/// non-empty questions in order, skipping case/whitespace repeats. Throws DataError when no JSON list parses.
std::vector<std::string> parse_question_list(std::string_view response, std::size_t k);

struct QuestionOutcome {
  std::vector<std::string> questions;
  std::vector<std::string> raw_responses;
  bool failed = false;
  std::string error;
};

/// One generator call on the crop, one JSON re-prompt on a malformed reply,
/// then the crop is marked failed.
QuestionOutcome generate_questions(const CropSpec& crop, ModelClient& generator, const PromptTemplates& prompts,
                                   std::size_t k, const DecodeParams& params = {});

struct Teacher {
  std::string teacher_id;
  std::shared_ptr<ModelClient> client;
};

struct AnswerSample {
  std::string teacher_id;
  int sample_index = 0;
  std::string raw_text;
  std::string normalized_text;
  friend bool operator==(const AnswerSample&, const AnswerSample&) = default;
};

/// Queries every teacher `samples_per_teacher` times on the crop. Sample i
/// carries decode seed base_seed + i so repeated samples stay distinct
/// requests. Any sample that still fails after client retries propagates.
std::vector<AnswerSample> sample_answers(const CropSpec& crop, std::string_view question,
                                         std::span<const Teacher> teachers, int samples_per_teacher,
                                         const PromptTemplates& prompts, DecodeParams params = {});

struct Consensus {
  bool accepted = false;
  std::optional<std::string> label;
  int majority_count = 0;
  int total = 0;
  friend bool operator==(const Consensus&, const Consensus&) = default;
};

/// Groups samples by normalize_answer and accepts iff the largest group has
/// more than `threshold` members. Equal-size groups resolve to the smallest
/// normalized key; the label is the group's most frequent raw form, with ties
/// going to the lexicographically smallest, so the result ignores sample order.
Consensus consensus(std::span<const AnswerSample> samples, int threshold);
Consensus consensus(std::span<const std::string> raw_answers, int threshold);

struct SynthesizedQA {
  std::string qa_id;
  std::string box_id;
  std::string question;
  std::vector<AnswerSample> answers;
  Consensus consensus;
  friend bool operator==(const SynthesizedQA&, const SynthesizedQA&) = default;
};

nlohmann::json to_json(const SynthesizedQA& qa);
SynthesizedQA synthesized_qa_from_json(const nlohmann::json& j);

/// "{box_id}-q{index}"
std::string make_qa_id(std::string_view box_id, std::size_t index);

}  // namespace r2i
