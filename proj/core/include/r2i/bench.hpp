#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "r2i/corpus.hpp"
#include "r2i/model_client.hpp"
#include "r2i/prompts.hpp"
#include "r2i/scorer.hpp"
#include "r2i/synthesis.hpp"

namespace r2i {

enum class Dimension { counting, ocr, color, structure, material, identification };

inline constexpr std::array<Dimension, 6> kDimensions{Dimension::counting,  Dimension::ocr,
                                                      Dimension::color,     Dimension::structure,
                                                      Dimension::material,  Dimension::identification};

std::string_view to_string(Dimension d);
std::optional<Dimension> dimension_from_string(std::string_view s);

/// Column header used in reports ("Counting", "OCR", ...).
std::string_view display_name(Dimension d);

enum class ItemStatus { pending, promoted, rejected };

std::string_view to_string(ItemStatus s);
ItemStatus item_status_from_string(std::string_view s);

struct ReviewVerdict {
  std::string annotator_id;
  bool valid = false;
  bool difficult = false;
  bool correct = false;
  std::optional<std::string> comment;
  std::string timestamp;  // ISO-8601 UTC
  friend bool operator==(const ReviewVerdict&, const ReviewVerdict&) = default;
};

nlohmann::json to_json(const ReviewVerdict& v);
ReviewVerdict review_verdict_from_json(const nlohmann::json& j);

struct BenchItem {
  std::string item_id;
  std::filesystem::path full_image;
  std::filesystem::path crop_image;
  PixelBox bbox;
  std::string question;
  AnswerFormat format = AnswerFormat::open;
  std::vector<std::string> options;  // four entries for mcq, empty for open
  std::string answer;                // "C. text" for mcq, canonical string for open
  Dimension dimension = Dimension::identification;
  bool flagged = false;  // classifier never produced an in-taxonomy label
  std::vector<ReviewVerdict> review;
  ItemStatus status = ItemStatus::pending;
  std::string image_id;
  std::string qa_id;
  friend bool operator==(const BenchItem&, const BenchItem&) = default;
};

nlohmann::json to_json(const BenchItem& item);
BenchItem bench_item_from_json(const nlohmann::json& j);

std::vector<BenchItem> read_bench(const std::filesystem::path& path);
void write_bench(const std::filesystem::path& path, std::span<const BenchItem> items);

/// Seeded draw on item_id: mcq when it falls below mcq_fraction.
AnswerFormat select_format(std::string_view item_id, double mcq_fraction);

struct McqOptions {
  std::vector<std::string> options;
  char gold_letter = 'A';
  std::string gold() const;  // "C. text"
};

/// Fisher-Yates over [gold, d1, d2, d3] with an mt19937_64 seeded from item_id.
McqOptions shuffle_options(std::string_view item_id, std::string_view gold, std::span<const std::string> distractors);

/// Parses a JSON list of distractor strings and checks they are three, pairwise
/// distinct, and distinct from gold under scorer normalization.
std::optional<std::vector<std::string>> parse_distractors(std::string_view reply, std::string_view gold);

/// Prompts for distractors on the crop; one regeneration on a collision or
/// malformed reply, then nullopt (the caller falls back to open format).
std::optional<McqOptions> make_mcq(std::string_view item_id, std::string_view question, std::string_view answer,
                                   const std::string& crop_bytes, ModelClient& generator,
                                   const PromptTemplates& prompts);

/// Maps a classifier reply onto the taxonomy: exact label, or the single
/// label mentioned as a word.
std::optional<Dimension> parse_dimension(std::string_view reply);

/// One retry with the stricter instruction; nullopt marks the item for review.
std::optional<Dimension> classify_dimension(std::string_view question, const std::string& crop_bytes,
                                            ModelClient& classifier, const PromptTemplates& prompts);

struct BenchBuildOptions {
  double scale_factor = 2.0;
  double mcq_fraction = 0.735;
};

/// A pending item with both views written under `images_dir`: the full view is
/// the source file byte for byte, the crop is rendered at scale_factor (JPEG q95).
/// Format, options and dimension are filled by the caller.
BenchItem build_bench_item(const ManifestEntry& image, const RegionProposal& proposal, const SynthesizedQA& qa,
                           const std::filesystem::path& images_dir, const BenchBuildOptions& options = {});

enum class View { global, regional };

std::string_view to_string(View v);
View view_from_string(std::string_view s);

struct EvalRecord {
  std::string item_id;
  View view = View::global;
  std::string model_id;
  std::string response;
  int score = 0;
  ScoreTier tier = ScoreTier::rule;
  bool failed = false;
  std::string error;
  friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

nlohmann::json to_json(const EvalRecord& r);
EvalRecord eval_record_from_json(const nlohmann::json& j);

struct EvalOptions {
  DecodeParams model_params{};
  DecodeParams judge_params{};
  std::size_t concurrency = 4;
};

/// Both views of every promoted item with identical prompt text and decode
/// parameters. Records come back ordered by (item, view). Failures are
/// recorded, never scored.
std::vector<EvalRecord> run_dual_view(std::span<const BenchItem> items, ModelClient& model, ModelClient* judge_client,
                                      const PromptTemplates& prompts, const EvalOptions& options = {});

struct GapRow {
  Dimension dimension = Dimension::counting;
  std::size_t n = 0;  // items of this dimension
  std::size_t global_n = 0, regional_n = 0;
  std::size_t global_correct = 0, regional_correct = 0;
  double global_acc = 0, regional_acc = 0, gap = 0;  // percent
};

struct GapReport {
  std::string model_id;
  std::vector<GapRow> rows;  // taxonomy order; empty dimensions omitted
  std::vector<Dimension> omitted;
  double global_acc = 0, regional_acc = 0, gap = 0;  // sample-weighted, percent
  std::size_t failed = 0;
};

/// Per-dimension accuracy over non-failed records; overall values are
/// means of the rows weighted by their view-specific counts.
GapReport compute_gap(std::span<const EvalRecord> records, std::span<const BenchItem> items);

nlohmann::json to_json(const GapReport& r);

/// Gap as displayed in a two-decimal table: rounded regional minus rounded global.
double display_gap(double global_pct, double regional_pct);

/// Aligned text table with Global / Regional / Zooming Gap rows per model.
std::string format_gap_table(std::span<const GapReport> reports);

}  // namespace r2i
