#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "r2i/model_client.hpp"

namespace r2i {

enum class AnswerFormat { mcq, open };

std::string_view to_string(AnswerFormat f);
AnswerFormat answer_format_from_string(std::string_view s);

enum class ScoreTier { rule, judge };

std::string_view to_string(ScoreTier t);
ScoreTier score_tier_from_string(std::string_view s);

struct ScoreRecord {
  std::string extracted;
  int score = 0;
  ScoreTier tier = ScoreTier::rule;
  std::optional<std::string> judge_raw;
  friend bool operator==(const ScoreRecord&, const ScoreRecord&) = default;
};

nlohmann::json to_json(const ScoreRecord& r);
ScoreRecord score_record_from_json(const nlohmann::json& j);

/// MCQ gold as stored: "C. option text".
struct McqGold {
  char letter = 0;
  std::string text;
};

std::optional<McqGold> parse_mcq_gold(std::string_view gold);

/// mcq: an option letter when one is unambiguous (boxed, trailing "Answer: X",
/// lone letter or "X. text"), otherwise the last non-empty line.
/// open: boxed content if present, otherwise the last non-empty line.
std::string extract_answer(std::string_view response, AnswerFormat format);

/// Returns 1 on normalized exact match or numeric equality (1e-9 relative),
/// no decision otherwise. Never returns 0.
std::optional<int> rule_match(std::string_view extracted, std::string_view gold, AnswerFormat format);

/// Judge prompt rendering and verdict parsing. The verdict is the last
/// \boxed{Yes|No}, case-insensitive.
std::optional<int> parse_judge_verdict(std::string_view reply);

struct JudgeResult {
  int score = 0;
  std::string raw;
};

/// Asks the judge once; an unparsable reply gets a single retry with the
/// decode seed bumped, then JudgeError.
JudgeResult judge(std::string_view question, std::string_view gold, std::string_view response,
                  ModelClient& judge_client, std::string_view judge_template, const DecodeParams& params = {});

/// Rule tier first; the judge is consulted only when the rule tier has no
/// decision. A null judge client in that case raises JudgeError.
ScoreRecord score(std::string_view question, std::string_view gold, std::string_view response,
                  AnswerFormat format, ModelClient* judge_client, std::string_view judge_template,
                  const DecodeParams& params = {});

}  // namespace r2i
