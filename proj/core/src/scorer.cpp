#include "r2i/scorer.hpp"

#include <cmath>
#include <regex>

#include "r2i/error.hpp"
#include "r2i/io.hpp"
#include "r2i/prompts.hpp"
#include "r2i/text.hpp"

namespace r2i {

std::string_view to_string(AnswerFormat f) { return f == AnswerFormat::mcq ? "mcq" : "open"; }

AnswerFormat answer_format_from_string(std::string_view s) {
  if (s == "mcq") return AnswerFormat::mcq;
  if (s == "open") return AnswerFormat::open;
  throw DataError("unknown answer format: " + std::string(s));
}

std::string_view to_string(ScoreTier t) { return t == ScoreTier::rule ? "rule" : "judge"; }

ScoreTier score_tier_from_string(std::string_view s) {
  if (s == "rule") return ScoreTier::rule;
  if (s == "judge") return ScoreTier::judge;
  throw DataError("unknown score tier: " + std::string(s));
}

json to_json(const ScoreRecord& r) {
  json j = {{"extracted", r.extracted}, {"score", r.score}, {"tier", to_string(r.tier)}};
  j["judge_raw"] = r.judge_raw ? json(*r.judge_raw) : json(nullptr);
  return j;
}

ScoreRecord score_record_from_json(const json& j) {
  ScoreRecord r;
  r.extracted = j.at("extracted").get<std::string>();
  r.score = j.at("score").get<int>();
  r.tier = score_tier_from_string(j.at("tier").get<std::string>());
  if (j.contains("judge_raw") && !j["judge_raw"].is_null()) r.judge_raw = j["judge_raw"].get<std::string>();
  return r;
}

std::optional<McqGold> parse_mcq_gold(std::string_view gold) {
  static const std::regex re(R"(^\s*([A-Z])\.\s*(.*?)\s*$)");
  const std::string g(gold);
  std::smatch m;
  if (!std::regex_match(g, m, re)) return std::nullopt;
  return McqGold{m[1].str()[0], m[2].str()};
}

namespace {

std::optional<char> letter_of(std::string_view text) {
  static const std::regex lone(R"(^\(?([A-Za-z])\)?[.):]?$)");
  static const std::regex lead(R"(^\(?([A-Z])[.)]\s+\S.*$)");
  const std::string t = trim(text);
  std::smatch m;
  if (std::regex_match(t, m, lone) || std::regex_match(t, m, lead)) {
    return static_cast<char>(std::toupper(static_cast<unsigned char>(m[1].str()[0])));
  }
  return std::nullopt;
}

std::optional<char> trailing_answer_letter(std::string_view line) {
  static const std::regex re(R"((?:^|\s)answer\s*(?:is)?\s*:?\s*\(?([A-Za-z])\)?\.?\s*$)", std::regex::icase);
  const std::string t = trim(line);
  std::smatch m;
  if (std::regex_search(t, m, re)) return static_cast<char>(std::toupper(static_cast<unsigned char>(m[1].str()[0])));
  return std::nullopt;
}

bool numbers_equal(double a, double b) {
  if (a == b) return true;
  return std::fabs(a - b) <= 1e-9 * std::max(std::fabs(a), std::fabs(b));
}

std::optional<int> open_match(std::string_view extracted, std::string_view gold) {
  const std::string a = normalize_for_match(extracted);
  const std::string b = normalize_for_match(gold);
  if (a.empty() || b.empty()) return std::nullopt;
  if (a == b) return 1;
  const auto x = parse_number(extracted);
  const auto y = parse_number(gold);
  if (x && y && numbers_equal(*x, *y)) return 1;
  return std::nullopt;
}

}  // namespace

std::string extract_answer(std::string_view response, AnswerFormat format) {
  const auto boxed = last_boxed(response);
  if (format == AnswerFormat::open) return boxed ? trim(*boxed) : last_nonempty_line(response);

  if (boxed) {
    if (auto l = letter_of(*boxed)) return std::string(1, *l);
    return trim(*boxed);
  }
  const std::string tail = last_nonempty_line(response);
  if (auto l = trailing_answer_letter(tail)) return std::string(1, *l);
  if (auto l = letter_of(tail)) return std::string(1, *l);
  return tail;
}

std::optional<int> rule_match(std::string_view extracted, std::string_view gold, AnswerFormat format) {
  if (format == AnswerFormat::open) return open_match(extracted, gold);
  const auto g = parse_mcq_gold(gold);
  if (!g) return open_match(extracted, gold);
  if (const auto l = letter_of(extracted); l && *l == g->letter) return 1;
  if (open_match(extracted, g->text)) return 1;
  return open_match(extracted, gold);
}

std::optional<int> parse_judge_verdict(std::string_view reply) {
  const auto boxed = last_boxed(reply);
  if (!boxed) return std::nullopt;
  const std::string v = to_lower_ascii(trim(*boxed));
  if (v == "yes") return 1;
  if (v == "no") return 0;
  return std::nullopt;
}

JudgeResult judge(std::string_view question, std::string_view gold, std::string_view response,
                  ModelClient& judge_client, std::string_view judge_template, const DecodeParams& params) {
  ChatRequest req{render_judge_prompt(judge_template, question, gold, response), {}, params};
  std::string raw = judge_client.chat(req);
  if (auto v = parse_judge_verdict(raw)) return {*v, std::move(raw)};
  req.params.seed = params.seed.value_or(0) + 1;
  raw = judge_client.chat(req);
  if (auto v = parse_judge_verdict(raw)) return {*v, std::move(raw)};
  throw JudgeError("judge reply carries no \\boxed{Yes|No} verdict after retry: " + raw.substr(0, 200));
}

ScoreRecord score(std::string_view question, std::string_view gold, std::string_view response, AnswerFormat format,
                  ModelClient* judge_client, std::string_view judge_template, const DecodeParams& params) {
  ScoreRecord rec;
  rec.extracted = extract_answer(response, format);
  if (rule_match(rec.extracted, gold, format)) {
    rec.score = 1;
    rec.tier = ScoreTier::rule;
    return rec;
  }
  if (judge_client == nullptr) throw JudgeError("rule tier undecided and no judge configured");
  auto verdict = judge(question, gold, response, *judge_client, judge_template, params);
  rec.score = verdict.score;
  rec.tier = ScoreTier::judge;
  rec.judge_raw = std::move(verdict.raw);
  return rec;
}

}  // namespace r2i
