#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace r2i {

/// Every prompt the pipeline sends. Defaults are compiled in from
/// core/resources; each field can be overridden from the config file.
struct PromptTemplates {
  std::string judge;              // placeholders: {question} {gt} {response}
  std::string question;           // placeholder: {examples_str}
  std::string question_examples;  // substituted verbatim into {examples_str}
  std::string answer_instruction;
  std::string mcq_instruction;
  std::string json_retry;
  std::string inventory;
  std::string segment;     // placeholder: {label}
  std::string distractors; // placeholders: {question} {answer}
  std::string classify;    // placeholder: {question}
  std::string classify_retry;
};

PromptTemplates default_prompts();

/// SHA-256 of the compiled-in judge template.
std::string default_judge_template_sha256();

std::string render_judge_prompt(std::string_view tmpl, std::string_view question, std::string_view gt,
                                std::string_view response);
std::string render_question_prompt(const PromptTemplates& prompts);
std::string render_answer_prompt(const PromptTemplates& prompts, std::string_view question);

/// Open questions get the short-answer instruction; MCQ prompts list options as "A. text".
std::string render_eval_prompt(const PromptTemplates& prompts, std::string_view question,
                               std::span<const std::string> options);
std::string render_segment_prompt(const PromptTemplates& prompts, std::string_view label);
std::string render_distractor_prompt(const PromptTemplates& prompts, std::string_view question,
                                     std::string_view answer);
std::string render_classify_prompt(const PromptTemplates& prompts, std::string_view question);

/// Appends the JSON re-prompt note after a malformed reply.
std::string with_json_retry(const PromptTemplates& prompts, std::string_view prompt);

/// Option letter for index 0..25.
char option_letter(std::size_t index);

}  // namespace r2i
