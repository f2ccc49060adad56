#include "r2i/prompts.hpp"

#include <r2i/resources.hpp>

#include "r2i/error.hpp"
#include "r2i/hash.hpp"
#include "r2i/text.hpp"

namespace r2i {

PromptTemplates default_prompts() {
  PromptTemplates p;
  p.judge = std::string(resources::kJudgePrompt);
  p.question = std::string(resources::kQuestionPrompt);
  p.question_examples = std::string(resources::kQuestionExamples);
  p.answer_instruction = "Answer the question using a single word or phrase.";
  p.mcq_instruction = "Answer with the option's letter from the given choices directly.";
  p.json_retry = "Your previous reply could not be parsed. Reply with the JSON list only, no other text.";
  p.inventory =
      "List every distinct object that is clearly visible in this image, including small ones. "
      "Reply with a JSON list of short object names, for example [\"bottle\", \"street sign\"].";
  p.segment =
      "Object: {label}\n"
      "Return a bounding box for every visible instance of this object as a JSON list of "
      "{\"bbox\": [x1, y1, x2, y2]} entries in pixel coordinates of this image.";
  p.distractors =
      "Question: {question}\n"
      "Correct answer: {answer}\n"
      "Looking at the image, write three plausible but wrong answers to the question. Each must "
      "clearly differ from the correct answer and from each other. Reply with a JSON list of three strings.";
  p.classify =
      "Question: {question}\n"
      "Which fine-grained perception skill does this question test? Choose exactly one of: "
      "counting, ocr, color, structure, material, identification. Reply with the label only.";
  p.classify_retry = "Reply with exactly one of the six labels and nothing else.";
  return p;
}

std::string default_judge_template_sha256() { return sha256_hex(resources::kJudgePrompt); }

std::string render_judge_prompt(std::string_view tmpl, std::string_view question, std::string_view gt,
                                std::string_view response) {
  return substitute(tmpl, {{"question", std::string(question)}, {"gt", std::string(gt)},
                           {"response", std::string(response)}});
}

std::string render_question_prompt(const PromptTemplates& prompts) {
  return substitute(prompts.question, {{"examples_str", prompts.question_examples}});
}

std::string render_answer_prompt(const PromptTemplates& prompts, std::string_view question) {
  return std::string(question) + "\n" + prompts.answer_instruction;
}

char option_letter(std::size_t index) {
  if (index >= 26) throw PreconditionError("too many options");
  return static_cast<char>('A' + index);
}

std::string render_eval_prompt(const PromptTemplates& prompts, std::string_view question,
                               std::span<const std::string> options) {
  if (options.empty()) return render_answer_prompt(prompts, question);
  std::string out(question);
  for (std::size_t i = 0; i < options.size(); ++i) {
    out += "\n";
    out.push_back(option_letter(i));
    out += ". " + options[i];
  }
  out += "\n" + prompts.mcq_instruction;
  return out;
}

std::string render_segment_prompt(const PromptTemplates& prompts, std::string_view label) {
  return substitute(prompts.segment, {{"label", std::string(label)}});
}

std::string render_distractor_prompt(const PromptTemplates& prompts, std::string_view question,
                                     std::string_view answer) {
  return substitute(prompts.distractors, {{"question", std::string(question)}, {"answer", std::string(answer)}});
}

std::string render_classify_prompt(const PromptTemplates& prompts, std::string_view question) {
  return substitute(prompts.classify, {{"question", std::string(question)}});
}

std::string with_json_retry(const PromptTemplates& prompts, std::string_view prompt) {
  return std::string(prompt) + "\n\n" + prompts.json_retry;
}

}  // namespace r2i
