#include "r2i/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "r2i/error.hpp"
#include "r2i/io.hpp"
#include "r2i/text.hpp"

namespace r2i {

json to_json(const CropSpec& c) {
  return {{"box_id", c.box_id},
          {"crop_path", c.crop_path.string()},
          {"scale_factor", c.scale_factor},
          {"crop_width", c.crop_width},
          {"crop_height", c.crop_height}};
}

CropSpec crop_spec_from_json(const json& j) {
  return {j.at("box_id").get<std::string>(), j.at("crop_path").get<std::string>(), j.at("scale_factor").get<double>(),
          j.at("crop_width").get<int>(), j.at("crop_height").get<int>()};
}

ImageSize scaled_size(const PixelBox& box, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw PreconditionError("scale_factor must be positive");
  auto up = [scale](int n) {
    const double v = static_cast<double>(n) * scale;
    // Absorb representation error so 10 * 1.1 stays 11.
    return std::max(1, static_cast<int>(std::ceil(v - 1e-9 * std::max(1.0, v))));
  };
  return {up(box.width()), up(box.height())};
}

Image render_crop(const Image& source, const PixelBox& box, double scale) {
  Image region = crop(source, box);
  const ImageSize size = scaled_size(box, scale);
  if (size.width == region.width() && size.height == region.height()) return region;
  return resize_bilinear(region, size.width, size.height);
}

CropSpec crop_region(const ImageRecord& image, const PixelBox& bbox, double scale, const fs::path& out_dir,
                     const std::string& box_id) {
  if (!bbox.valid_within(image.width, image.height)) {
    throw PreconditionError("box " + bbox.to_string() + " not valid within " + image.image_id);
  }
  const Image source = read_image(image.path);
  if (source.width() != image.width || source.height() != image.height) {
    throw DataError("image " + image.image_id + " changed size since ingest");
  }
  const Image out = render_crop(source, bbox, scale);
  CropSpec spec{box_id, out_dir / (box_id + ".png"), scale, out.width(), out.height()};
  write_file_atomic(spec.crop_path, encode_png(out));
  return spec;
}

std::vector<std::string> parse_question_list(std::string_view response, std::size_t k) {
  const json arr = json::parse(extract_json_list(response), nullptr, false);
  if (arr.is_discarded() || !arr.is_array()) throw DataError("question list is not valid JSON");
  std::vector<std::string> out;
  for (const auto& item : arr) {
    if (out.size() >= k) break;
    std::string q;
    if (item.is_object() && item.contains("question") && item["question"].is_string()) {
      q = item["question"].get<std::string>();
    } else if (item.is_string()) {
      q = item.get<std::string>();
    }
    q = trim(q);
    if (q.empty()) continue;
    auto key = [](std::string_view s) { return to_lower_ascii(collapse_whitespace(s)); };
    const bool repeat = std::any_of(out.begin(), out.end(), [&](const std::string& o) { return key(o) == key(q); });
    if (!repeat) out.push_back(std::move(q));
  }
  return out;
}

QuestionOutcome generate_questions(const CropSpec& crop, ModelClient& generator, const PromptTemplates& prompts,
                                   std::size_t k, const DecodeParams& params) {
  if (k < 1) throw PreconditionError("k must be >= 1");
  QuestionOutcome out;
  const std::string prompt = render_question_prompt(prompts);
  ChatRequest req{prompt, read_file(crop.crop_path), params};
  for (int attempt = 0; attempt < 2; ++attempt) {
    if (attempt == 1) req.prompt = with_json_retry(prompts, prompt);
    out.raw_responses.push_back(generator.chat(req));
    try {
      out.questions = parse_question_list(out.raw_responses.back(), k);
      return out;
    } catch (const DataError& e) {
      out.error = e.what();
    }
  }
  out.failed = true;
  return out;
}

std::vector<AnswerSample> sample_answers(const CropSpec& crop, std::string_view question,
                                         std::span<const Teacher> teachers, int samples_per_teacher,
                                         const PromptTemplates& prompts, DecodeParams params) {
  if (teachers.empty()) throw PreconditionError("at least one teacher required");
  if (samples_per_teacher < 1) throw PreconditionError("samples_per_teacher must be >= 1");
  const std::int64_t base_seed = params.seed.value_or(0);
  ChatRequest req{render_answer_prompt(prompts, question), read_file(crop.crop_path), params};
  std::vector<AnswerSample> out;
  out.reserve(teachers.size() * static_cast<std::size_t>(samples_per_teacher));
  for (const auto& t : teachers) {
    for (int i = 0; i < samples_per_teacher; ++i) {
      req.params.seed = base_seed + i;
      std::string raw = t.client->chat(req);
      std::string norm = normalize_answer(raw);
      out.push_back({t.teacher_id, i, std::move(raw), std::move(norm)});
    }
  }
  return out;
}

Consensus consensus(std::span<const AnswerSample> samples, int threshold) {
  const int total = static_cast<int>(samples.size());
  if (total == 0) throw PreconditionError("consensus over zero samples");
  if (threshold < 0 || threshold >= total) throw PreconditionError("threshold must be in [0, total)");

  std::map<std::string, std::map<std::string, int>> groups;
  for (const auto& s : samples) ++groups[s.normalized_text][s.raw_text];

  const std::map<std::string, int>* best = nullptr;
  int best_count = 0;
  for (const auto& [key, forms] : groups) {
    int n = 0;
    for (const auto& [raw, c] : forms) n += c;
    if (n > best_count) {  // strict: ties keep the smaller key
      best = &forms;
      best_count = n;
    }
  }

  Consensus c{best_count > threshold, std::nullopt, best_count, total};
  if (c.accepted) {
    int top = 0;
    for (const auto& [raw, n] : *best) {
      if (n > top) {
        top = n;
        c.label = raw;
      }
    }
  }
  return c;
}

Consensus consensus(std::span<const std::string> raw_answers, int threshold) {
  std::vector<AnswerSample> samples;
  samples.reserve(raw_answers.size());
  for (std::size_t i = 0; i < raw_answers.size(); ++i) {
    samples.push_back({"", static_cast<int>(i), raw_answers[i], normalize_answer(raw_answers[i])});
  }
  return consensus(samples, threshold);
}

json to_json(const SynthesizedQA& qa) {
  json answers = json::array();
  for (const auto& a : qa.answers) {
    answers.push_back({{"teacher_id", a.teacher_id},
                       {"sample_index", a.sample_index},
                       {"raw_text", a.raw_text},
                       {"normalized_text", a.normalized_text}});
  }
  json cons = {{"accepted", qa.consensus.accepted},
               {"majority_count", qa.consensus.majority_count},
               {"total", qa.consensus.total}};
  cons["label"] = qa.consensus.label ? json(*qa.consensus.label) : json(nullptr);
  return {{"qa_id", qa.qa_id}, {"box_id", qa.box_id}, {"question", qa.question}, {"answers", answers},
          {"consensus", cons}};
}

SynthesizedQA synthesized_qa_from_json(const json& j) {
  SynthesizedQA qa;
  qa.qa_id = j.at("qa_id").get<std::string>();
  qa.box_id = j.at("box_id").get<std::string>();
  qa.question = j.at("question").get<std::string>();
  for (const auto& a : j.at("answers")) {
    qa.answers.push_back({a.at("teacher_id").get<std::string>(), a.at("sample_index").get<int>(),
                          a.at("raw_text").get<std::string>(), a.at("normalized_text").get<std::string>()});
  }
  const auto& c = j.at("consensus");
  qa.consensus.accepted = c.at("accepted").get<bool>();
  qa.consensus.majority_count = c.at("majority_count").get<int>();
  qa.consensus.total = c.at("total").get<int>();
  if (c.contains("label") && !c["label"].is_null()) qa.consensus.label = c["label"].get<std::string>();
  return qa;
}

std::string make_qa_id(std::string_view box_id, std::size_t index) {
  return std::string(box_id) + "-q" + std::to_string(index);
}

}  // namespace r2i
