#include "r2i/distill.hpp"

#include <algorithm>
#include <cmath>

#include "r2i/error.hpp"
#include "r2i/io.hpp"
#include "r2i/text.hpp"

namespace r2i {

std::string_view to_string(GroundingVariant v) {
  switch (v) {
    case GroundingVariant::bbox_in_image: return "bbox_in_image";
    case GroundingVariant::bbox_in_question: return "bbox_in_question";
    case GroundingVariant::no_bbox: break;
  }
  return "no_bbox";
}

GroundingVariant grounding_variant_from_string(std::string_view s) {
  if (s == "bbox_in_image") return GroundingVariant::bbox_in_image;
  if (s == "bbox_in_question") return GroundingVariant::bbox_in_question;
  if (s == "no_bbox") return GroundingVariant::no_bbox;
  throw DataError("unknown grounding variant: " + std::string(s));
}

int stroke_width(int width, int height, const GroundingStyle& style) {
  const double w = std::floor(style.stroke_fraction * std::max(width, height) + 0.5);
  return std::max(style.min_stroke, static_cast<int>(w));
}

Image render_overlay(const Image& source, const PixelBox& box, const GroundingStyle& style) {
  Image out = source;
  stroke_rect(out, box, stroke_width(source.width(), source.height(), style), style.color);
  return out;
}

json to_json(const AugmentedSample& s) {
  return {{"sample_id", s.sample_id},
          {"image_path", s.image_path.string()},
          {"question", s.question},
          {"answer", s.answer},
          {"bbox", s.bbox},
          {"variant", to_string(s.variant)},
          {"provenance",
           {{"image_id", s.provenance.image_id}, {"box_id", s.provenance.box_id}, {"qa_id", s.provenance.qa_id}}}};
}

AugmentedSample augmented_sample_from_json(const json& j) {
  AugmentedSample s;
  s.sample_id = j.at("sample_id").get<std::string>();
  s.image_path = j.at("image_path").get<std::string>();
  s.question = j.at("question").get<std::string>();
  s.answer = j.at("answer").get<std::string>();
  s.bbox = j.at("bbox").get<PixelBox>();
  s.variant = grounding_variant_from_string(j.at("variant").get<std::string>());
  const auto& p = j.at("provenance");
  s.provenance = {p.at("image_id").get<std::string>(), p.at("box_id").get<std::string>(),
                  p.at("qa_id").get<std::string>()};
  return s;
}

std::string make_sample_id(std::string_view qa_id, GroundingVariant variant) {
  return std::string(qa_id) + "-" + std::string(to_string(variant));
}

std::string grounded_question(std::string_view question, const PixelBox& bbox, GroundingVariant variant,
                              const GroundingStyle& style) {
  switch (variant) {
    case GroundingVariant::bbox_in_image: return std::string(question) + " " + style.image_suffix;
    case GroundingVariant::bbox_in_question:
      return std::string(question) + " " + substitute(style.question_suffix, {{"bbox", bbox.to_string()}});
    case GroundingVariant::no_bbox: break;
  }
  return std::string(question);
}

AugmentedSample ground_to_full(const ImageRecord& image, const PixelBox& bbox, std::string_view question,
                               std::string_view answer, GroundingVariant variant, std::string_view qa_id,
                               const fs::path& render_dir, const GroundingStyle& style) {
  if (!bbox.valid_within(image.width, image.height)) {
    throw PreconditionError("box " + bbox.to_string() + " not valid within " + image.image_id);
  }
  if (trim(question).empty()) throw PreconditionError("empty question");
  AugmentedSample s;
  s.sample_id = make_sample_id(qa_id, variant);
  s.question = grounded_question(question, bbox, variant, style);
  s.answer = std::string(answer);
  s.bbox = bbox;
  s.variant = variant;
  // The box id is the qa id minus its "-q<n>" suffix.
  const std::string qa(qa_id);
  s.provenance = {image.image_id, qa.substr(0, qa.rfind("-q")), qa};
  if (variant == GroundingVariant::bbox_in_image) {
    s.image_path = render_dir / (s.sample_id + ".jpg");
    write_file_atomic(s.image_path, encode_jpeg(render_overlay(read_image(image.path), bbox, style)));
  } else {
    s.image_path = image.path;
  }
  return s;
}

json to_json(const DifficultyVerdict& v) {
  json trials = json::array();
  for (const auto& t : v.trial_records) trials.push_back({{"response", t.response}, {"score", to_json(t.score)}});
  return {{"sample_id", v.sample_id}, {"trials", v.trials},          {"correct", v.correct},
          {"kept", v.kept},           {"trial_records", trials}};
}

DifficultyVerdict difficulty_verdict_from_json(const json& j) {
  DifficultyVerdict v;
  v.sample_id = j.at("sample_id").get<std::string>();
  v.trials = j.at("trials").get<int>();
  v.correct = j.at("correct").get<int>();
  v.kept = j.at("kept").get<bool>();
  for (const auto& t : j.value("trial_records", json::array())) {
    v.trial_records.push_back({t.at("response").get<std::string>(), score_record_from_json(t.at("score"))});
  }
  return v;
}

bool keep_sample(int correct, int max_correct) { return correct <= max_correct; }

DifficultyVerdict difficulty_filter(const AugmentedSample& sample, ModelClient& student, ModelClient* judge_client,
                                    const PromptTemplates& prompts, const DifficultyOptions& options) {
  if (options.trials < 1) throw PreconditionError("trials must be >= 1");
  if (options.max_correct < 0 || options.max_correct >= options.trials) {
    throw PreconditionError("max_correct must be in [0, trials)");
  }
  DifficultyVerdict v{sample.sample_id, options.trials, 0, false, {}};
  ChatRequest req{render_answer_prompt(prompts, sample.question), read_file(sample.image_path),
                  options.student_params};
  const std::int64_t base_seed = options.student_params.seed.value_or(0);
  for (int i = 0; i < options.trials; ++i) {
    req.params.seed = base_seed + i;
    std::string response = student.chat(req);
    ScoreRecord rec = score(sample.question, sample.answer, response, AnswerFormat::open, judge_client,
                            prompts.judge, options.judge_params);
    v.correct += rec.score;
    v.trial_records.push_back({std::move(response), std::move(rec)});
  }
  v.kept = keep_sample(v.correct, options.max_correct);
  return v;
}

json to_json(const DatasetManifest& m) {
  return {{"total", m.total}, {"per_variant", m.per_variant}, {"config_checksum", m.config_checksum}};
}

DatasetManifest emit_dataset(std::span<const AugmentedSample> samples, const fs::path& out_dir,
                             std::string_view config_checksum) {
  std::vector<const AugmentedSample*> order;
  order.reserve(samples.size());
  for (const auto& s : samples) order.push_back(&s);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->sample_id < b->sample_id; });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (order[i]->sample_id == order[i - 1]->sample_id) throw DataError("duplicate sample_id " + order[i]->sample_id);
  }

  const fs::path images = out_dir / "images";
  fs::remove_all(images);
  fs::create_directories(images);

  DatasetManifest m;
  m.config_checksum = std::string(config_checksum);
  for (auto v : {GroundingVariant::bbox_in_image, GroundingVariant::bbox_in_question, GroundingVariant::no_bbox}) {
    m.per_variant[std::string(to_string(v))] = 0;
  }
  std::vector<json> rows;
  rows.reserve(order.size());
  for (const auto* s : order) {
    std::string ext = s->image_path.extension().string();
    if (ext.empty()) ext = ".jpg";
    const std::string rel = "images/" + s->sample_id + ext;
    copy_file_bytes(s->image_path, out_dir / rel);
    json row = to_json(*s);
    row.erase("image_path");
    row["image"] = rel;
    rows.push_back(std::move(row));
    ++m.per_variant[std::string(to_string(s->variant))];
  }
  m.total = rows.size();
  write_jsonl(out_dir / "dataset.jsonl", rows);
  write_file_atomic(out_dir / "manifest.json", to_json(m).dump(2) + "\n");
  return m;
}

}  // namespace r2i
