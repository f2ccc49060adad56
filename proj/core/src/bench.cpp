#include "r2i/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <regex>
#include <set>

#include "r2i/error.hpp"
#include "r2i/hash.hpp"
#include "r2i/image.hpp"
#include "r2i/io.hpp"
#include "r2i/parallel.hpp"
#include "r2i/text.hpp"

namespace r2i {

std::string_view to_string(Dimension d) {
  switch (d) {
    case Dimension::counting: return "counting";
    case Dimension::ocr: return "ocr";
    case Dimension::color: return "color";
    case Dimension::structure: return "structure";
    case Dimension::material: return "material";
    case Dimension::identification: break;
  }
  return "identification";
}

std::optional<Dimension> dimension_from_string(std::string_view s) {
  for (auto d : kDimensions) {
    if (to_string(d) == s) return d;
  }
  return std::nullopt;
}

std::string_view display_name(Dimension d) {
  switch (d) {
    case Dimension::counting: return "Counting";
    case Dimension::ocr: return "OCR";
    case Dimension::color: return "Color";
    case Dimension::structure: return "Structure";
    case Dimension::material: return "Material";
    case Dimension::identification: break;
  }
  return "Identification";
}

std::string_view to_string(ItemStatus s) {
  switch (s) {
    case ItemStatus::pending: return "pending";
    case ItemStatus::promoted: return "promoted";
    case ItemStatus::rejected: break;
  }
  return "rejected";
}

ItemStatus item_status_from_string(std::string_view s) {
  if (s == "pending") return ItemStatus::pending;
  if (s == "promoted") return ItemStatus::promoted;
  if (s == "rejected") return ItemStatus::rejected;
  throw DataError("unknown item status: " + std::string(s));
}

json to_json(const ReviewVerdict& v) {
  json j = {{"annotator_id", v.annotator_id}, {"valid", v.valid},         {"difficult", v.difficult},
            {"correct", v.correct},           {"timestamp", v.timestamp}};
  j["comment"] = v.comment ? json(*v.comment) : json(nullptr);
  return j;
}

ReviewVerdict review_verdict_from_json(const json& j) {
  ReviewVerdict v;
  v.annotator_id = j.at("annotator_id").get<std::string>();
  v.valid = j.at("valid").get<bool>();
  v.difficult = j.at("difficult").get<bool>();
  v.correct = j.at("correct").get<bool>();
  if (j.contains("comment") && !j["comment"].is_null()) v.comment = j["comment"].get<std::string>();
  v.timestamp = j.value("timestamp", "");
  return v;
}

json to_json(const BenchItem& item) {
  json review = json::array();
  for (const auto& v : item.review) review.push_back(to_json(v));
  return {{"item_id", item.item_id},
          {"full_image", item.full_image.string()},
          {"crop_image", item.crop_image.string()},
          {"bbox", item.bbox},
          {"question", item.question},
          {"format", to_string(item.format)},
          {"options", item.options},
          {"answer", item.answer},
          {"dimension", to_string(item.dimension)},
          {"flagged", item.flagged},
          {"review", review},
          {"status", to_string(item.status)},
          {"image_id", item.image_id},
          {"qa_id", item.qa_id}};
}

BenchItem bench_item_from_json(const json& j) {
  BenchItem item;
  item.item_id = j.at("item_id").get<std::string>();
  item.full_image = j.at("full_image").get<std::string>();
  item.crop_image = j.at("crop_image").get<std::string>();
  item.bbox = j.at("bbox").get<PixelBox>();
  item.question = j.at("question").get<std::string>();
  item.format = answer_format_from_string(j.at("format").get<std::string>());
  item.options = j.value("options", std::vector<std::string>{});
  item.answer = j.at("answer").get<std::string>();
  const auto dim = dimension_from_string(j.at("dimension").get<std::string>());
  if (!dim) throw DataError("unknown dimension in bench item " + item.item_id);
  item.dimension = *dim;
  item.flagged = j.value("flagged", false);
  for (const auto& v : j.value("review", json::array())) item.review.push_back(review_verdict_from_json(v));
  item.status = item_status_from_string(j.value("status", "pending"));
  item.image_id = j.value("image_id", "");
  item.qa_id = j.value("qa_id", "");
  if (item.format == AnswerFormat::mcq && item.options.size() != 4) {
    throw DataError("mcq item " + item.item_id + " must carry 4 options");
  }
  return item;
}

std::vector<BenchItem> read_bench(const fs::path& path) {
  const fs::path base = path.parent_path();
  std::vector<BenchItem> items;
  for (const auto& row : read_jsonl(path)) {
    BenchItem item = bench_item_from_json(row);
    if (item.full_image.is_relative()) item.full_image = base / item.full_image;
    if (item.crop_image.is_relative()) item.crop_image = base / item.crop_image;
    items.push_back(std::move(item));
  }
  return items;
}

void write_bench(const fs::path& path, std::span<const BenchItem> items) {
  // Image paths under the bench directory are stored relative to it.
  const fs::path base = fs::absolute(path).parent_path().lexically_normal();
  auto portable = [&](const fs::path& p) {
    const fs::path rel = fs::absolute(p).lexically_normal().lexically_relative(base);
    return !rel.empty() && *rel.begin() != ".." ? rel : p;
  };
  std::vector<json> rows;
  rows.reserve(items.size());
  for (const auto& i : items) {
    BenchItem copy = i;
    copy.full_image = portable(i.full_image);
    copy.crop_image = portable(i.crop_image);
    rows.push_back(to_json(copy));
  }
  write_jsonl(path, rows);
}

AnswerFormat select_format(std::string_view item_id, double mcq_fraction) {
  const double u = to_unit_interval(sha256_u64("format:" + std::string(item_id)));
  return u < mcq_fraction ? AnswerFormat::mcq : AnswerFormat::open;
}

std::string McqOptions::gold() const {
  const auto idx = static_cast<std::size_t>(gold_letter - 'A');
  return std::string(1, gold_letter) + ". " + options.at(idx);
}

McqOptions shuffle_options(std::string_view item_id, std::string_view gold, std::span<const std::string> distractors) {
  std::vector<std::size_t> order(distractors.size() + 1);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(sha256_u64("mcq:" + std::string(item_id)));
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(order[i], order[j]);
  }
  McqOptions out;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    if (order[pos] == 0) {
      out.options.emplace_back(gold);
      out.gold_letter = option_letter(pos);
    } else {
      out.options.push_back(distractors[order[pos] - 1]);
    }
  }
  return out;
}

std::optional<std::vector<std::string>> parse_distractors(std::string_view reply, std::string_view gold) {
  json arr;
  try {
    arr = json::parse(extract_json_list(reply));
  } catch (const std::exception&) {
    return std::nullopt;
  }
  if (!arr.is_array()) return std::nullopt;
  std::vector<std::string> out;
  std::set<std::string> keys{normalize_for_match(gold)};
  for (const auto& item : arr) {
    if (!item.is_string()) return std::nullopt;
    std::string d = trim(item.get<std::string>());
    if (d.empty() || !keys.insert(normalize_for_match(d)).second) return std::nullopt;
    out.push_back(std::move(d));
  }
  if (out.size() != 3) return std::nullopt;
  return out;
}

std::optional<McqOptions> make_mcq(std::string_view item_id, std::string_view question, std::string_view answer,
                                   const std::string& crop_bytes, ModelClient& generator,
                                   const PromptTemplates& prompts) {
  if (trim(answer).empty()) throw PreconditionError("mcq gold answer is empty");
  ChatRequest req{render_distractor_prompt(prompts, question, answer), crop_bytes, {}};
  for (int attempt = 0; attempt < 2; ++attempt) {
    req.params.seed = attempt;
    if (auto d = parse_distractors(generator.chat(req), answer)) return shuffle_options(item_id, answer, *d);
  }
  return std::nullopt;
}

std::optional<Dimension> parse_dimension(std::string_view reply) {
  std::string t = to_lower_ascii(trim(reply));
  while (!t.empty() && std::ispunct(static_cast<unsigned char>(t.back()))) t.pop_back();
  if (auto d = dimension_from_string(trim(t))) return d;
  std::optional<Dimension> found;
  for (auto d : kDimensions) {
    const std::regex word("\\b" + std::string(to_string(d)) + "\\b");
    if (std::regex_search(t, word)) {
      if (found) return std::nullopt;
      found = d;
    }
  }
  return found;
}

std::optional<Dimension> classify_dimension(std::string_view question, const std::string& crop_bytes,
                                            ModelClient& classifier, const PromptTemplates& prompts) {
  const std::string prompt = render_classify_prompt(prompts, question);
  ChatRequest req{prompt, crop_bytes, {}};
  if (auto d = parse_dimension(classifier.chat(req))) return d;
  req.prompt = prompt + "\n\n" + prompts.classify_retry;
  return parse_dimension(classifier.chat(req));
}

BenchItem build_bench_item(const ManifestEntry& image, const RegionProposal& proposal, const SynthesizedQA& qa,
                           const fs::path& images_dir, const BenchBuildOptions& options) {
  if (image.partition != Partition::bench) {
    throw PreconditionError("image " + image.record.image_id + " is not in the bench partition");
  }
  if (!qa.consensus.accepted || !qa.consensus.label) throw PreconditionError("qa " + qa.qa_id + " not accepted");
  if (proposal.image_id != image.record.image_id || qa.box_id != proposal.box_id) {
    throw PreconditionError("qa " + qa.qa_id + " does not belong to image " + image.record.image_id);
  }
  BenchItem item;
  item.item_id = qa.qa_id;
  item.bbox = proposal.bbox;
  item.question = qa.question;
  item.answer = *qa.consensus.label;
  item.image_id = image.record.image_id;
  item.qa_id = qa.qa_id;

  std::string ext = fs::path(image.record.path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  item.full_image = images_dir / (item.item_id + ".full" + ext);
  item.crop_image = images_dir / (item.item_id + ".crop.jpg");
  copy_file_bytes(image.record.path, item.full_image);
  const Image source = read_image(image.record.path);
  write_file_atomic(item.crop_image, encode_jpeg(render_crop(source, proposal.bbox, options.scale_factor)));
  return item;
}

std::string_view to_string(View v) { return v == View::global ? "global" : "regional"; }

View view_from_string(std::string_view s) {
  if (s == "global") return View::global;
  if (s == "regional") return View::regional;
  throw DataError("unknown view: " + std::string(s));
}

json to_json(const EvalRecord& r) {
  return {{"item_id", r.item_id}, {"view", to_string(r.view)}, {"model_id", r.model_id}, {"response", r.response},
          {"score", r.score},     {"tier", to_string(r.tier)}, {"failed", r.failed},     {"error", r.error}};
}

EvalRecord eval_record_from_json(const json& j) {
  EvalRecord r;
  r.item_id = j.at("item_id").get<std::string>();
  r.view = view_from_string(j.at("view").get<std::string>());
  r.model_id = j.at("model_id").get<std::string>();
  r.response = j.value("response", "");
  r.score = j.value("score", 0);
  r.tier = score_tier_from_string(j.value("tier", "rule"));
  r.failed = j.value("failed", false);
  r.error = j.value("error", "");
  return r;
}

std::vector<EvalRecord> run_dual_view(std::span<const BenchItem> items, ModelClient& model, ModelClient* judge_client,
                                      const PromptTemplates& prompts, const EvalOptions& options) {
  for (const auto& item : items) {
    if (item.status != ItemStatus::promoted) throw PreconditionError("item " + item.item_id + " is not promoted");
  }
  std::vector<EvalRecord> out(items.size() * 2);
  parallel_for(out.size(), options.concurrency, [&](std::size_t k) {
    const BenchItem& item = items[k / 2];
    const View view = k % 2 == 0 ? View::global : View::regional;
    EvalRecord& rec = out[k];
    rec.item_id = item.item_id;
    rec.view = view;
    rec.model_id = model.model();
    try {
      const ChatRequest req{render_eval_prompt(prompts, item.question, item.options),
                            read_file(view == View::global ? item.full_image : item.crop_image),
                            options.model_params};
      rec.response = model.chat(req);
      const ScoreRecord s = score(item.question, item.answer, rec.response, item.format, judge_client,
                                  prompts.judge, options.judge_params);
      rec.score = s.score;
      rec.tier = s.tier;
    } catch (const Error& e) {
      rec.failed = true;
      rec.score = 0;
      rec.error = e.what();
    }
  });
  return out;
}

GapReport compute_gap(std::span<const EvalRecord> records, std::span<const BenchItem> items) {
  std::map<std::string, Dimension, std::less<>> dims;
  std::map<Dimension, GapRow> rows;
  for (const auto& item : items) {
    dims.emplace(item.item_id, item.dimension);
    auto& row = rows[item.dimension];
    row.dimension = item.dimension;
    ++row.n;
  }
  GapReport report;
  std::set<std::pair<std::string, View>> seen;
  for (const auto& r : records) {
    const auto it = dims.find(r.item_id);
    if (it == dims.end()) throw DataError("eval record for unknown item " + r.item_id);
    if (!seen.emplace(r.item_id, r.view).second) {
      throw DataError("duplicate eval record for " + r.item_id + "/" + std::string(to_string(r.view)));
    }
    if (report.model_id.empty()) report.model_id = r.model_id;
    if (r.failed) {
      ++report.failed;
      continue;
    }
    auto& row = rows[it->second];
    if (r.view == View::global) {
      ++row.global_n;
      row.global_correct += static_cast<std::size_t>(r.score);
    } else {
      ++row.regional_n;
      row.regional_correct += static_cast<std::size_t>(r.score);
    }
  }
  auto pct = [](std::size_t c, std::size_t n) { return n == 0 ? 0.0 : 100.0 * static_cast<double>(c) / n; };
  double gw = 0, rw = 0;
  std::size_t gn = 0, rn = 0;
  for (auto d : kDimensions) {
    const auto it = rows.find(d);
    if (it == rows.end()) {
      report.omitted.push_back(d);
      continue;
    }
    GapRow row = it->second;
    row.global_acc = pct(row.global_correct, row.global_n);
    row.regional_acc = pct(row.regional_correct, row.regional_n);
    row.gap = row.regional_acc - row.global_acc;
    gw += static_cast<double>(row.global_n) * row.global_acc;
    rw += static_cast<double>(row.regional_n) * row.regional_acc;
    gn += row.global_n;
    rn += row.regional_n;
    report.rows.push_back(row);
  }
  report.global_acc = gn == 0 ? 0.0 : gw / static_cast<double>(gn);
  report.regional_acc = rn == 0 ? 0.0 : rw / static_cast<double>(rn);
  report.gap = report.regional_acc - report.global_acc;
  return report;
}

json to_json(const GapReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"dimension", to_string(row.dimension)},
                    {"n", row.n},
                    {"global_n", row.global_n},
                    {"regional_n", row.regional_n},
                    {"global_correct", row.global_correct},
                    {"regional_correct", row.regional_correct},
                    {"global_acc", row.global_acc},
                    {"regional_acc", row.regional_acc},
                    {"gap", row.gap}});
  }
  json omitted = json::array();
  for (auto d : r.omitted) omitted.push_back(to_string(d));
  return {{"model_id", r.model_id},         {"rows", rows},
          {"omitted", omitted},             {"overall", {{"global_acc", r.global_acc}, {"regional_acc", r.regional_acc}, {"gap", r.gap}}},
          {"failed", r.failed}};
}

double display_gap(double global_pct, double regional_pct) {
  return static_cast<double>(std::llround(regional_pct * 100.0) - std::llround(global_pct * 100.0)) / 100.0;
}

namespace {

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string format_gap_table(std::span<const GapReport> reports) {
  std::vector<std::vector<std::string>> table;
  std::vector<std::string> header{"Model", "Dual-View"};
  for (auto d : kDimensions) header.emplace_back(display_name(d));
  header.emplace_back("Avg");
  table.push_back(header);
  for (const auto& r : reports) {
    std::map<Dimension, const GapRow*> by_dim;
    for (const auto& row : r.rows) by_dim[row.dimension] = &row;
    for (int kind = 0; kind < 3; ++kind) {
      std::vector<std::string> line{kind == 0 ? r.model_id : "", kind == 0 ? "Global" : kind == 1 ? "Regional" : "Zooming Gap"};
      for (auto d : kDimensions) {
        const auto it = by_dim.find(d);
        if (it == by_dim.end()) {
          line.emplace_back("-");
          continue;
        }
        const GapRow& row = *it->second;
        line.push_back(kind == 0   ? fixed2(row.global_acc)
                       : kind == 1 ? fixed2(row.regional_acc)
                                   : fixed2(display_gap(row.global_acc, row.regional_acc)));
      }
      line.push_back(kind == 0   ? fixed2(r.global_acc)
                     : kind == 1 ? fixed2(r.regional_acc)
                                 : fixed2(display_gap(r.global_acc, r.regional_acc)));
      table.push_back(std::move(line));
    }
  }
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& line : table) {
    for (std::size_t c = 0; c < line.size(); ++c) widths[c] = std::max(widths[c], line[c].size());
  }
  std::string out;
  for (std::size_t li = 0; li < table.size(); ++li) {
    const auto& line = table[li];
    std::string text;
    for (std::size_t c = 0; c < line.size(); ++c) {
      const std::string pad(widths[c] - line[c].size(), ' ');
      text += c < 2 ? line[c] + pad : pad + line[c];
      if (c + 1 < line.size()) text += "  ";
    }
    while (!text.empty() && text.back() == ' ') text.pop_back();
    out += text + "\n";
    if (li == 0) out += std::string(text.size(), '-') + "\n";
  }
  return out;
}

}  // namespace r2i
