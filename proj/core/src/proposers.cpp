#include <set>

#include <spdlog/spdlog.h>

#include "r2i/corpus.hpp"
#include "r2i/error.hpp"
#include "r2i/io.hpp"
#include "r2i/model_client.hpp"
#include "r2i/prompts.hpp"
#include "r2i/text.hpp"

namespace r2i {

namespace {

std::optional<RawBox> raw_box_from_json(const json& bbox, std::string label) {
  if (!bbox.is_array() || bbox.size() != 4) return std::nullopt;
  for (const auto& v : bbox) {
    if (!v.is_number()) return std::nullopt;
  }
  return RawBox{bbox[0].get<double>(), bbox[1].get<double>(), bbox[2].get<double>(), bbox[3].get<double>(),
                std::move(label)};
}

}  // namespace

AnnotationProposer::AnnotationProposer(const fs::path& annotations) : rows_(read_jsonl(annotations)) {}

ProposerOutput AnnotationProposer::propose(const ImageRecord& image, const std::string&) {
  ProposerOutput out;
  const std::string filename = fs::path(image.path).filename().string();
  for (const auto& row : rows_) {
    const bool by_id = row.contains("image_id") && row["image_id"] == image.image_id;
    const bool by_file = row.contains("file") && (row["file"] == filename || row["file"] == image.path);
    if (!by_id && !by_file) continue;
    for (const auto& b : row.value("boxes", json::array())) {
      auto rb = raw_box_from_json(b.value("bbox", json()), b.value("label", ""));
      if (rb) {
        out.boxes.push_back(std::move(*rb));
      } else {
        out.boxes.push_back({0, 0, 0, 0, {}});  // keeps raw indices stable; dropped as degenerate
      }
    }
  }
  return out;
}

std::vector<std::string> parse_label_list(std::string_view response) {
  const json arr = json::parse(extract_json_list(response), nullptr, false);
  if (arr.is_discarded() || !arr.is_array()) throw DataError("label list is not valid JSON");
  std::vector<std::string> labels;
  for (const auto& item : arr) {
    std::string name;
    if (item.is_string()) {
      name = item.get<std::string>();
    } else if (item.is_object()) {
      name = item.value("name", item.value("label", ""));
    }
    name = collapse_whitespace(trim(name));
    if (!name.empty()) labels.push_back(std::move(name));
  }
  return labels;
}

std::vector<RawBox> parse_box_list(std::string_view response, std::string_view label) {
  const json arr = json::parse(extract_json_list(response), nullptr, false);
  if (arr.is_discarded() || !arr.is_array()) throw DataError("box list is not valid JSON");
  std::vector<RawBox> boxes;
  // A single bare box comes back as [x1, y1, x2, y2].
  if (arr.size() == 4 && arr[0].is_number()) {
    if (auto rb = raw_box_from_json(arr, std::string(label))) boxes.push_back(std::move(*rb));
    return boxes;
  }
  for (const auto& item : arr) {
    const json& bbox = item.is_object() ? item.value("bbox", json()) : item;
    if (auto rb = raw_box_from_json(bbox, std::string(label))) boxes.push_back(std::move(*rb));
  }
  return boxes;
}

InventoryProposer::InventoryProposer(std::shared_ptr<ModelClient> inventory, std::shared_ptr<ModelClient> segmenter,
                                     const PromptTemplates& prompts, std::size_t max_labels)
    : inventory_(std::move(inventory)),
      segmenter_(std::move(segmenter)),
      inventory_prompt_(prompts.inventory),
      segment_template_(prompts.segment),
      max_labels_(max_labels) {
  json_retry_ = prompts.json_retry;
}

ProposerOutput InventoryProposer::propose(const ImageRecord& image, const std::string& image_bytes) {
  ProposerOutput out;
  PromptTemplates retry;
  retry.json_retry = json_retry_;

  ChatRequest req{inventory_prompt_, image_bytes, {}};
  std::string reply = inventory_->chat(req);
  out.raw_responses.push_back(reply);
  std::vector<std::string> labels;
  try {
    labels = parse_label_list(reply);
  } catch (const DataError&) {
    req.prompt = with_json_retry(retry, inventory_prompt_);
    reply = inventory_->chat(req);
    out.raw_responses.push_back(reply);
    labels = parse_label_list(reply);
  }

  std::set<std::string> seen;
  for (const auto& label : labels) {
    if (seen.size() >= max_labels_) break;
    if (!seen.insert(to_lower_ascii(label)).second) continue;
    const std::string prompt = substitute(segment_template_, {{"label", label}});
    ChatRequest seg{prompt, image_bytes, {}};
    std::string seg_reply = segmenter_->chat(seg);
    out.raw_responses.push_back(seg_reply);
    try {
      auto boxes = parse_box_list(seg_reply, label);
      out.boxes.insert(out.boxes.end(), boxes.begin(), boxes.end());
      continue;
    } catch (const DataError&) {
    }
    seg.prompt = with_json_retry(retry, prompt);
    seg_reply = segmenter_->chat(seg);
    out.raw_responses.push_back(seg_reply);
    try {
      auto boxes = parse_box_list(seg_reply, label);
      out.boxes.insert(out.boxes.end(), boxes.begin(), boxes.end());
    } catch (const DataError& e) {
      spdlog::warn("proposer: no boxes for '{}' in {}: {}", label, image.image_id, e.what());
    }
  }
  return out;
}

}  // namespace r2i
