#include "r2i/config.hpp"

#include <set>

#include <yaml-cpp/yaml.h>

#include "r2i/error.hpp"
#include "r2i/hash.hpp"
#include "r2i/io.hpp"

namespace r2i {

namespace {

json yaml_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined: return nullptr;
    case YAML::NodeType::Sequence: {
      json arr = json::array();
      for (const auto& item : node) arr.push_back(yaml_to_json(item));
      return arr;
    }
    case YAML::NodeType::Map: {
      json obj = json::object();
      for (const auto& kv : node) obj[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      return obj;
    }
    case YAML::NodeType::Scalar: break;
  }
  const std::string s = node.Scalar();
  if (node.Tag() == "!") return s;  // quoted
  if (s == "true" || s == "True") return true;
  if (s == "false" || s == "False") return false;
  if (s == "null" || s == "~") return nullptr;
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  return s;
}

/// Reads a section while tracking which keys were consumed.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_null() && !j_.is_object()) throw PreconditionError("config: '" + name_ + "' must be a mapping");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0 || j_.is_null()) return;
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.contains(k)) throw PreconditionError("config: unknown key '" + name_ + "." + k + "'");
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (j_.is_null() || !j_.contains(key) || j_[key].is_null()) return;
    try {
      out = j_[key].get<T>();
    } catch (const json::exception&) {
      throw PreconditionError("config: '" + name_ + "." + key + "' has the wrong type");
    }
  }

  const json& sub(const char* key) {
    seen_.insert(key);
    static const json null_json;
    if (j_.is_null() || !j_.contains(key)) return null_json;
    return j_[key];
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  return (base / p).lexically_normal();
}

std::string read_text_override(const fs::path& base, const std::string& file) {
  return read_file(resolve(base, file));
}

}  // namespace

PipelineConfig default_config() { return PipelineConfig{}; }

void validate(const PipelineConfig& c) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw PreconditionError("config: " + what);
  };
  require(c.min_dim >= 1, "min_dim must be >= 1");
  require(c.bench_fraction >= 0.0 && c.bench_fraction < 1.0, "bench_fraction must be in [0, 1)");
  require(c.tau > 0.0 && c.tau <= 1.0, "tau must be in (0, 1]");
  require(c.proposals_cap >= 1, "proposals cap must be >= 1");
  require(c.scale_factor > 0.0, "scale_factor must be positive");
  require(c.questions_k >= 1, "questions must be >= 1");
  require(!c.teachers.empty(), "at least one teacher");
  require(c.samples_per_teacher >= 1, "samples_per_teacher must be >= 1");
  const int total = static_cast<int>(c.teachers.size()) * c.samples_per_teacher;
  require(c.consensus_threshold >= 0 && c.consensus_threshold < total, "consensus threshold must be below total samples");
  require(c.trials >= 1, "trials must be >= 1");
  require(c.max_correct >= 0 && c.max_correct < c.trials, "max_correct must be in [0, trials)");
  require(c.mcq_fraction >= 0.0 && c.mcq_fraction <= 1.0, "mcq_fraction must be in [0, 1]");
  require(c.promotion.quorum >= 1, "quorum must be >= 1");
  require(c.epsilon >= 0.0, "epsilon must be >= 0");
  require(c.m_star >= 1, "m_star must be >= 1");
  require(c.concurrency >= 1, "concurrency must be >= 1");
  require(c.grounding.min_stroke >= 1, "min_stroke must be >= 1");
  for (const auto& [id, e] : c.endpoints) {
    require(e.max_concurrency >= 1, "endpoint " + id + ": max_concurrency must be >= 1");
    require(e.requests_per_minute >= 1, "endpoint " + id + ": requests_per_minute must be >= 1");
    require(e.max_retries >= 0, "endpoint " + id + ": max_retries must be >= 0");
  }
  require(sha256_hex(c.prompts.judge) == c.judge_template_sha256,
          "judge template checksum " + sha256_hex(c.prompts.judge) + " differs from pinned " + c.judge_template_sha256);
}

namespace {

PipelineConfig from_json(const json& root, const fs::path& base) {
  PipelineConfig c;
  Section top(root, "");
  top.get("seed", c.seed);
  std::string work_dir = c.work_dir.string();
  top.get("work_dir", work_dir);
  c.work_dir = resolve(base, work_dir);
  top.get("concurrency", c.concurrency);
  top.get("cache", c.cache);
  {
    Section s(top.sub("corpus"), "corpus");
    std::vector<std::string> roots;
    s.get("roots", roots);
    for (const auto& r : roots) c.corpus_roots.push_back(resolve(base, r));
    s.get("min_dim", c.min_dim);
    s.get("bench_fraction", c.bench_fraction);
  }
  {
    Section s(top.sub("proposals"), "proposals");
    std::string kind = "inventory";
    s.get("proposer", kind);
    if (kind == "inventory") {
      c.proposer = ProposerKind::inventory;
    } else if (kind == "annotations") {
      c.proposer = ProposerKind::annotations;
    } else {
      throw PreconditionError("config: proposals.proposer must be inventory or annotations");
    }
    std::string ann;
    s.get("annotations", ann);
    c.annotations = resolve(base, ann);
    s.get("tau", c.tau);
    s.get("cap_per_image", c.proposals_cap);
    s.get("min_box_side", c.min_box_side);
    s.get("max_labels", c.max_labels);
  }
  {
    Section s(top.sub("synthesis"), "synthesis");
    s.get("direct", c.direct_synthesis);
    s.get("scale_factor", c.scale_factor);
    s.get("questions", c.questions_k);
    s.get("teachers", c.teachers);
    s.get("samples_per_teacher", c.samples_per_teacher);
    s.get("consensus_threshold", c.consensus_threshold);
    s.get("teacher_temperature", c.teacher_temperature);
  }
  {
    Section s(top.sub("distill"), "distill");
    std::string variant(to_string(c.variant));
    s.get("variant", variant);
    c.variant = grounding_variant_from_string(variant);
    s.get("image_suffix", c.grounding.image_suffix);
    s.get("question_suffix", c.grounding.question_suffix);
    std::vector<int> color{c.grounding.color.r, c.grounding.color.g, c.grounding.color.b};
    s.get("overlay_color", color);
    if (color.size() != 3) throw PreconditionError("config: distill.overlay_color needs 3 channels");
    c.grounding.color = {static_cast<std::uint8_t>(color[0]), static_cast<std::uint8_t>(color[1]),
                         static_cast<std::uint8_t>(color[2])};
    s.get("stroke_fraction", c.grounding.stroke_fraction);
    s.get("min_stroke", c.grounding.min_stroke);
    s.get("trials", c.trials);
    s.get("max_correct", c.max_correct);
    s.get("student_temperature", c.student_temperature);
  }
  {
    Section s(top.sub("bench"), "bench");
    s.get("mcq_fraction", c.mcq_fraction);
    s.get("quorum", c.promotion.quorum);
    s.get("review_tokens", c.review_tokens);
    s.get("eval_models", c.roles.eval_models);
  }
  {
    Section s(top.sub("attention"), "attention");
    s.get("m_star", c.m_star);
    std::optional<std::size_t> k;
    if (const json& kj = s.sub("k_star"); kj.is_number_integer()) k = kj.get<std::size_t>();
    c.k_star = k;
    s.get("epsilon", c.epsilon);
  }
  {
    Section s(top.sub("roles"), "roles");
    s.get("inventory", c.roles.inventory);
    s.get("segmenter", c.roles.segmenter);
    s.get("generator", c.roles.generator);
    s.get("student", c.roles.student);
    s.get("judge", c.roles.judge);
    s.get("distractor", c.roles.distractor);
    s.get("classifier", c.roles.classifier);
  }
  if (const json& eps = top.sub("endpoints"); !eps.is_null()) {
    if (!eps.is_array()) throw PreconditionError("config: endpoints must be a list");
    for (const auto& e : eps) {
      Section s(e, "endpoints[]");
      ModelEndpoint ep;
      s.get("endpoint_id", ep.endpoint_id);
      s.get("base_url", ep.base_url);
      s.get("token_env", ep.token_env);
      s.get("model", ep.model);
      s.get("max_concurrency", ep.max_concurrency);
      s.get("requests_per_minute", ep.requests_per_minute);
      s.get("max_retries", ep.max_retries);
      s.get("timeout_s", ep.timeout_s);
      if (ep.endpoint_id.empty()) throw PreconditionError("config: endpoint without endpoint_id");
      if (!c.endpoints.emplace(ep.endpoint_id, ep).second) {
        throw PreconditionError("config: duplicate endpoint " + ep.endpoint_id);
      }
    }
  }
  {
    Section s(top.sub("prompts"), "prompts");
    std::string file;
    auto text_or_file = [&](const char* key, const char* file_key, std::string& out) {
      s.get(key, out);
      file.clear();
      s.get(file_key, file);
      if (!file.empty()) out = read_text_override(base, file);
    };
    text_or_file("judge", "judge_file", c.prompts.judge);
    text_or_file("question", "question_file", c.prompts.question);
    text_or_file("question_examples", "question_examples_file", c.prompts.question_examples);
    s.get("answer_instruction", c.prompts.answer_instruction);
    s.get("mcq_instruction", c.prompts.mcq_instruction);
    s.get("json_retry", c.prompts.json_retry);
    s.get("inventory", c.prompts.inventory);
    s.get("segment", c.prompts.segment);
    s.get("distractors", c.prompts.distractors);
    s.get("classify", c.prompts.classify);
    s.get("classify_retry", c.prompts.classify_retry);
    s.get("judge_sha256", c.judge_template_sha256);
  }
  return c;
}

}  // namespace

PipelineConfig load_config(const fs::path& path) {
  YAML::Node node;
  try {
    node = YAML::LoadFile(path.string());
  } catch (const YAML::Exception& e) {
    throw PreconditionError("config " + path.string() + ": " + e.what());
  }
  PipelineConfig c = from_json(yaml_to_json(node), fs::absolute(path).parent_path());
  validate(c);
  return c;
}

json to_json(const PipelineConfig& c) {
  json roots = json::array();
  for (const auto& r : c.corpus_roots) roots.push_back(r.string());
  json endpoints = json::array();
  for (const auto& [id, e] : c.endpoints) {
    endpoints.push_back({{"endpoint_id", e.endpoint_id},
                         {"base_url", e.base_url},
                         {"token_env", e.token_env},
                         {"model", e.model},
                         {"max_concurrency", e.max_concurrency},
                         {"requests_per_minute", e.requests_per_minute},
                         {"max_retries", e.max_retries},
                         {"timeout_s", e.timeout_s}});
  }
  return {
      {"seed", c.seed},
      {"work_dir", c.work_dir.string()},
      {"concurrency", c.concurrency},
      {"cache", c.cache},
      {"corpus", {{"roots", roots}, {"min_dim", c.min_dim}, {"bench_fraction", c.bench_fraction}}},
      {"proposals",
       {{"proposer", c.proposer == ProposerKind::inventory ? "inventory" : "annotations"},
        {"annotations", c.annotations.string()},
        {"tau", c.tau},
        {"cap_per_image", c.proposals_cap},
        {"min_box_side", c.min_box_side},
        {"max_labels", c.max_labels}}},
      {"synthesis",
       {{"direct", c.direct_synthesis},
        {"scale_factor", c.scale_factor},
        {"questions", c.questions_k},
        {"teachers", c.teachers},
        {"samples_per_teacher", c.samples_per_teacher},
        {"consensus_threshold", c.consensus_threshold},
        {"teacher_temperature", c.teacher_temperature}}},
      {"distill",
       {{"variant", to_string(c.variant)},
        {"image_suffix", c.grounding.image_suffix},
        {"question_suffix", c.grounding.question_suffix},
        {"overlay_color", {c.grounding.color.r, c.grounding.color.g, c.grounding.color.b}},
        {"stroke_fraction", c.grounding.stroke_fraction},
        {"min_stroke", c.grounding.min_stroke},
        {"trials", c.trials},
        {"max_correct", c.max_correct},
        {"student_temperature", c.student_temperature}}},
      {"bench",
       {{"mcq_fraction", c.mcq_fraction},
        {"quorum", c.promotion.quorum},
        {"eval_models", c.roles.eval_models}}},
      {"attention", {{"m_star", c.m_star}, {"k_star", c.k_star ? json(*c.k_star) : json(nullptr)}, {"epsilon", c.epsilon}}},
      {"roles",
       {{"inventory", c.roles.inventory},
        {"segmenter", c.roles.segmenter},
        {"generator", c.roles.generator},
        {"student", c.roles.student},
        {"judge", c.roles.judge},
        {"distractor", c.roles.distractor},
        {"classifier", c.roles.classifier}}},
      {"endpoints", endpoints},
      {"prompts",
       {{"judge", c.prompts.judge},
        {"question", c.prompts.question},
        {"question_examples", c.prompts.question_examples},
        {"answer_instruction", c.prompts.answer_instruction},
        {"mcq_instruction", c.prompts.mcq_instruction},
        {"json_retry", c.prompts.json_retry},
        {"inventory", c.prompts.inventory},
        {"segment", c.prompts.segment},
        {"distractors", c.prompts.distractors},
        {"classify", c.prompts.classify},
        {"classify_retry", c.prompts.classify_retry},
        {"judge_sha256", c.judge_template_sha256}}},
  };
}

std::string config_checksum(const PipelineConfig& config) {
  // Locations and throughput knobs do not change what a run produces.
  json j = to_json(config);
  j.erase("work_dir");
  j.erase("concurrency");
  j.erase("cache");
  j["corpus"].erase("roots");
  j["proposals"].erase("annotations");
  return sha256_hex(j.dump());
}

}  // namespace r2i
