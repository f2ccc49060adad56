#include "r2i/stub_clients.hpp"

#include <algorithm>
#include <array>
#include <cstdio>

#include "r2i/error.hpp"
#include "r2i/hash.hpp"
#include "r2i/image.hpp"
#include "r2i/io.hpp"
#include "r2i/text.hpp"

namespace r2i {

RecordingClient::RecordingClient(std::string endpoint_id, std::string model)
    : endpoint_id_(std::move(endpoint_id)), model_(std::move(model)) {}

std::string RecordingClient::chat(const ChatRequest& request) {
  {
    std::lock_guard lock(mu_);
    log_.push_back({request_digest(endpoint_id_, model_, request), request.prompt, request.image.size(),
                    request.params});
  }
  return respond(request);
}

std::vector<RecordedRequest> RecordingClient::requests() const {
  std::lock_guard lock(mu_);
  return log_;
}

std::size_t RecordingClient::request_count() const {
  std::lock_guard lock(mu_);
  return log_.size();
}

void RecordingClient::clear() {
  std::lock_guard lock(mu_);
  log_.clear();
}

ScriptedClient::ScriptedClient(std::string endpoint_id, std::vector<Reply> replies, Handler fallback)
    : RecordingClient(endpoint_id, "scripted"), queue_(replies.begin(), replies.end()), fallback_(std::move(fallback)) {}

ScriptedClient::ScriptedClient(std::string endpoint_id, Handler handler)
    : ScriptedClient(std::move(endpoint_id), {}, std::move(handler)) {}

std::string ScriptedClient::respond(const ChatRequest& request) {
  std::optional<Reply> next;
  {
    std::lock_guard lock(queue_mu_);
    if (!queue_.empty()) {
      next = std::move(queue_.front());
      queue_.pop_front();
    }
  }
  if (!next) {
    if (fallback_) return fallback_(request);
    throw TransportError(endpoint_id() + ": script exhausted", 0, false);
  }
  if (const auto* f = std::get_if<ScriptedFailure>(&*next)) {
    throw TransportError(endpoint_id() + ": scripted failure " + std::to_string(f->status), f->status,
                         is_retryable_status(f->status));
  }
  return std::get<std::string>(*next);
}

TranscriptClient::TranscriptClient(std::string endpoint_id, std::string model, const fs::path& transcript)
    : RecordingClient(std::move(endpoint_id), std::move(model)) {
  for (const auto& row : read_jsonl(transcript)) {
    responses_.emplace(row.at("digest").get<std::string>(), row.at("response").get<std::string>());
  }
}

std::string TranscriptClient::respond(const ChatRequest& request) {
  const std::string digest = request_digest(endpoint_id(), model(), request);
  const auto it = responses_.find(digest);
  if (it == responses_.end()) throw TransportError(endpoint_id() + ": no transcript entry for " + digest, 404, false);
  return it->second;
}

// The synthetic world.

namespace {

using Vocab = std::vector<std::string_view>;

const Vocab kLabels{"sign", "bottle", "clock", "bicycle", "lamp", "door", "cup", "poster", "bench", "umbrella", "book", "car"};
const Vocab kThings{"bolts", "windows", "stripes", "buttons", "letters"};
const Vocab kParts{"handle", "frame", "cap", "border", "base"};
const Vocab kColors{"red", "blue", "green", "yellow", "black", "white", "orange", "brown"};
const Vocab kWords{"EXIT", "OPEN", "STOP", "CAFE", "SALE", "PUSH"};
const Vocab kMaterials{"wood", "metal", "glass", "plastic", "fabric", "stone"};
const Vocab kShapes{"round", "square", "triangular", "oval", "hexagonal"};
const Vocab kObjects{"key", "chain", "sticker", "hook", "tag"};
const Vocab kCounts{"1", "2", "3", "4", "5", "6", "7", "8", "9"};
const Vocab kNumberWords{"one", "two", "three", "four", "five", "six", "seven", "eight", "nine"};

std::uint64_t h(std::string_view s) { return sha256_u64(s); }

std::uint64_t h(std::string_view a, std::string_view b) { return sha256_u64(std::string(a) + "\x1f" + std::string(b)); }

std::string_view pick(const Vocab& v, std::uint64_t x) { return v[x % v.size()]; }

std::string question_key(std::string_view q) {
  const auto pos = q.find('?');
  return trim(pos == std::string_view::npos ? q : q.substr(0, pos + 1));
}

const Vocab& vocab_for(std::string_view question) {
  const std::string q = to_lower_ascii(question_key(question));
  if (q.starts_with("how many")) return kCounts;
  if (q.find("word is written") != std::string::npos) return kWords;
  if (q.find("color") != std::string::npos) return kColors;
  if (q.find("material") != std::string::npos) return kMaterials;
  if (q.find("shape") != std::string::npos) return kShapes;
  return kObjects;
}

std::string wrong_answer(std::string_view question, std::uint64_t salt) {
  const Vocab& v = vocab_for(question);
  const std::string truth = SyntheticClient::truth(question);
  const auto idx = static_cast<std::size_t>(std::find(v.begin(), v.end(), truth) - v.begin());
  return std::string(v[(idx + 1 + salt % (v.size() - 1)) % v.size()]);
}

std::string first_line(std::string_view s) {
  const auto pos = s.find('\n');
  return std::string(pos == std::string_view::npos ? s : s.substr(0, pos));
}

std::string after(std::string_view s, std::string_view marker) {
  const auto pos = s.find(marker);
  if (pos == std::string_view::npos) return {};
  const auto start = pos + marker.size();
  const auto end = s.find('\n', start);
  return std::string(s.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
}

std::string canonical(std::string_view answer) {
  std::string n = normalize_for_match(answer);
  for (std::size_t i = 0; i < kNumberWords.size(); ++i) {
    if (n == kNumberWords[i]) return std::string(kCounts[i]);
  }
  return n;
}

bool mentions(std::string_view response, std::string_view gold) {
  const std::string g = canonical(gold);
  if (g.empty()) return false;
  if (canonical(response) == g) return true;
  const std::string r = " " + normalize_for_match(response) + " ";
  return r.find(" " + g + " ") != std::string::npos;
}

bool is_retry(std::string_view prompt) {
  return prompt.find("previous reply could not be parsed") != std::string_view::npos ||
         prompt.find("Reply with exactly one of") != std::string_view::npos;
}

std::string make_question(std::uint64_t x) {
  const std::string label(pick(kLabels, x >> 8));
  switch (x % 6) {
    case 0: return "How many " + std::string(pick(kThings, x >> 16)) + " can be seen on the " + label + "?";
    case 1: return "What word is written on the " + label + "?";
    case 2: return "What color is the " + std::string(pick(kParts, x >> 16)) + " of the " + label + "?";
    case 3: return "What material is the " + label + " made of?";
    case 4: return "What shape is the " + std::string(pick(kParts, x >> 16)) + " of the " + label + "?";
    default: return "What object is attached to the " + label + "?";
  }
}

std::string fmt_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

}  // namespace

SyntheticClient::SyntheticClient(std::string endpoint_id, SyntheticRole role, int teacher_index)
    : RecordingClient(endpoint_id, "synthetic-" + endpoint_id), role_(role), teacher_index_(teacher_index) {}

std::string SyntheticClient::truth(std::string_view question) {
  const std::string key = question_key(question);
  return std::string(pick(vocab_for(key), h("truth", key)));
}

std::string SyntheticClient::respond(const ChatRequest& r) {
  switch (role_) {
    case SyntheticRole::inventory: return inventory(r);
    case SyntheticRole::segmenter: return segmenter(r);
    case SyntheticRole::generator: return generator(r);
    case SyntheticRole::teacher: return teacher(r);
    case SyntheticRole::student: return student(r);
    case SyntheticRole::judge: return judge(r);
    case SyntheticRole::distractor: return distractor(r);
    case SyntheticRole::classifier: return classifier(r);
    case SyntheticRole::evaluator: break;
  }
  return evaluator(r);
}

std::string SyntheticClient::inventory(const ChatRequest& r) const {
  const std::uint64_t x = h(r.image);
  json labels = json::array();
  for (std::size_t i = 0; labels.size() < 3; ++i) {
    const std::string label(pick(kLabels, h(std::to_string(x), std::to_string(i))));
    if (std::find(labels.begin(), labels.end(), label) == labels.end()) labels.push_back(label);
  }
  return x % 3 == 0 ? "```json\n" + labels.dump() + "\n```" : labels.dump();
}

std::string SyntheticClient::segmenter(const ChatRequest& r) const {
  const std::string label = trim(after(r.prompt, "Object: "));
  const ImageSize size = probe_size(r.image);
  const std::string img = std::to_string(h(r.image));
  const std::size_t n = 1 + h(img, label) % 2;
  json boxes = json::array();
  for (std::size_t j = 0; j < n; ++j) {
    const std::uint64_t x = h(img, label + "#" + std::to_string(j));
    double bw = size.width * (0.05 + static_cast<double>(x % 38) / 100.0);
    double bh = size.height * (0.05 + static_cast<double>((x >> 8) % 38) / 100.0);
    if ((x >> 24) % 9 == 0) bw = bh = 10.0;
    const double x1 = static_cast<double>((x >> 32) % static_cast<std::uint64_t>(size.width - bw)) + 0.5;
    const double y1 = static_cast<double>((x >> 44) % static_cast<std::uint64_t>(size.height - bh)) + 0.5;
    double x2 = x1 + bw;
    if ((x >> 56) % 7 == 0) x2 = size.width + 30.0;
    boxes.push_back({{"bbox", {json::parse(fmt_coord(x1)), json::parse(fmt_coord(y1)), json::parse(fmt_coord(x2)),
                               json::parse(fmt_coord(y1 + bh))}}});
  }
  return boxes.dump();
}

std::string SyntheticClient::generator(const ChatRequest& r) const {
  const std::uint64_t x = h(r.image);
  if (x % 41 == 0 || (x % 5 == 0 && !is_retry(r.prompt))) return "Here are some questions about the picture.";
  const std::size_t count = x % 16 == 0 ? 0 : x % 16 == 1 ? 4 : 3;
  json out = json::array();
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back({{"question", make_question(h(std::to_string(x), "q" + std::to_string(i)))}});
  }
  return out.dump(2);
}

std::string SyntheticClient::teacher(const ChatRequest& r) const {
  const std::string q = first_line(r.prompt);
  const std::string key = question_key(q);
  const std::int64_t sample = r.params.seed.value_or(0);
  const std::uint64_t mode = h("mode", key) % 20;
  bool wrong = false;
  if (mode >= 12 && mode < 15) {
    wrong = teacher_index_ == 0 && sample == static_cast<std::int64_t>(h("slot", key) % 4);
  } else if (mode >= 15) {
    wrong = sample < 2;
  }
  std::string answer = wrong ? wrong_answer(q, h(key, endpoint_id() + std::to_string(sample))) : truth(q);
  switch (h(key, endpoint_id() + ":" + std::to_string(sample)) % 4) {
    case 1:
      if (!answer.empty()) answer[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(answer[0])));
      break;
    case 2: answer += "."; break;
    case 3: answer = " " + answer + " "; break;
    default: break;
  }
  return answer;
}

std::string SyntheticClient::student(const ChatRequest& r) const {
  const std::string q = first_line(r.prompt);
  const std::string key = question_key(q);
  const auto solved = static_cast<std::int64_t>(h("skill", key) % 5);
  const std::int64_t trial = r.params.seed.value_or(0);
  if (trial >= solved) return wrong_answer(q, h(key, std::to_string(trial)));
  const std::string t = truth(q);
  const auto it = std::find(kCounts.begin(), kCounts.end(), t);
  switch (h("style", key) % 3) {
    case 0:
      if (it != kCounts.end()) return std::string(kNumberWords[static_cast<std::size_t>(it - kCounts.begin())]);
      return t;
    case 1: return "Looking closely, the answer is " + t + ".";
    default: return t;
  }
}

std::string SyntheticClient::judge(const ChatRequest& r) const {
  const std::string gt = trim(after(r.prompt, "The answer is: "));
  const auto start = r.prompt.find("The response is: ");
  const auto end = r.prompt.find("\nPlease check and compare");
  std::string response;
  if (start != std::string::npos && end != std::string::npos && end > start) {
    response = r.prompt.substr(start + 17, end - start - 17);
  }
  // Judge on the MCQ option text when the gold carries a letter prefix.
  std::string gold = gt;
  if (gold.size() > 3 && gold[1] == '.' && gold[2] == ' ') gold = gold.substr(3);
  const bool yes = mentions(response, gold) || mentions(last_nonempty_line(response), gold);
  return std::string("The response ") + (yes ? "matches" : "does not match") + " the answer.\n\\boxed{" +
         (yes ? "Yes" : "No") + "}";
}

std::string SyntheticClient::distractor(const ChatRequest& r) const {
  const std::string q = trim(after(r.prompt, "Question: "));
  const std::string answer = trim(after(r.prompt, "Correct answer: "));
  const Vocab& v = vocab_for(q);
  const std::string gold = normalize_for_match(answer);
  json out = json::array();
  const std::int64_t attempt = r.params.seed.value_or(0);
  if (attempt == 0 && h("collide", question_key(q)) % 7 == 0) out.push_back(answer);
  const std::uint64_t x = h("distract", question_key(q));
  for (std::size_t i = 0; out.size() < 3 && i < v.size(); ++i) {
    const std::string c(v[(x + i) % v.size()]);
    if (normalize_for_match(c) == gold) continue;
    if (std::find(out.begin(), out.end(), c) != out.end()) continue;
    out.push_back(c);
  }
  return out.dump();
}

std::string SyntheticClient::classifier(const ChatRequest& r) const {
  const std::string q = trim(after(r.prompt, "Question: "));
  const std::string key = to_lower_ascii(question_key(q));
  if (h("offlabel", key) % 17 == 0 && !is_retry(r.prompt)) return "This question is mostly about surface texture.";
  if (key.starts_with("how many")) return "counting";
  if (key.find("word") != std::string::npos) return "ocr";
  if (key.find("color") != std::string::npos) return "color";
  if (key.find("material") != std::string::npos) return "Material.";
  if (key.find("shape") != std::string::npos) return "structure";
  return "identification";
}

std::string SyntheticClient::evaluator(const ChatRequest& r) const {
  const std::vector<std::string> lines = split_lines(r.prompt);
  const std::string q = lines.empty() ? std::string() : lines.front();
  const std::string key = question_key(q);
  const ImageSize size = probe_size(r.image);
  const bool regional = std::min(size.width, size.height) < 800;
  const bool right = h(key, regional ? "regional" : "global") % 100 < (regional ? 75u : 40u);
  std::vector<std::string> options;
  for (const auto& line : lines) {
    if (line.size() > 3 && line[0] >= 'A' && line[0] <= 'Z' && line[1] == '.' && line[2] == ' ') {
      options.push_back(line.substr(3));
    }
  }
  const std::string t = truth(q);
  if (options.empty()) return right ? t : wrong_answer(q, h(key, "eval"));
  std::size_t gold = 0;
  for (std::size_t i = 0; i < options.size(); ++i) {
    if (normalize_for_match(options[i]) == normalize_for_match(t)) gold = i;
  }
  const std::size_t pick_idx = right ? gold : (gold + 1 + h(key, "eval") % (options.size() - 1)) % options.size();
  const char letter = static_cast<char>('A' + pick_idx);
  return h(key, "style") % 2 == 0 ? std::string(1, letter) : "The correct option is \\boxed{" + std::string(1, letter) + "}";
}

}  // namespace r2i
