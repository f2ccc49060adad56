#pragma once

#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <variant>
#include <vector>

#include "r2i/model_client.hpp"

namespace r2i {

struct RecordedRequest {
  std::string digest;
  std::string prompt;
  std::size_t image_bytes = 0;
  DecodeParams params;
};

/// Base for network-free clients: records every request before answering it.
class RecordingClient : public ModelClient {
 public:
  RecordingClient(std::string endpoint_id, std::string model);

  std::string chat(const ChatRequest& request) final;
  const std::string& endpoint_id() const override { return endpoint_id_; }
  const std::string& model() const override { return model_; }

  std::vector<RecordedRequest> requests() const;
  std::size_t request_count() const;
  void clear();

 protected:
  virtual std::string respond(const ChatRequest& request) = 0;

 private:
  std::string endpoint_id_;
  std::string model_;
  mutable std::mutex mu_;
  std::vector<RecordedRequest> log_;
};

/// A transport failure injected into a script.
struct ScriptedFailure {
  int status = 503;
};

/// Replies from a fixed queue, or from a handler once the queue is empty.
/// An exhausted client without a handler throws TransportError.
class ScriptedClient final : public RecordingClient {
 public:
  using Reply = std::variant<std::string, ScriptedFailure>;
  using Handler = std::function<std::string(const ChatRequest&)>;

  ScriptedClient(std::string endpoint_id, std::vector<Reply> replies, Handler fallback = {});
  explicit ScriptedClient(std::string endpoint_id, Handler handler);

 protected:
  std::string respond(const ChatRequest& request) override;

 private:
  std::mutex queue_mu_;
  std::deque<Reply> queue_;
  Handler fallback_;
};

/// Replays responses keyed by request digest from a JSONL transcript of
/// {"digest", "response"} rows. Unknown digests are non-retryable failures.
class TranscriptClient final : public RecordingClient {
 public:
  TranscriptClient(std::string endpoint_id, std::string model, const std::filesystem::path& transcript);

 protected:
  std::string respond(const ChatRequest& request) override;

 private:
  std::map<std::string, std::string> responses_;
};

/// Roles understood by SyntheticClient.
enum class SyntheticRole { inventory, segmenter, generator, teacher, student, judge, distractor, classifier, evaluator };

/// A deterministic toy world standing in for every model role. Each question
/// has a hidden true answer derived from its text up to the first '?', so
/// teachers, students, evaluators and the judge agree on what is correct while
/// their error patterns stay fixed functions of the request.
class SyntheticClient final : public RecordingClient {
 public:
  SyntheticClient(std::string endpoint_id, SyntheticRole role, int teacher_index = 0);

  /// The hidden answer for a question.
  static std::string truth(std::string_view question);

 protected:
  std::string respond(const ChatRequest& request) override;

 private:
  std::string inventory(const ChatRequest& r) const;
  std::string segmenter(const ChatRequest& r) const;
  std::string generator(const ChatRequest& r) const;
  std::string teacher(const ChatRequest& r) const;
  std::string student(const ChatRequest& r) const;
  std::string judge(const ChatRequest& r) const;
  std::string distractor(const ChatRequest& r) const;
  std::string classifier(const ChatRequest& r) const;
  std::string evaluator(const ChatRequest& r) const;

  SyntheticRole role_;
  int teacher_index_;
};

}  // namespace r2i
