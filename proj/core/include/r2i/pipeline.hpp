#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "r2i/bench.hpp"
#include "r2i/cache.hpp"
#include "r2i/config.hpp"
#include "r2i/model_client.hpp"
#include "r2i/rate_limiter.hpp"
#include "r2i/synthesis.hpp"

namespace r2i {

enum class Stage { ingest, propose, filter, crop, questions, answers, consensus, ground, difficulty, emit, bench };

inline constexpr std::array<Stage, 11> kStages{Stage::ingest,    Stage::propose, Stage::filter,     Stage::crop,
                                               Stage::questions, Stage::answers, Stage::consensus,  Stage::ground,
                                               Stage::difficulty, Stage::emit,   Stage::bench};

std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view s);

/// One client per model role.
struct ClientSet {
  std::shared_ptr<ModelClient> inventory;
  std::shared_ptr<ModelClient> segmenter;
  std::shared_ptr<ModelClient> generator;
  std::vector<Teacher> teachers;
  std::shared_ptr<ModelClient> student;
  std::shared_ptr<ModelClient> judge;
  std::shared_ptr<ModelClient> distractor;
  std::shared_ptr<ModelClient> classifier;
  std::map<std::string, std::shared_ptr<ModelClient>> evaluators;  // eval model id -> client

  /// Every distinct client, roles first, then teachers, then evaluators.
  std::vector<std::shared_ptr<ModelClient>> all() const;
};

/// HTTP clients for the configured endpoints with one rate limiter per endpoint.
ClientSet make_remote_clients(const PipelineConfig& config, std::shared_ptr<Clock> clock = steady_clock(),
                              std::shared_ptr<Transport> transport = make_http_transport());

/// Deterministic in-process clients (see SyntheticClient).
ClientSet make_synthetic_clients(const PipelineConfig& config);

/// Replay clients reading `dir/{endpoint_id}.jsonl`.
ClientSet make_transcript_clients(const PipelineConfig& config, const std::filesystem::path& dir);

/// Wraps every client in a CachingClient over one shared cache.
ClientSet with_cache(const ClientSet& clients, std::shared_ptr<ResponseCache> cache);

/// Wraps every client so each answered request is appended to
/// `dir/{endpoint_id}.jsonl` as {"digest", "response"}.
ClientSet with_transcript_recording(const ClientSet& clients, const std::filesystem::path& dir);

/// Fixed file layout under the work directory.
struct Workspace {
  std::filesystem::path root;

  std::filesystem::path state_dir() const { return root / "state"; }
  std::filesystem::path done_marker(Stage s) const;
  std::filesystem::path manifest() const { return root / "manifest.json"; }
  std::filesystem::path proposals() const { return root / "proposals.jsonl"; }
  std::filesystem::path filtered() const { return root / "filtered.jsonl"; }
  std::filesystem::path crops_dir() const { return root / "crops"; }
  std::filesystem::path crops() const { return root / "crops.jsonl"; }
  std::filesystem::path questions() const { return root / "questions.jsonl"; }
  std::filesystem::path answers() const { return root / "answers.jsonl"; }
  std::filesystem::path qa() const { return root / "qa.jsonl"; }
  std::filesystem::path render_dir() const { return root / "render"; }
  std::filesystem::path grounded() const { return root / "grounded.jsonl"; }
  std::filesystem::path difficulty() const { return root / "difficulty.jsonl"; }
  std::filesystem::path dataset_dir() const { return root / "dataset"; }
  std::filesystem::path bench_journal() const { return root / "bench_items.jsonl"; }
  std::filesystem::path bench_dir() const { return root / "bench"; }
  std::filesystem::path bench_file() const { return bench_dir() / "bench.jsonl"; }
  std::filesystem::path eval_dir() const { return root / "eval"; }
  std::filesystem::path reports_dir() const { return root / "reports"; }
  std::filesystem::path cache_dir() const { return root / "cache"; }
  std::filesystem::path request_log() const { return root / "logs" / "requests.jsonl"; }
  std::filesystem::path run_report() const { return root / "run_report.json"; }

  /// Files and directories a stage writes.
  std::vector<std::filesystem::path> outputs(Stage s) const;
};

struct RunOptions {
  Stage from = Stage::ingest;
  Stage to = Stage::bench;
  /// Skip stages already marked done and records already journaled. Without
  /// it, the stages in [from, to] and everything after them start clean.
  bool resume = false;
};

struct RunReport {
  std::vector<Stage> executed;
  std::vector<Stage> skipped;
  nlohmann::json summary;  // stage name -> counters
};

/// Stages whose done markers must exist before `s` can run.
std::vector<Stage> prerequisites(Stage s);

/// Runs the stages in [from, to] in order. Each stage writes its outputs and
/// then a done marker carrying the config checksum. Per-record transport
/// failures do not stop a stage; they are left out of its journal and the
/// stage ends with TransportError so a resumed run retries exactly them.
RunReport run_pipeline(const PipelineConfig& config, const ClientSet& clients, const RunOptions& options = {});

/// Evaluates every promoted bench item with each configured eval model and
/// writes `eval/{model}.jsonl`. Throws StageError when nothing is promoted.
std::map<std::string, std::vector<EvalRecord>> run_evaluation(const PipelineConfig& config, const ClientSet& clients,
                                                              const std::filesystem::path& bench_file);

/// Gap reports from the eval records on disk; writes `reports/gap.json` and
/// `reports/gap.txt`.
std::vector<GapReport> build_gap_report(const PipelineConfig& config, const std::filesystem::path& bench_file);

}  // namespace r2i
