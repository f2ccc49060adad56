#include "r2i/pipeline.hpp"

#include <algorithm>
#include <mutex>
#include <set>

#include <spdlog/spdlog.h>

#include "r2i/corpus.hpp"
#include "r2i/distill.hpp"
#include "r2i/error.hpp"
#include "r2i/io.hpp"
#include "r2i/parallel.hpp"
#include "r2i/stub_clients.hpp"
#include "r2i/text.hpp"

namespace r2i {

namespace {

constexpr std::array<std::string_view, 11> kStageNames{"ingest",    "propose", "filter",    "crop",
                                                       "questions", "answers", "consensus", "ground",
                                                       "difficulty", "emit",   "bench"};

std::size_t index_of(Stage s) { return static_cast<std::size_t>(s); }

}  // namespace

std::string_view to_string(Stage s) { return kStageNames.at(index_of(s)); }

Stage stage_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kStageNames.size(); ++i) {
    if (kStageNames[i] == s) return kStages[i];
  }
  throw PreconditionError("unknown stage: " + std::string(s));
}

std::vector<std::shared_ptr<ModelClient>> ClientSet::all() const {
  std::vector<std::shared_ptr<ModelClient>> out;
  auto add = [&](const std::shared_ptr<ModelClient>& c) {
    if (c && std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
  };
  for (const auto& c : {inventory, segmenter, generator, student, judge, distractor, classifier}) add(c);
  for (const auto& t : teachers) add(t.client);
  for (const auto& [id, c] : evaluators) add(c);
  return out;
}

namespace {

template <typename Make>
ClientSet build_clients(const PipelineConfig& config, Make&& make) {
  const RoleMap& r = config.roles;
  ClientSet c;
  c.inventory = make(r.inventory, SyntheticRole::inventory, 0);
  c.segmenter = make(r.segmenter, SyntheticRole::segmenter, 0);
  c.generator = make(r.generator, SyntheticRole::generator, 0);
  for (std::size_t i = 0; i < config.teachers.size(); ++i) {
    c.teachers.push_back({config.teachers[i], make(config.teachers[i], SyntheticRole::teacher, static_cast<int>(i))});
  }
  c.student = make(r.student, SyntheticRole::student, 0);
  c.judge = make(r.judge, SyntheticRole::judge, 0);
  c.distractor = make(r.distractor, SyntheticRole::distractor, 0);
  c.classifier = make(r.classifier, SyntheticRole::classifier, 0);
  for (const auto& id : r.eval_models) c.evaluators[id] = make(id, SyntheticRole::evaluator, 0);
  return c;
}

template <typename Wrap>
ClientSet map_clients(const ClientSet& in, Wrap&& wrap) {
  std::map<const ModelClient*, std::shared_ptr<ModelClient>> done;
  auto w = [&](const std::shared_ptr<ModelClient>& c) -> std::shared_ptr<ModelClient> {
    if (!c) return c;
    auto [it, fresh] = done.try_emplace(c.get());
    if (fresh) it->second = wrap(c);
    return it->second;
  };
  ClientSet out;
  out.inventory = w(in.inventory);
  out.segmenter = w(in.segmenter);
  out.generator = w(in.generator);
  for (const auto& t : in.teachers) out.teachers.push_back({t.teacher_id, w(t.client)});
  out.student = w(in.student);
  out.judge = w(in.judge);
  out.distractor = w(in.distractor);
  out.classifier = w(in.classifier);
  for (const auto& [id, c] : in.evaluators) out.evaluators[id] = w(c);
  return out;
}

class TranscriptRecorder final : public ModelClient {
 public:
  TranscriptRecorder(std::shared_ptr<ModelClient> inner, std::shared_ptr<JsonlAppender> out)
      : inner_(std::move(inner)), out_(std::move(out)) {}

  std::string chat(const ChatRequest& request) override {
    std::string response = inner_->chat(request);
    out_->append({{"digest", request_digest(inner_->endpoint_id(), inner_->model(), request)},
                  {"model", inner_->model()},
                  {"response", response}});
    return response;
  }
  const std::string& endpoint_id() const override { return inner_->endpoint_id(); }
  const std::string& model() const override { return inner_->model(); }

 private:
  std::shared_ptr<ModelClient> inner_;
  std::shared_ptr<JsonlAppender> out_;
};

}  // namespace

ClientSet make_remote_clients(const PipelineConfig& config, std::shared_ptr<Clock> clock,
                              std::shared_ptr<Transport> transport) {
  auto log = std::make_shared<RequestLog>((Workspace{config.work_dir}.request_log()).string());
  fs::create_directories(Workspace{config.work_dir}.request_log().parent_path());
  std::map<std::string, std::shared_ptr<ModelClient>> by_endpoint;
  return build_clients(config, [&](const std::string& id, SyntheticRole, int) -> std::shared_ptr<ModelClient> {
    if (auto it = by_endpoint.find(id); it != by_endpoint.end()) return it->second;
    const auto ep = config.endpoints.find(id);
    if (ep == config.endpoints.end()) throw PreconditionError("no endpoint configured with id '" + id + "'");
    auto limiter = std::make_shared<RateLimiter>(ep->second.requests_per_minute, clock);
    auto client = std::make_shared<HttpModelClient>(ep->second, transport, limiter, clock, BackoffPolicy{}, log);
    by_endpoint.emplace(id, client);
    return client;
  });
}

ClientSet make_synthetic_clients(const PipelineConfig& config) {
  return build_clients(config, [](const std::string& id, SyntheticRole role, int teacher) {
    return std::make_shared<SyntheticClient>(id, role, teacher);
  });
}

ClientSet make_transcript_clients(const PipelineConfig& config, const fs::path& dir) {
  return build_clients(config, [&](const std::string& id, SyntheticRole, int) -> std::shared_ptr<ModelClient> {
    const fs::path file = dir / (id + ".jsonl");
    if (!fs::exists(file)) throw PreconditionError("no transcript for endpoint '" + id + "' in " + dir.string());
    const auto rows = read_jsonl(file);
    const std::string model = rows.empty() ? id : rows.front().value("model", id);
    return std::make_shared<TranscriptClient>(id, model, file);
  });
}

ClientSet with_cache(const ClientSet& clients, std::shared_ptr<ResponseCache> cache) {
  return map_clients(clients, [&](const std::shared_ptr<ModelClient>& c) -> std::shared_ptr<ModelClient> {
    return std::make_shared<CachingClient>(c, cache);
  });
}

ClientSet with_transcript_recording(const ClientSet& clients, const fs::path& dir) {
  fs::create_directories(dir);
  std::map<std::string, std::shared_ptr<JsonlAppender>> files;
  return map_clients(clients, [&](const std::shared_ptr<ModelClient>& c) -> std::shared_ptr<ModelClient> {
    auto& f = files[c->endpoint_id()];
    if (!f) f = std::make_shared<JsonlAppender>(dir / (c->endpoint_id() + ".jsonl"));
    return std::make_shared<TranscriptRecorder>(c, f);
  });
}

fs::path Workspace::done_marker(Stage s) const { return state_dir() / (std::string(to_string(s)) + ".done"); }

std::vector<fs::path> Workspace::outputs(Stage s) const {
  switch (s) {
    case Stage::ingest: return {manifest()};
    case Stage::propose: return {proposals()};
    case Stage::filter: return {filtered()};
    case Stage::crop: return {crops(), crops_dir()};
    case Stage::questions: return {questions()};
    case Stage::answers: return {answers()};
    case Stage::consensus: return {qa()};
    case Stage::ground: return {grounded(), render_dir()};
    case Stage::difficulty: return {difficulty()};
    case Stage::emit: return {dataset_dir()};
    case Stage::bench: return {bench_journal(), bench_dir()};
  }
  return {};
}

std::vector<Stage> prerequisites(Stage s) {
  const std::size_t end = s == Stage::bench ? index_of(Stage::consensus) + 1 : index_of(s);
  return {kStages.begin(), kStages.begin() + static_cast<std::ptrdiff_t>(end)};
}

namespace {

bool depends_on(Stage later, Stage earlier) {
  const auto pre = prerequisites(later);
  return std::find(pre.begin(), pre.end(), earlier) != pre.end();
}

/// Rows of a per-record journal keyed by id. Surviving rows of an interrupted
/// run are rewritten cleanly before new rows are appended.
class Journal {
 public:
  Journal(fs::path path, std::string key, bool resume) : path_(std::move(path)), key_(std::move(key)) {
    if (resume && fs::exists(path_)) {
      for (auto& row : read_jsonl(path_, true)) rows_.insert_or_assign(row.at(key_).get<std::string>(), row);
    }
    std::vector<json> keep;
    for (const auto& [id, row] : rows_) keep.push_back(row);
    write_jsonl(path_, keep);
    out_ = std::make_unique<JsonlAppender>(path_);
  }

  bool contains(const std::string& id) const {
    std::lock_guard lock(mu_);
    return rows_.contains(id);
  }

  void add(json row) {
    out_->append(row);
    std::lock_guard lock(mu_);
    rows_.insert_or_assign(row.at(key_).get<std::string>(), std::move(row));
  }

  /// Rewrites the journal sorted by id and returns the rows in that order.
  std::vector<json> finish() {
    out_.reset();
    std::vector<json> rows;
    for (const auto& [id, row] : rows_) rows.push_back(row);
    write_jsonl(path_, rows);
    return rows;
  }

 private:
  fs::path path_;
  std::string key_;
  mutable std::mutex mu_;
  std::map<std::string, json> rows_;
  std::unique_ptr<JsonlAppender> out_;
};

std::vector<json> read_rows(const fs::path& path) { return fs::exists(path) ? read_jsonl(path) : std::vector<json>{}; }

json to_json(const ProposalOutcome& o) {
  json props = json::array();
  for (const auto& p : o.proposals) props.push_back(to_json(p));
  return {{"image_id", o.image_id},
          {"proposals", props},
          {"raw_responses", o.raw_responses},
          {"failed", o.failed},
          {"error", o.error},
          {"dropped_degenerate", o.dropped_degenerate},
          {"dropped_small", o.dropped_small}};
}

class Runner {
 public:
  Runner(const PipelineConfig& config, const ClientSet& clients, bool resume)
      : config_(config), clients_(clients), ws_{config.work_dir}, checksum_(config_checksum(config)), resume_(resume) {}

  json run(Stage s) {
    switch (s) {
      case Stage::ingest: return ingest();
      case Stage::propose: return propose();
      case Stage::filter: return filter();
      case Stage::crop: return crop();
      case Stage::questions: return questions();
      case Stage::answers: return answers();
      case Stage::consensus: return consensus_stage();
      case Stage::ground: return ground();
      case Stage::difficulty: return difficulty();
      case Stage::emit: return emit();
      case Stage::bench: return bench();
    }
    return {};
  }

  const Workspace& workspace() const { return ws_; }
  const std::string& checksum() const { return checksum_; }

 private:
  template <typename T, typename Fn>
  void for_each_record(std::string_view stage, const std::vector<T>& todo, Fn&& fn) {
    std::mutex mu;
    std::vector<std::string> failures;
    parallel_for(todo.size(), config_.concurrency, [&](std::size_t i) {
      try {
        fn(todo[i]);
      } catch (const TransportError& e) {
        std::lock_guard lock(mu);
        failures.push_back(e.what());
      }
    });
    if (!failures.empty()) {
      std::sort(failures.begin(), failures.end());
      throw TransportError(std::string(stage) + ": " + std::to_string(failures.size()) +
                               " record(s) deferred after transport failures; first: " + failures.front(),
                           0, true);
    }
  }

  Manifest manifest() const { return read_manifest(ws_.manifest()); }

  std::map<std::string, RegionProposal> filtered_by_box() const {
    std::map<std::string, RegionProposal> out;
    for (const auto& row : read_rows(ws_.filtered())) {
      auto p = region_proposal_from_json(row);
      out.emplace(p.box_id, std::move(p));
    }
    return out;
  }

  std::map<std::string, CropSpec> crops_by_box() const {
    std::map<std::string, CropSpec> out;
    for (const auto& row : read_rows(ws_.crops())) {
      auto c = crop_spec_from_json(row);
      out.emplace(c.box_id, std::move(c));
    }
    return out;
  }

  std::vector<SynthesizedQA> accepted_qa(Partition partition) const {
    const Manifest m = manifest();
    const auto props = filtered_by_box();
    std::vector<SynthesizedQA> out;
    for (const auto& row : read_rows(ws_.qa())) {
      auto qa = synthesized_qa_from_json(row);
      if (!qa.consensus.accepted) continue;
      const auto* entry = m.find(props.at(qa.box_id).image_id);
      if (entry && entry->partition == partition) out.push_back(std::move(qa));
    }
    return out;
  }

  json ingest() {
    Manifest merged;
    std::set<std::string> seen;
    json totals = {{"candidates", 0}, {"below_min_dim", 0}, {"duplicates", 0}, {"unreadable", 0}};
    for (const auto& root : config_.corpus_roots) {
      IngestResult r;
      try {
        r = ingest_images(root, {config_.min_dim, "", config_.concurrency});
      } catch (const EmptyCorpusError& e) {
        if (e.had_candidates()) throw StageError(std::string("ingest: ") + e.what());
        spdlog::warn("ingest: no image files under {}", root.string());
        continue;
      }
      for (const auto& w : r.warnings) spdlog::warn("ingest: {}: {}", w.path, w.reason);
      totals["candidates"] = totals["candidates"].get<std::size_t>() + r.candidates;
      totals["below_min_dim"] = totals["below_min_dim"].get<std::size_t>() + r.below_min_dim;
      totals["duplicates"] = totals["duplicates"].get<std::size_t>() + r.duplicates;
      totals["unreadable"] = totals["unreadable"].get<std::size_t>() + r.warnings.size();
      for (auto& e : r.manifest.entries) {
        if (seen.insert(e.record.content_hash).second) {
          merged.entries.push_back(std::move(e));
        } else {
          totals["duplicates"] = totals["duplicates"].get<std::size_t>() + 1;
        }
      }
    }
    std::sort(merged.entries.begin(), merged.entries.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) { return a.record.content_hash < b.record.content_hash; });
    merged = split_partitions(std::move(merged), config_.bench_fraction, config_.seed);
    check_no_leakage(merged);
    write_manifest(ws_.manifest(), merged);
    totals["images"] = merged.entries.size();
    totals["train"] = merged.count(Partition::train);
    totals["bench"] = merged.count(Partition::bench);
    return totals;
  }

  json propose() {
    const Manifest m = manifest();
    Journal journal(ws_.proposals(), "image_id", resume_);
    std::vector<ImageRecord> todo;
    for (const auto& e : m.entries) {
      if (!journal.contains(e.record.image_id)) todo.push_back(e.record);
    }
    std::unique_ptr<RegionProposer> proposer;
    if (!config_.direct_synthesis) {
      if (config_.proposer == ProposerKind::annotations) {
        proposer = std::make_unique<AnnotationProposer>(config_.annotations);
      } else {
        proposer = std::make_unique<InventoryProposer>(clients_.inventory, clients_.segmenter, config_.prompts,
                                                       config_.max_labels);
      }
    }
    for_each_record("propose", todo, [&](const ImageRecord& img) {
      ProposalOutcome o;
      if (config_.direct_synthesis) {
        o.image_id = img.image_id;
        o.proposals.push_back({img.image_id + "-b0", img.image_id, PixelBox{0, 0, img.width, img.height}, "", 1.0});
      } else {
        o = propose_regions(img, *proposer, {config_.min_box_side});
        if (o.failed) spdlog::warn("propose: {}: {}", img.image_id, o.error);
      }
      journal.add(to_json(o));
    });
    std::size_t failed = 0, boxes = 0, degenerate = 0, small = 0;
    for (const auto& row : journal.finish()) {
      failed += row.at("failed").get<bool>() ? 1 : 0;
      boxes += row.at("proposals").size();
      degenerate += row.at("dropped_degenerate").get<std::size_t>();
      small += row.at("dropped_small").get<std::size_t>();
    }
    return {{"images", m.entries.size()},
            {"failed_images", failed},
            {"proposals", boxes},
            {"dropped_degenerate", degenerate},
            {"dropped_small", small}};
  }

  json filter() {
    std::vector<RegionProposal> all;
    for (const auto& row : read_rows(ws_.proposals())) {
      for (const auto& p : row.at("proposals")) all.push_back(region_proposal_from_json(p));
    }
    const auto sparse = config_.direct_synthesis ? all : sparsity_filter(all, config_.tau);
    const auto kept = cap_per_image(sparse, config_.proposals_cap);
    std::vector<json> rows;
    for (const auto& p : kept) rows.push_back(to_json(p));
    write_jsonl(ws_.filtered(), rows);
    return {{"input", all.size()}, {"sparse", sparse.size()}, {"kept", kept.size()}};
  }

  json crop() {
    const Manifest m = manifest();
    Journal journal(ws_.crops(), "box_id", resume_);
    std::vector<RegionProposal> todo;
    for (const auto& [id, p] : filtered_by_box()) {
      if (!journal.contains(id)) todo.push_back(p);
    }
    const double scale = config_.direct_synthesis ? 1.0 : config_.scale_factor;
    for_each_record("crop", todo, [&](const RegionProposal& p) {
      const auto* entry = m.find(p.image_id);
      if (!entry) throw DataError("crop: proposal " + p.box_id + " names unknown image " + p.image_id);
      journal.add(to_json(crop_region(entry->record, p.bbox, scale, ws_.crops_dir(), p.box_id)));
    });
    return {{"crops", journal.finish().size()}};
  }

  json questions() {
    Journal journal(ws_.questions(), "box_id", resume_);
    std::vector<CropSpec> todo;
    for (const auto& [id, c] : crops_by_box()) {
      if (!journal.contains(id)) todo.push_back(c);
    }
    for_each_record("questions", todo, [&](const CropSpec& c) {
      QuestionOutcome o = generate_questions(c, *clients_.generator, config_.prompts, config_.questions_k);
      if (o.failed) spdlog::warn("questions: {}: {}", c.box_id, o.error);
      journal.add({{"box_id", c.box_id},
                   {"questions", o.questions},
                   {"raw_responses", o.raw_responses},
                   {"failed", o.failed},
                   {"error", o.error}});
    });
    std::size_t failed = 0, count = 0;
    const auto rows = journal.finish();
    for (const auto& row : rows) {
      failed += row.at("failed").get<bool>() ? 1 : 0;
      count += row.at("questions").size();
    }
    return {{"crops", rows.size()}, {"failed_crops", failed}, {"questions", count}};
  }

  json answers() {
    const auto crops = crops_by_box();
    Journal journal(ws_.answers(), "qa_id", resume_);
    std::vector<SynthesizedQA> todo;
    for (const auto& row : read_rows(ws_.questions())) {
      const auto box_id = row.at("box_id").get<std::string>();
      const auto qs = row.at("questions").get<std::vector<std::string>>();
      for (std::size_t i = 0; i < qs.size(); ++i) {
        SynthesizedQA qa{make_qa_id(box_id, i), box_id, qs[i], {}, {}};
        if (!journal.contains(qa.qa_id)) todo.push_back(std::move(qa));
      }
    }
    const DecodeParams params{config_.teacher_temperature, 1024, std::nullopt};
    for_each_record("answers", todo, [&](SynthesizedQA qa) {
      qa.answers = sample_answers(crops.at(qa.box_id), qa.question, clients_.teachers, config_.samples_per_teacher,
                                  config_.prompts, params);
      journal.add(to_json(qa));
    });
    const auto rows = journal.finish();
    return {{"qa", rows.size()}, {"samples_per_qa", clients_.teachers.size() * config_.samples_per_teacher}};
  }

  json consensus_stage() {
    std::vector<json> rows;
    std::size_t accepted = 0;
    for (const auto& row : read_rows(ws_.answers())) {
      SynthesizedQA qa = synthesized_qa_from_json(row);
      qa.consensus = consensus(qa.answers, config_.consensus_threshold);
      accepted += qa.consensus.accepted ? 1 : 0;
      rows.push_back(to_json(qa));
    }
    write_jsonl(ws_.qa(), rows);
    return {{"qa", rows.size()}, {"accepted", accepted}, {"rejected", rows.size() - accepted}};
  }

  json ground() {
    for (const auto& p : ws_.outputs(Stage::ground)) fs::remove_all(p);
    const Manifest m = manifest();
    const auto props = filtered_by_box();
    const auto qas = accepted_qa(Partition::train);
    std::vector<AugmentedSample> samples(qas.size());
    parallel_for(qas.size(), config_.concurrency, [&](std::size_t i) {
      const SynthesizedQA& qa = qas[i];
      const RegionProposal& p = props.at(qa.box_id);
      samples[i] = ground_to_full(m.find(p.image_id)->record, p.bbox, qa.question, trim(*qa.consensus.label),
                                  config_.variant, qa.qa_id, ws_.render_dir(), config_.grounding);
    });
    std::sort(samples.begin(), samples.end(),
              [](const AugmentedSample& a, const AugmentedSample& b) { return a.sample_id < b.sample_id; });
    std::vector<json> rows;
    for (const auto& s : samples) rows.push_back(to_json(s));
    write_jsonl(ws_.grounded(), rows);
    return {{"samples", rows.size()}, {"variant", to_string(config_.variant)}};
  }

  json difficulty() {
    Journal journal(ws_.difficulty(), "sample_id", resume_);
    std::vector<AugmentedSample> todo;
    for (const auto& row : read_rows(ws_.grounded())) {
      auto s = augmented_sample_from_json(row);
      if (!journal.contains(s.sample_id)) todo.push_back(std::move(s));
    }
    DifficultyOptions opts;
    opts.trials = config_.trials;
    opts.max_correct = config_.max_correct;
    opts.student_params = {config_.student_temperature, 1024, std::nullopt};
    for_each_record("difficulty", todo, [&](const AugmentedSample& s) {
      try {
        const DifficultyVerdict v =
            difficulty_filter(s, *clients_.student, clients_.judge.get(), config_.prompts, opts);
        journal.add({{"sample_id", s.sample_id}, {"verdict", to_json(v)}});
      } catch (const JudgeError& e) {
        spdlog::warn("difficulty: {}: {}", s.sample_id, e.what());
        journal.add({{"sample_id", s.sample_id}, {"error", e.what()}});
      }
    });
    std::size_t kept = 0, judge_errors = 0;
    std::map<int, std::size_t> by_correct;
    const auto rows = journal.finish();
    for (const auto& row : rows) {
      if (!row.contains("verdict")) {
        ++judge_errors;
        continue;
      }
      const auto v = difficulty_verdict_from_json(row.at("verdict"));
      kept += v.kept ? 1 : 0;
      ++by_correct[v.correct];
    }
    json hist = json::object();
    for (const auto& [c, n] : by_correct) hist[std::to_string(c)] = n;
    return {{"samples", rows.size()}, {"kept", kept}, {"judge_errors", judge_errors}, {"correct_histogram", hist}};
  }

  json emit() {
    std::set<std::string> kept;
    for (const auto& row : read_rows(ws_.difficulty())) {
      if (row.contains("verdict") && row.at("verdict").at("kept").get<bool>()) {
        kept.insert(row.at("sample_id").get<std::string>());
      }
    }
    std::vector<AugmentedSample> samples;
    for (const auto& row : read_rows(ws_.grounded())) {
      auto s = augmented_sample_from_json(row);
      if (kept.contains(s.sample_id)) samples.push_back(std::move(s));
    }
    return to_json(emit_dataset(samples, ws_.dataset_dir(), checksum_));
  }

  json bench() {
    const Manifest m = manifest();
    const auto props = filtered_by_box();
    Journal journal(ws_.bench_journal(), "item_id", resume_);
    std::vector<SynthesizedQA> todo;
    for (auto& qa : accepted_qa(Partition::bench)) {
      if (!journal.contains(qa.qa_id)) todo.push_back(std::move(qa));
    }
    const fs::path images = ws_.bench_dir() / "images";
    const BenchBuildOptions opts{config_.scale_factor, config_.mcq_fraction};
    for_each_record("bench", todo, [&](const SynthesizedQA& qa) {
      const RegionProposal& p = props.at(qa.box_id);
      BenchItem item = build_bench_item(*m.find(p.image_id), p, qa, images, opts);
      item.answer = trim(item.answer);
      const std::string crop_bytes = read_file(item.crop_image);
      bool fallback = false;
      if (select_format(item.item_id, config_.mcq_fraction) == AnswerFormat::mcq) {
        if (auto mcq = make_mcq(item.item_id, item.question, item.answer, crop_bytes, *clients_.distractor,
                                config_.prompts)) {
          item.format = AnswerFormat::mcq;
          item.options = mcq->options;
          item.answer = mcq->gold();
        } else {
          fallback = true;
        }
      }
      if (auto dim = classify_dimension(item.question, crop_bytes, *clients_.classifier, config_.prompts)) {
        item.dimension = *dim;
      } else {
        item.flagged = true;
      }
      json row = to_json(item);
      row["mcq_fallback"] = fallback;
      journal.add(std::move(row));
    });
    std::vector<BenchItem> items;
    std::size_t mcq = 0, fallback = 0, flagged = 0;
    for (const auto& row : journal.finish()) {
      items.push_back(bench_item_from_json(row));
      mcq += items.back().format == AnswerFormat::mcq ? 1 : 0;
      flagged += items.back().flagged ? 1 : 0;
      fallback += row.value("mcq_fallback", false) ? 1 : 0;
    }
    write_bench(ws_.bench_file(), items);
    json dims = json::object();
    for (auto d : kDimensions) {
      dims[std::string(to_string(d))] =
          std::count_if(items.begin(), items.end(), [d](const BenchItem& i) { return i.dimension == d; });
    }
    return {{"items", items.size()}, {"mcq", mcq},         {"open", items.size() - mcq},
            {"mcq_fallback", fallback}, {"flagged", flagged}, {"dimensions", dims}};
  }

  const PipelineConfig& config_;
  const ClientSet& clients_;
  Workspace ws_;
  std::string checksum_;
  bool resume_;
};

std::optional<json> read_marker(const Workspace& ws, Stage s) {
  const fs::path p = ws.done_marker(s);
  if (!fs::exists(p)) return std::nullopt;
  return json::parse(read_file(p));
}

void clear_stage(const Workspace& ws, Stage s, bool keep_outputs) {
  fs::remove(ws.done_marker(s));
  if (keep_outputs) return;
  for (const auto& p : ws.outputs(s)) fs::remove_all(p);
}

}  // namespace

RunReport run_pipeline(const PipelineConfig& config, const ClientSet& clients, const RunOptions& options) {
  validate(config);
  if (index_of(options.from) > index_of(options.to)) throw PreconditionError("stage range is empty");
  Runner runner(config, clients, options.resume);
  const Workspace& ws = runner.workspace();
  fs::create_directories(ws.state_dir());

  auto check_marker = [&](Stage s) -> bool {
    const auto marker = read_marker(ws, s);
    if (!marker) return false;
    if (marker->at("config_checksum").get<std::string>() != runner.checksum()) {
      throw StageError("stage " + std::string(to_string(s)) +
                       " was produced with a different configuration; rerun it without --resume");
    }
    return true;
  };

  for (Stage p : prerequisites(options.from)) {
    if (!check_marker(p)) throw StageError("stage " + std::string(to_string(p)) + " has not completed");
  }

  auto invalidate_dependents = [&](Stage s) {
    for (Stage t : kStages) {
      if (depends_on(t, s)) clear_stage(ws, t, false);
    }
  };

  if (!options.resume) {
    for (std::size_t i = index_of(options.from); i <= index_of(options.to); ++i) {
      clear_stage(ws, kStages[i], false);
      invalidate_dependents(kStages[i]);
    }
  }

  RunReport report;
  for (std::size_t i = index_of(options.from); i <= index_of(options.to); ++i) {
    const Stage s = kStages[i];
    if (options.resume && check_marker(s)) {
      report.skipped.push_back(s);
      continue;
    }
    invalidate_dependents(s);
    spdlog::info("stage {}: running", to_string(s));
    json summary = runner.run(s);
    spdlog::info("stage {}: {}", to_string(s), summary.dump());
    write_file_atomic(ws.done_marker(s),
                      json{{"stage", to_string(s)}, {"config_checksum", runner.checksum()}, {"summary", summary}}.dump(2) +
                          "\n");
    report.executed.push_back(s);
  }

  report.summary = json::object();
  for (Stage s : kStages) {
    if (auto marker = read_marker(ws, s)) report.summary[std::string(to_string(s))] = marker->at("summary");
  }
  write_file_atomic(ws.run_report(),
                    json{{"config_checksum", runner.checksum()}, {"stages", report.summary}}.dump(2) + "\n");
  return report;
}

std::map<std::string, std::vector<EvalRecord>> run_evaluation(const PipelineConfig& config, const ClientSet& clients,
                                                              const fs::path& bench_file) {
  std::vector<BenchItem> promoted;
  for (auto& item : read_bench(bench_file)) {
    if (item.status == ItemStatus::promoted) promoted.push_back(std::move(item));
  }
  if (promoted.empty()) throw StageError("nothing promoted in " + bench_file.string() + "; review items first");
  const Workspace ws{config.work_dir};
  EvalOptions opts;
  opts.concurrency = config.concurrency;
  std::map<std::string, std::vector<EvalRecord>> out;
  for (const auto& model_id : config.roles.eval_models) {
    const auto it = clients.evaluators.find(model_id);
    if (it == clients.evaluators.end()) throw PreconditionError("no client for eval model '" + model_id + "'");
    auto records = run_dual_view(promoted, *it->second, clients.judge.get(), config.prompts, opts);
    for (auto& r : records) r.model_id = model_id;
    std::vector<json> rows;
    for (const auto& r : records) rows.push_back(to_json(r));
    write_jsonl(ws.eval_dir() / (model_id + ".jsonl"), rows);
    out.emplace(model_id, std::move(records));
  }
  return out;
}

std::vector<GapReport> build_gap_report(const PipelineConfig& config, const fs::path& bench_file) {
  const Workspace ws{config.work_dir};
  const auto items = read_bench(bench_file);
  std::vector<GapReport> reports;
  for (const auto& model_id : config.roles.eval_models) {
    const fs::path file = ws.eval_dir() / (model_id + ".jsonl");
    if (!fs::exists(file)) continue;
    std::vector<EvalRecord> records;
    for (const auto& row : read_jsonl(file)) records.push_back(eval_record_from_json(row));
    GapReport r = compute_gap(records, items);
    r.model_id = model_id;
    reports.push_back(std::move(r));
  }
  if (reports.empty()) throw StageError("no evaluation records under " + ws.eval_dir().string() + "; run eval first");
  json arr = json::array();
  for (const auto& r : reports) arr.push_back(to_json(r));
  write_file_atomic(ws.reports_dir() / "gap.json", arr.dump(2) + "\n");
  write_file_atomic(ws.reports_dir() / "gap.txt", format_gap_table(reports));
  return reports;
}

}  // namespace r2i
