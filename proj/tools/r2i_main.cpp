#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "r2i/attention.hpp"
#include "r2i/bench.hpp"
#include "r2i/config.hpp"
#include "r2i/error.hpp"
#include "r2i/image.hpp"
#include "r2i/io.hpp"
#include "r2i/pipeline.hpp"
#include "r2i/review.hpp"

namespace {

using namespace r2i;

enum Exit { kOk = 0, kUsage = 1, kStageFatal = 2, kTransport = 3 };

struct Globals {
  std::string config_path;
  bool mock = false;
  bool resume = false;
  std::optional<std::uint64_t> seed;
  std::string work_dir;
  std::vector<std::string> corpus;
  std::string transcripts;
  std::string record_transcripts;
  std::optional<std::size_t> concurrency;
  bool no_cache = false;
  bool verbose = false;
  bool quiet = false;
};

PipelineConfig make_config(const Globals& g) {
  PipelineConfig c = g.config_path.empty() ? default_config() : load_config(g.config_path);
  if (g.seed) c.seed = *g.seed;
  if (!g.work_dir.empty()) c.work_dir = g.work_dir;
  if (!g.corpus.empty()) c.corpus_roots.assign(g.corpus.begin(), g.corpus.end());
  if (g.concurrency) c.concurrency = *g.concurrency;
  if (g.no_cache) c.cache = false;
  validate(c);
  return c;
}

ClientSet make_clients(const Globals& g, const PipelineConfig& c) {
  ClientSet clients = g.mock                   ? make_synthetic_clients(c)
                      : !g.transcripts.empty() ? make_transcript_clients(c, g.transcripts)
                                               : make_remote_clients(c);
  if (c.cache) clients = with_cache(clients, std::make_shared<ResponseCache>(Workspace{c.work_dir}.cache_dir()));
  if (!g.record_transcripts.empty()) clients = with_transcript_recording(clients, g.record_transcripts);
  return clients;
}

fs::path bench_or_default(const std::string& bench, const PipelineConfig& c) {
  return bench.empty() ? Workspace{c.work_dir}.bench_file() : fs::path(bench);
}

bool calls_models(Stage from, Stage to) {
  for (Stage s : {Stage::propose, Stage::questions, Stage::answers, Stage::difficulty, Stage::bench}) {
    if (s >= from && s <= to) return true;
  }
  return false;
}

int run_stages(const Globals& g, const PipelineConfig& c, Stage from, Stage to) {
  const ClientSet clients = calls_models(from, to) ? make_clients(g, c) : ClientSet{};
  const RunReport report = run_pipeline(c, clients, {from, to, g.resume});
  std::cout << report.summary.dump(2) << "\n";
  return kOk;
}

int review_serve(const PipelineConfig& c, const std::string& bench, const std::string& host, int port) {
  if (c.review_tokens.empty()) throw PreconditionError("no review tokens configured (bench.review_tokens)");
  auto store = std::make_shared<ReviewStore>(bench_or_default(bench, c), c.promotion);
  ReviewServer server(store, c.review_tokens);
  std::cout << "serving review API on " << host << ":" << port << std::endl;
  server.run(host, port);
  return kOk;
}

int attn_coverage(const PipelineConfig& c, const std::string& bundles_dir, const std::string& bench,
                  const std::vector<std::string>& baselines) {
  std::map<std::string, BenchItem> items;
  const fs::path bench_file = bench_or_default(bench, c);
  if (fs::exists(bench_file)) {
    for (auto& item : read_bench(bench_file)) items.emplace(item.item_id, std::move(item));
  }
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(bundles_dir)) {
    if (e.is_directory() && fs::exists(e.path() / "metadata.json")) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw StageError("no attention bundles under " + bundles_dir);

  const CoverageOptions opts{c.m_star, c.k_star, c.epsilon};
  std::vector<CoverageRecord> records;
  std::vector<json> rows;
  for (const auto& dir : dirs) {
    const AttentionBundle b = load_bundle(dir);
    std::optional<PixelBox> box = b.bbox;
    std::optional<int> w = b.image_width, h = b.image_height;
    if (auto it = items.find(b.item_id); it != items.end()) {
      if (!box) box = it->second.bbox;
      if (!w || !h) {
        const ImageSize size = probe_size(read_file(it->second.full_image));
        w = size.width;
        h = size.height;
      }
    }
    if (!box || !w || !h) throw DataError(dir.string() + ": no bbox or image size for item " + b.item_id);
    records.push_back(bundle_coverage(b, *box, *w, *h, opts));
    rows.push_back(to_json(records.back()));
  }
  std::map<std::string, std::string> base;
  for (const auto& pair : baselines) {
    const auto eq = pair.find('=');
    if (eq == std::string::npos) throw PreconditionError("--baseline expects model=baseline, got " + pair);
    base[pair.substr(0, eq)] = pair.substr(eq + 1);
  }
  const auto summaries = summarize_coverage(records);
  const std::string table = format_coverage_table(summaries, base);
  const Workspace ws{c.work_dir};
  write_jsonl(ws.reports_dir() / "coverage.jsonl", rows);
  write_file_atomic(ws.reports_dir() / "coverage.txt", table);
  std::cout << table;
  return kOk;
}

int report(const PipelineConfig& c, const std::string& bench, bool as_json) {
  const auto reports = build_gap_report(c, bench_or_default(bench, c));
  if (as_json) {
    json arr = json::array();
    for (const auto& r : reports) arr.push_back(to_json(r));
    std::cout << arr.dump(2) << "\n";
  } else {
    std::cout << format_gap_table(reports);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Region-to-image distillation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config_path, "YAML config file")->check(CLI::ExistingFile);
  app.add_flag("--mock", g.mock, "Use deterministic in-process model clients");
  app.add_flag("--resume", g.resume, "Continue from completed stages and journaled records");
  app.add_option("--seed", g.seed, "Override the config seed");
  app.add_option("--work-dir", g.work_dir, "Override the work directory");
  app.add_option("--corpus", g.corpus, "Override the corpus roots");
  app.add_option("--transcripts", g.transcripts, "Replay recorded transcripts from this directory")
      ->check(CLI::ExistingDirectory);
  app.add_option("--record-transcripts", g.record_transcripts, "Record every response into this directory");
  app.add_option("--concurrency", g.concurrency, "Worker threads per stage")->check(CLI::PositiveNumber);
  app.add_flag("--no-cache", g.no_cache, "Disable the response cache");
  app.add_flag("-v,--verbose", g.verbose, "Debug logging");
  app.add_flag("-q,--quiet", g.quiet, "Warnings and errors only");

  struct StageCmd {
    const char* name;
    const char* help;
    Stage from, to;
  };
  const StageCmd stage_cmds[] = {
      {"ingest", "Scan corpus roots, deduplicate and split partitions", Stage::ingest, Stage::ingest},
      {"propose", "Propose regions and apply the sparsity filter", Stage::propose, Stage::filter},
      {"synth", "Crop regions, generate questions, sample answers, vote", Stage::crop, Stage::consensus},
      {"distill", "Ground QA onto full images and apply the difficulty filter", Stage::ground, Stage::difficulty},
      {"emit", "Write the training dataset", Stage::emit, Stage::emit},
      {"bench-build", "Build pending benchmark items from held-out images", Stage::bench, Stage::bench},
      {"all", "Run every stage", Stage::ingest, Stage::bench},
  };
  std::map<CLI::App*, const StageCmd*> stage_apps;
  for (const auto& cmd : stage_cmds) stage_apps[app.add_subcommand(cmd.name, cmd.help)] = &cmd;
  auto* to_opt = app.get_subcommand("all")->add_option("--stop-after", "Last stage to run");

  std::string bench, host = "127.0.0.1", bundles;
  int port = 8080;
  bool as_json = false;
  std::vector<std::string> baselines;
  auto* serve = app.add_subcommand("review-serve", "Serve the review API over the bench file");
  serve->add_option("--bench", bench, "Bench file");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port");
  auto* eval = app.add_subcommand("eval", "Evaluate promoted items on both views");
  eval->add_option("--bench", bench, "Bench file");
  auto* attn = app.add_subcommand("attn-coverage", "Attention coverage over bundle directories");
  attn->add_option("--bundles", bundles, "Directory of attention bundles")->required()->check(CLI::ExistingDirectory);
  attn->add_option("--bench", bench, "Bench file for item boxes");
  attn->add_option("--baseline", baselines, "model=baseline pairs for signed differences");
  auto* rep = app.add_subcommand("report", "Zooming-gap table from evaluation records");
  rep->add_option("--bench", bench, "Bench file");
  rep->add_flag("--json", as_json, "Print JSON instead of the table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  spdlog::set_default_logger(spdlog::stderr_color_mt("r2i"));
  spdlog::set_level(g.verbose ? spdlog::level::debug : g.quiet ? spdlog::level::warn : spdlog::level::info);

  PipelineConfig config;
  try {
    config = make_config(g);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    if (auto it = stage_apps.find(sub); it != stage_apps.end()) {
      Stage to = it->second->to;
      if (*to_opt) to = stage_from_string(to_opt->as<std::string>());
      return run_stages(g, config, it->second->from, to);
    }
    if (sub == serve) return review_serve(config, bench, host, port);
    if (sub == eval) {
      const auto results = run_evaluation(config, make_clients(g, config), bench_or_default(bench, config));
      for (const auto& [model, records] : results) std::cout << model << ": " << records.size() << " records\n";
      return kOk;
    }
    if (sub == attn) return attn_coverage(config, bundles, bench, baselines);
    if (sub == rep) return report(config, bench, as_json);
  } catch (const TransportError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kTransport;
  } catch (const PreconditionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kStageFatal;
  }
  return kUsage;
}
