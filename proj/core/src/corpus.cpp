#include "r2i/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "r2i/error.hpp"
#include "r2i/hash.hpp"
#include "r2i/image.hpp"
#include "r2i/io.hpp"
#include "r2i/parallel.hpp"

namespace r2i {

std::string_view to_string(Partition p) {
  switch (p) {
    case Partition::train: return "train";
    case Partition::bench: return "bench";
    case Partition::unassigned: break;
  }
  return "unassigned";
}

Partition partition_from_string(std::string_view s) {
  if (s == "train") return Partition::train;
  if (s == "bench") return Partition::bench;
  if (s == "unassigned") return Partition::unassigned;
  throw DataError("unknown partition: " + std::string(s));
}

const ManifestEntry* Manifest::find(std::string_view image_id) const {
  for (const auto& e : entries) {
    if (e.record.image_id == image_id) return &e;
  }
  return nullptr;
}

std::size_t Manifest::count(Partition p) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [p](const auto& e) { return e.partition == p; }));
}

json to_json(const ManifestEntry& e) {
  return {{"image_id", e.record.image_id}, {"path", e.record.path},           {"width", e.record.width},
          {"height", e.record.height},     {"source", e.record.source},       {"content_hash", e.record.content_hash},
          {"partition", to_string(e.partition)}};
}

ManifestEntry manifest_entry_from_json(const json& j) {
  ManifestEntry e;
  e.record.image_id = j.at("image_id").get<std::string>();
  e.record.path = j.at("path").get<std::string>();
  e.record.width = j.at("width").get<int>();
  e.record.height = j.at("height").get<int>();
  e.record.source = j.value("source", "");
  e.record.content_hash = j.at("content_hash").get<std::string>();
  e.partition = partition_from_string(j.value("partition", "unassigned"));
  if (e.record.width < 1 || e.record.height < 1) throw DataError("manifest: non-positive dimensions for " + e.record.image_id);
  return e;
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
  std::vector<json> rows;
  rows.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) rows.push_back(to_json(e));
  write_jsonl(path, rows);
}

Manifest read_manifest(const fs::path& path) {
  Manifest m;
  std::set<std::string> ids;
  for (const auto& row : read_jsonl(path)) {
    m.entries.push_back(manifest_entry_from_json(row));
    if (!ids.insert(m.entries.back().record.image_id).second) {
      throw DataError("manifest: duplicate image_id " + m.entries.back().record.image_id);
    }
  }
  return m;
}

namespace {

bool is_image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png";
}

struct Scanned {
  std::string hash;
  ImageSize size;
  std::string error;
};

}  // namespace

IngestResult ingest_images(const fs::path& root, const IngestOptions& options) {
  if (options.min_dim < 1) throw PreconditionError("min_dim must be >= 1");
  if (!fs::is_directory(root)) throw PreconditionError("corpus root is not a directory: " + root.string());

  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(root, fs::directory_options::follow_directory_symlink)) {
    if (entry.is_regular_file() && is_image_extension(entry.path())) files.push_back(entry.path().lexically_normal());
  }
  std::sort(files.begin(), files.end());

  std::vector<Scanned> scanned(files.size());
  parallel_for(files.size(), options.concurrency, [&](std::size_t i) {
    try {
      const std::string bytes = read_file(files[i]);
      const Image img = decode_image(bytes);
      scanned[i] = {sha256_hex(bytes), {img.width(), img.height()}, {}};
    } catch (const std::exception& e) {
      scanned[i].error = e.what();
    }
  });

  std::string source = options.source;
  if (source.empty()) {
    const fs::path norm = root.lexically_normal();
    source = norm.filename().empty() ? norm.parent_path().filename().string() : norm.filename().string();
  }

  IngestResult result;
  result.candidates = files.size();
  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const auto& s = scanned[i];
    if (!s.error.empty()) {
      spdlog::warn("ingest: skipping {}: {}", files[i].string(), s.error);
      result.warnings.push_back({files[i].string(), s.error});
      continue;
    }
    if (std::min(s.size.width, s.size.height) < options.min_dim) {
      ++result.below_min_dim;
      continue;
    }
    if (seen.contains(s.hash)) {
      ++result.duplicates;
      continue;
    }
    seen.emplace(s.hash, i);
    ManifestEntry e;
    e.record = {s.hash.substr(0, 16), files[i].string(), s.size.width, s.size.height, source, s.hash};
    result.manifest.entries.push_back(std::move(e));
  }
  std::sort(result.manifest.entries.begin(), result.manifest.entries.end(),
            [](const auto& a, const auto& b) { return a.record.content_hash < b.record.content_hash; });

  if (result.manifest.entries.empty()) {
    throw EmptyCorpusError("no usable images under " + root.string() + " (" + std::to_string(files.size()) +
                               " candidates, " + std::to_string(result.below_min_dim) + " below " +
                               std::to_string(options.min_dim) + " px, " + std::to_string(result.warnings.size()) +
                               " unreadable)",
                           !files.empty());
  }
  return result;
}

Manifest split_partitions(Manifest manifest, double bench_fraction, std::uint64_t seed) {
  if (!(bench_fraction >= 0.0 && bench_fraction < 1.0)) throw PreconditionError("bench_fraction must be in [0, 1)");
  for (auto& e : manifest.entries) {
    const double u = to_unit_interval(sha256_u64(std::to_string(seed) + ":" + e.record.content_hash));
    e.partition = u < bench_fraction ? Partition::bench : Partition::train;
  }
  return manifest;
}

void check_no_leakage(const Manifest& manifest) {
  std::set<std::string> train, bench, all;
  for (const auto& e : manifest.entries) {
    if (!all.insert(e.record.content_hash).second) throw DataError("manifest: duplicate content hash " + e.record.content_hash);
    if (e.partition == Partition::train) train.insert(e.record.content_hash);
    if (e.partition == Partition::bench) bench.insert(e.record.content_hash);
  }
  for (const auto& h : bench) {
    if (train.contains(h)) throw DataError("partition leakage: " + h + " in both train and bench");
  }
}

json to_json(const RegionProposal& p) {
  return {{"box_id", p.box_id}, {"image_id", p.image_id}, {"bbox", p.bbox}, {"label", p.label},
          {"area_ratio", p.area_ratio}};
}

RegionProposal region_proposal_from_json(const json& j) {
  RegionProposal p;
  p.box_id = j.at("box_id").get<std::string>();
  p.image_id = j.at("image_id").get<std::string>();
  p.bbox = j.at("bbox").get<PixelBox>();
  p.label = j.at("label").get<std::string>();
  p.area_ratio = j.at("area_ratio").get<double>();
  return p;
}

std::optional<PixelBox> clamp_box(const RawBox& raw, int width, int height) {
  for (double v : {raw.x1, raw.y1, raw.x2, raw.y2}) {
    if (!std::isfinite(v)) return std::nullopt;
  }
  auto round_clamp = [](double v, int hi) {
    const double r = std::floor(v + 0.5);
    return static_cast<int>(std::clamp(r, 0.0, static_cast<double>(hi)));
  };
  PixelBox b{round_clamp(std::min(raw.x1, raw.x2), width), round_clamp(std::min(raw.y1, raw.y2), height),
             round_clamp(std::max(raw.x1, raw.x2), width), round_clamp(std::max(raw.y1, raw.y2), height)};
  if (b.empty()) return std::nullopt;
  return b;
}

ProposalOutcome propose_regions(const ImageRecord& image, RegionProposer& proposer, const ProposalOptions& options) {
  ProposalOutcome out;
  out.image_id = image.image_id;
  ProposerOutput raw;
  try {
    raw = proposer.propose(image, read_file(image.path));
  } catch (const DataError& e) {
    out.failed = true;
    out.error = e.what();
    return out;
  }
  out.raw_responses = std::move(raw.raw_responses);
  for (std::size_t i = 0; i < raw.boxes.size(); ++i) {
    const RawBox& rb = raw.boxes[i];
    if (rb.label.empty()) {
      ++out.dropped_degenerate;
      continue;
    }
    const auto box = clamp_box(rb, image.width, image.height);
    if (!box) {
      ++out.dropped_degenerate;
      continue;
    }
    if (box->width() < options.min_box_side || box->height() < options.min_box_side) {
      ++out.dropped_small;
      continue;
    }
    out.proposals.push_back({image.image_id + "-b" + std::to_string(i), image.image_id, *box, rb.label,
                             area_ratio(*box, image.width, image.height)});
  }
  return out;
}

std::vector<RegionProposal> sparsity_filter(std::span<const RegionProposal> proposals, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw PreconditionError("tau must be in (0, 1]");
  std::vector<RegionProposal> kept;
  for (const auto& p : proposals) {
    if (p.area_ratio < tau) kept.push_back(p);
  }
  return kept;
}

std::vector<RegionProposal> cap_per_image(std::span<const RegionProposal> proposals, std::size_t cap) {
  std::unordered_map<std::string, std::size_t> counts;
  std::vector<RegionProposal> kept;
  for (const auto& p : proposals) {
    if (counts[p.image_id]++ < cap) kept.push_back(p);
  }
  return kept;
}

std::string extract_json_list(std::string_view response) {
  const std::size_t open = response.find('[');
  const std::size_t close = response.rfind(']');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
    throw DataError("no JSON list in model reply");
  }
  return std::string(response.substr(open, close - open + 1));
}

}  // namespace r2i
