#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "r2i/geometry.hpp"

namespace r2i {

class ModelClient;
struct PromptTemplates;

struct ImageRecord {
  std::string image_id;  // first 16 hex digits of content_hash
  std::string path;
  int width = 0;
  int height = 0;
  std::string source;
  std::string content_hash;  // SHA-256 of the file bytes
  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

enum class Partition { unassigned, train, bench };

std::string_view to_string(Partition p);
Partition partition_from_string(std::string_view s);

struct ManifestEntry {
  ImageRecord record;
  Partition partition = Partition::unassigned;
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// Image records ordered by content_hash; at most one record per hash.
struct Manifest {
  std::vector<ManifestEntry> entries;

  const ManifestEntry* find(std::string_view image_id) const;
  std::size_t count(Partition p) const;
  friend bool operator==(const Manifest&, const Manifest&) = default;
};

nlohmann::json to_json(const ManifestEntry& e);
ManifestEntry manifest_entry_from_json(const nlohmann::json& j);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

struct IngestWarning {
  std::string path;
  std::string reason;
};

struct IngestResult {
  Manifest manifest;
  std::vector<IngestWarning> warnings;
  std::size_t candidates = 0;       // image files seen
  std::size_t below_min_dim = 0;
  std::size_t duplicates = 0;
};

struct IngestOptions {
  int min_dim = 800;
  std::string source;       // defaults to the root directory name
  std::size_t concurrency = 4;
};

/// Scans `root` recursively for .jpg/.jpeg/.png files, keeps those that decode
/// with min(width, height) >= min_dim, and collapses byte-identical files.
/// Unreadable files become warnings. Throws EmptyCorpusError when nothing survives.
IngestResult ingest_images(const std::filesystem::path& root, const IngestOptions& options);

/// Bench membership is a pure function of (content_hash, seed): a record goes
/// to bench iff its seeded hash draw in [0, 1) is below bench_fraction.
Manifest split_partitions(Manifest manifest, double bench_fraction, std::uint64_t seed);

/// Throws DataError if any content hash is in both partitions or repeats.
void check_no_leakage(const Manifest& manifest);

struct RegionProposal {
  std::string box_id;
  std::string image_id;
  PixelBox bbox;
  std::string label;
  double area_ratio = 0.0;
  friend bool operator==(const RegionProposal&, const RegionProposal&) = default;
};

nlohmann::json to_json(const RegionProposal& p);
RegionProposal region_proposal_from_json(const nlohmann::json& j);

/// A box as reported by a proposer, before clamping.
struct RawBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  std::string label;
};

struct ProposerOutput {
  std::vector<RawBox> boxes;
  std::vector<std::string> raw_responses;  // persisted for audit
};

/// Object-centric box source. Implementations may call remote models.
class RegionProposer {
 public:
  virtual ~RegionProposer() = default;
  virtual ProposerOutput propose(const ImageRecord& image, const std::string& image_bytes) = 0;
  virtual std::string name() const = 0;
};

/// Boxes from an existing annotation file (JSON lines of
/// {"image_id" or "file", "boxes": [{"label", "bbox": [x1, y1, x2, y2]}]}).
class AnnotationProposer final : public RegionProposer {
 public:
  explicit AnnotationProposer(const std::filesystem::path& annotations);
  ProposerOutput propose(const ImageRecord& image, const std::string& image_bytes) override;
  std::string name() const override { return "annotations"; }

 private:
  std::vector<nlohmann::json> rows_;
};

/// Two-step remote chain: an inventory model lists object names, then a
/// segmentation endpoint returns boxes per name. Both speak the chat contract.
class InventoryProposer final : public RegionProposer {
 public:
  InventoryProposer(std::shared_ptr<ModelClient> inventory, std::shared_ptr<ModelClient> segmenter,
                    const PromptTemplates& prompts, std::size_t max_labels = 16);
  ProposerOutput propose(const ImageRecord& image, const std::string& image_bytes) override;
  std::string name() const override { return "inventory"; }

 private:
  std::shared_ptr<ModelClient> inventory_;
  std::shared_ptr<ModelClient> segmenter_;
  std::string inventory_prompt_;
  std::string segment_template_;
  std::string json_retry_;
  std::size_t max_labels_;
};

/// Parses a JSON list of names (strings or {"name"/"label"}), tolerating code fences.
std::vector<std::string> parse_label_list(std::string_view response);

/// Parses a JSON list of {"bbox": [x1, y1, x2, y2]} (or bare 4-arrays).
std::vector<RawBox> parse_box_list(std::string_view response, std::string_view label);

struct ProposalOptions {
  int min_box_side = 16;
};

struct ProposalOutcome {
  std::string image_id;
  std::vector<RegionProposal> proposals;
  std::vector<std::string> raw_responses;
  bool failed = false;
  std::string error;
  std::size_t dropped_degenerate = 0;
  std::size_t dropped_small = 0;
};

/// Rounds and clamps proposer boxes to the image, drops empty labels,
/// degenerate boxes and boxes under min_box_side on either axis. Malformed
/// proposer output marks the outcome failed; transport errors propagate.
ProposalOutcome propose_regions(const ImageRecord& image, RegionProposer& proposer,
                                const ProposalOptions& options = {});

/// Clamp + round one raw box; nullopt when nothing of positive area remains.
std::optional<PixelBox> clamp_box(const RawBox& raw, int width, int height);

/// Keeps proposals with area_ratio < tau (strict), preserving order.
std::vector<RegionProposal> sparsity_filter(std::span<const RegionProposal> proposals, double tau);

/// Keeps at most `cap` proposals per image, first-come.
std::vector<RegionProposal> cap_per_image(std::span<const RegionProposal> proposals, std::size_t cap);

/// Strips ``` fences and returns the outermost [...] span of a model reply.
std::string extract_json_list(std::string_view response);

}  // namespace r2i
