#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "r2i/geometry.hpp"

namespace r2i {

/// Dense row-major tensor of doubles with an explicit shape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  double& at(std::initializer_list<std::size_t> index);
  double at(std::initializer_list<std::size_t> index) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

struct AttentionBundle {
  std::string model_id;
  std::string item_id;
  std::size_t grid_n = 0;
  std::size_t t_tokens = 0;
  std::size_t llm_layers = 0;
  std::size_t llm_heads = 0;
  std::size_t connector_layers = 1;
  std::size_t connector_heads = 1;
  Tensor a_st_q;                 // L x H x 1 x T
  Tensor a_st_qprime;            // L x H x 1 x T
  std::optional<Tensor> a_ti;    // Lc x Hc x T x N^2; absent means identity
  std::optional<int> image_width;
  std::optional<int> image_height;
  std::optional<PixelBox> bbox;

  bool identity_connector() const { return !a_ti.has_value(); }
};

/// Reads metadata.json and the raw float32 tensors of a bundle directory and
/// validates shapes, finiteness, non-negativity and row sums (1 +- 1e-3).
/// Errors name the offending tensor and index.
AttentionBundle load_bundle(const std::filesystem::path& dir);

/// Writes the directory format read by load_bundle (no validation).
void write_bundle(const std::filesystem::path& dir, const AttentionBundle& bundle);

/// Mean over axis 1 of an A x H x R x C tensor -> A x R x C.
Tensor head_average(const Tensor& t);

/// A_si[m, k] = a_st_hat[m] . a_ti_hat[k]  (L x 1 x T) x (Lc x T x N^2) -> L x Lc x 1 x N^2.
Tensor compose(const Tensor& a_st_hat, const Tensor& a_ti_hat);

/// Identity connector: A_si = a_st_hat reshaped to L x 1 x 1 x T.
Tensor compose_identity(const Tensor& a_st_hat);

/// Elementwise a / (b + epsilon). With epsilon = 0 a zero denominator is only
/// accepted over a zero numerator (giving 0).
Tensor relative_attention(const Tensor& a_si_q, const Tensor& a_si_qprime, double epsilon = 1e-6);

/// The (m_star, k_star) slice, 1-based, reshaped to an N x N map (row-major).
/// k_star defaults to the last connector layer.
Tensor select_layer(const Tensor& a_rel, std::size_t grid_n, std::size_t m_star,
                    std::optional<std::size_t> k_star = std::nullopt);

/// Row-major N x N mask: cell (i, j) is in when its pixel centre
/// ((j + 0.5) W / N, (i + 0.5) H / N) lies in the half-open box.
std::vector<bool> bbox_to_grid(const PixelBox& box, int image_width, int image_height, std::size_t grid_n);

/// Mass inside the mask over total mass. Throws on zero total or negative entries.
double coverage(const Tensor& map, const std::vector<bool>& cells);

struct CoverageOptions {
  std::size_t m_star = 24;
  std::optional<std::size_t> k_star;
  double epsilon = 1e-6;
};

struct CoverageRecord {
  std::string item_id;
  std::string model_id;
  double coverage = 0.0;
  std::size_t layer_used = 0;
  std::size_t connector_layer_used = 0;
  friend bool operator==(const CoverageRecord&, const CoverageRecord&) = default;
};

nlohmann::json to_json(const CoverageRecord& r);
CoverageRecord coverage_record_from_json(const nlohmann::json& j);

/// The full chain on one bundle: head averages, composition, relative
/// attention, layer slice and box coverage.
CoverageRecord bundle_coverage(const AttentionBundle& bundle, const PixelBox& box, int image_width,
                               int image_height, const CoverageOptions& options = {});

struct CoverageSummary {
  std::string model_id;
  double mean = 0.0;  // per-item mean, as a fraction
  std::size_t items = 0;
};

/// Per-model mean over items, models in first-seen order.
std::vector<CoverageSummary> summarize_coverage(std::span<const CoverageRecord> records);

/// One header row of model names and one "Coverage (%)" row; a model mapped to
/// a baseline also shows the signed difference, e.g. "21.64 (+4.25)".
std::string format_coverage_table(std::span<const CoverageSummary> summaries,
                                  const std::map<std::string, std::string>& baselines = {});

}  // namespace r2i
