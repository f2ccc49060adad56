#include "r2i/attention.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>

#include "r2i/error.hpp"
#include "r2i/io.hpp"

namespace r2i {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string index_string(const std::vector<std::size_t>& shape, std::size_t flat) {
  std::vector<std::size_t> idx(shape.size());
  for (std::size_t a = shape.size(); a-- > 0;) {
    idx[a] = flat % shape[a];
    flat /= shape[a];
  }
  std::string s = "[";
  for (std::size_t a = 0; a < idx.size(); ++a) s += (a ? "," : "") + std::to_string(idx[a]);
  return s + "]";
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s;
  for (std::size_t a = 0; a < shape.size(); ++a) s += (a ? "x" : "") + std::to_string(shape[a]);
  return s;
}

constexpr double kRowTolerance = 1e-3;

Tensor read_tensor(const fs::path& path, const std::string& name, std::vector<std::size_t> shape) {
  const std::string bytes = read_file(path);
  const std::size_t n = product(shape);
  if (bytes.size() != n * sizeof(float)) {
    throw DataError(name + ": expected " + std::to_string(n) + " float32 values for shape " + shape_string(shape) +
                    ", file holds " + std::to_string(bytes.size()) + " bytes");
  }
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, bytes.data() + i * 4, 4);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    data[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return Tensor(std::move(shape), std::move(data));
}

void write_tensor(const fs::path& path, const Tensor& t) {
  std::string bytes(t.size() * 4, '\0');
  for (std::size_t i = 0; i < t.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(t.data()[i]));
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    std::memcpy(bytes.data() + i * 4, &bits, 4);
  }
  write_file_atomic(path, bytes);
}

void validate_rows(const Tensor& t, const std::string& name) {
  const std::size_t row = t.shape().back();
  const auto d = t.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!std::isfinite(d[i])) throw DataError(name + index_string(t.shape(), i) + " is not finite");
    if (d[i] < 0.0) throw DataError(name + index_string(t.shape(), i) + " is negative (" + std::to_string(d[i]) + ")");
  }
  for (std::size_t r = 0; r * row < d.size(); ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < row; ++c) sum += d[r * row + c];
    if (std::fabs(sum - 1.0) > kRowTolerance) {
      throw DataError(name + " row " + index_string(t.shape(), r * row) + " sums to " + std::to_string(sum));
    }
  }
}

std::size_t positive(const json& meta, const char* key) {
  if (!meta.contains(key) || !meta[key].is_number_integer() || meta[key].get<long long>() < 1) {
    throw DataError(std::string("metadata.json: '") + key + "' must be a positive integer");
  }
  return meta[key].get<std::size_t>();
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != product(shape_)) throw PreconditionError("tensor data does not match shape " + shape_string(shape_));
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) throw PreconditionError("tensor index rank mismatch");
  std::size_t off = 0;
  std::size_t a = 0;
  for (std::size_t i : index) {
    if (i >= shape_[a]) throw PreconditionError("tensor index out of range");
    off = off * shape_[a] + i;
    ++a;
  }
  return off;
}

double& Tensor::at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
double Tensor::at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

AttentionBundle load_bundle(const fs::path& dir) {
  const json meta = json::parse(read_file(dir / "metadata.json"));
  AttentionBundle b;
  b.model_id = meta.value("model_id", "");
  b.item_id = meta.value("item_id", "");
  b.grid_n = positive(meta, "grid_n");
  b.t_tokens = positive(meta, "t_tokens");
  b.llm_layers = positive(meta, "llm_layers");
  b.llm_heads = positive(meta, "llm_heads");
  const bool identity = meta.value("a_ti", std::string("identity")) == "identity";
  b.connector_layers = identity ? 1 : positive(meta, "connector_layers");
  b.connector_heads = identity ? 1 : positive(meta, "connector_heads");
  if (identity && meta.contains("connector_layers") && meta["connector_layers"] != 1) {
    throw DataError("metadata.json: identity connector requires connector_layers = 1");
  }
  const std::size_t n2 = b.grid_n * b.grid_n;
  if (identity && b.t_tokens != n2) {
    throw DataError("a_ti: identity connector needs t_tokens = grid_n^2 (" + std::to_string(b.t_tokens) +
                    " != " + std::to_string(n2) + ")");
  }
  const std::vector<std::size_t> st_shape{b.llm_layers, b.llm_heads, 1, b.t_tokens};
  b.a_st_q = read_tensor(dir / "a_st_q.bin", "a_st_q", st_shape);
  b.a_st_qprime = read_tensor(dir / "a_st_qprime.bin", "a_st_qprime", st_shape);
  validate_rows(b.a_st_q, "a_st_q");
  validate_rows(b.a_st_qprime, "a_st_qprime");
  if (!identity) {
    b.a_ti = read_tensor(dir / meta["a_ti"].get<std::string>(), "a_ti",
                         {b.connector_layers, b.connector_heads, b.t_tokens, n2});
    validate_rows(*b.a_ti, "a_ti");
  }
  if (meta.contains("image_width")) b.image_width = meta["image_width"].get<int>();
  if (meta.contains("image_height")) b.image_height = meta["image_height"].get<int>();
  if (meta.contains("bbox")) b.bbox = meta["bbox"].get<PixelBox>();
  return b;
}

void write_bundle(const fs::path& dir, const AttentionBundle& b) {
  fs::create_directories(dir);
  json meta = {{"model_id", b.model_id},
               {"item_id", b.item_id},
               {"grid_n", b.grid_n},
               {"t_tokens", b.t_tokens},
               {"llm_layers", b.llm_layers},
               {"llm_heads", b.llm_heads},
               {"connector_layers", b.connector_layers},
               {"connector_heads", b.connector_heads},
               {"dtype", "float32-le"},
               {"layout", {{"a_st", "L,H,1,T"}, {"a_ti", "Lc,Hc,T,N2"}}},
               {"a_ti", b.a_ti ? "a_ti.bin" : "identity"}};
  if (b.image_width) meta["image_width"] = *b.image_width;
  if (b.image_height) meta["image_height"] = *b.image_height;
  if (b.bbox) meta["bbox"] = *b.bbox;
  write_file_atomic(dir / "metadata.json", meta.dump(2) + "\n");
  write_tensor(dir / "a_st_q.bin", b.a_st_q);
  write_tensor(dir / "a_st_qprime.bin", b.a_st_qprime);
  if (b.a_ti) write_tensor(dir / "a_ti.bin", *b.a_ti);
}

Tensor head_average(const Tensor& t) {
  if (t.rank() != 4) throw PreconditionError("head_average expects a rank-4 tensor");
  const std::size_t A = t.dim(0), H = t.dim(1), R = t.dim(2), C = t.dim(3);
  if (H < 1) throw PreconditionError("head axis is empty");
  Tensor out({A, R, C});
  const auto in = t.data();
  auto o = out.data();
  const std::size_t inner = R * C;
  for (std::size_t a = 0; a < A; ++a) {
    for (std::size_t h = 0; h < H; ++h) {
      const double* src = in.data() + (a * H + h) * inner;
      double* dst = o.data() + a * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  for (auto& v : o) v /= static_cast<double>(H);
  return out;
}

Tensor compose(const Tensor& a_st_hat, const Tensor& a_ti_hat) {
  if (a_st_hat.rank() != 3 || a_st_hat.dim(1) != 1) throw PreconditionError("a_st_hat must be L x 1 x T");
  if (a_ti_hat.rank() != 3) throw PreconditionError("a_ti_hat must be Lc x T x N^2");
  const std::size_t L = a_st_hat.dim(0), T = a_st_hat.dim(2);
  const std::size_t Lc = a_ti_hat.dim(0), P = a_ti_hat.dim(2);
  if (a_ti_hat.dim(1) != T) {
    throw PreconditionError("compose: token dims differ (" + std::to_string(T) + " vs " +
                            std::to_string(a_ti_hat.dim(1)) + ")");
  }
  Tensor out({L, Lc, 1, P});
  const auto st = a_st_hat.data();
  const auto ti = a_ti_hat.data();
  auto o = out.data();
  for (std::size_t m = 0; m < L; ++m) {
    for (std::size_t k = 0; k < Lc; ++k) {
      double* dst = o.data() + (m * Lc + k) * P;
      for (std::size_t t = 0; t < T; ++t) {
        const double w = st[m * T + t];
        if (w == 0.0) continue;
        const double* row = ti.data() + (k * T + t) * P;
        for (std::size_t p = 0; p < P; ++p) dst[p] += w * row[p];
      }
    }
  }
  return out;
}

Tensor compose_identity(const Tensor& a_st_hat) {
  if (a_st_hat.rank() != 3 || a_st_hat.dim(1) != 1) throw PreconditionError("a_st_hat must be L x 1 x T");
  return Tensor({a_st_hat.dim(0), 1, 1, a_st_hat.dim(2)},
                std::vector<double>(a_st_hat.data().begin(), a_st_hat.data().end()));
}

Tensor relative_attention(const Tensor& a_si_q, const Tensor& a_si_qprime, double epsilon) {
  if (a_si_q.shape() != a_si_qprime.shape()) throw PreconditionError("relative_attention: shape mismatch");
  if (!(epsilon >= 0.0)) throw PreconditionError("epsilon must be >= 0");
  Tensor out(a_si_q.shape());
  const auto a = a_si_q.data();
  const auto b = a_si_qprime.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double den = b[i] + epsilon;
    if (den == 0.0) {
      if (a[i] != 0.0) throw DataError("relative_attention: zero denominator at " + index_string(out.shape(), i));
      o[i] = 0.0;
    } else {
      o[i] = a[i] / den;
    }
  }
  return out;
}

Tensor select_layer(const Tensor& a_rel, std::size_t grid_n, std::size_t m_star, std::optional<std::size_t> k_star) {
  if (a_rel.rank() != 4 || a_rel.dim(2) != 1) throw PreconditionError("a_rel must be L x Lc x 1 x N^2");
  const std::size_t L = a_rel.dim(0), Lc = a_rel.dim(1), P = a_rel.dim(3);
  if (P != grid_n * grid_n) throw PreconditionError("a_rel last axis is not grid_n^2");
  const std::size_t k = k_star.value_or(Lc);
  if (m_star < 1 || m_star > L) {
    throw PreconditionError("layer " + std::to_string(m_star) + " out of range 1.." + std::to_string(L));
  }
  if (k < 1 || k > Lc) {
    throw PreconditionError("connector layer " + std::to_string(k) + " out of range 1.." + std::to_string(Lc));
  }
  const auto src = a_rel.data().subspan(((m_star - 1) * Lc + (k - 1)) * P, P);
  return Tensor({grid_n, grid_n}, std::vector<double>(src.begin(), src.end()));
}

std::vector<bool> bbox_to_grid(const PixelBox& box, int image_width, int image_height, std::size_t grid_n) {
  if (!box.valid_within(image_width, image_height)) throw PreconditionError("box outside image");
  if (grid_n < 1) throw PreconditionError("grid_n must be >= 1");
  const auto n = static_cast<std::int64_t>(grid_n);
  std::vector<bool> mask(grid_n * grid_n, false);
  // Centre (2j+1)W/(2N) compared in integers against the box edges scaled by 2N.
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t cy = (2 * i + 1) * image_height;
    if (cy < 2 * n * box.y1 || cy >= 2 * n * box.y2) continue;
    for (std::int64_t j = 0; j < n; ++j) {
      const std::int64_t cx = (2 * j + 1) * image_width;
      if (cx >= 2 * n * box.x1 && cx < 2 * n * box.x2) mask[static_cast<std::size_t>(i * n + j)] = true;
    }
  }
  return mask;
}

double coverage(const Tensor& map, const std::vector<bool>& cells) {
  if (map.size() != cells.size()) throw PreconditionError("coverage: mask size differs from map");
  double inside = 0.0, total = 0.0;
  const auto d = map.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] < 0.0 || !std::isfinite(d[i])) throw DataError("coverage: invalid map entry " + std::to_string(d[i]));
    total += d[i];
    if (cells[i]) inside += d[i];
  }
  if (total <= 0.0) throw DataError("coverage: map has zero total mass");
  return std::min(1.0, inside / total);
}

json to_json(const CoverageRecord& r) {
  return {{"item_id", r.item_id},
          {"model_id", r.model_id},
          {"coverage", r.coverage},
          {"layer_used", r.layer_used},
          {"connector_layer_used", r.connector_layer_used}};
}

CoverageRecord coverage_record_from_json(const json& j) {
  return {j.at("item_id").get<std::string>(), j.at("model_id").get<std::string>(), j.at("coverage").get<double>(),
          j.at("layer_used").get<std::size_t>(), j.value("connector_layer_used", std::size_t{1})};
}

CoverageRecord bundle_coverage(const AttentionBundle& b, const PixelBox& box, int image_width, int image_height,
                               const CoverageOptions& options) {
  const Tensor st_q = head_average(b.a_st_q);
  const Tensor st_p = head_average(b.a_st_qprime);
  Tensor si_q, si_p;
  if (b.identity_connector()) {
    si_q = compose_identity(st_q);
    si_p = compose_identity(st_p);
  } else {
    const Tensor ti = head_average(*b.a_ti);
    si_q = compose(st_q, ti);
    si_p = compose(st_p, ti);
  }
  const Tensor rel = relative_attention(si_q, si_p, options.epsilon);
  const std::size_t k = options.k_star.value_or(rel.dim(1));
  const Tensor map = select_layer(rel, b.grid_n, options.m_star, k);
  return {b.item_id, b.model_id, coverage(map, bbox_to_grid(box, image_width, image_height, b.grid_n)),
          options.m_star, k};
}

std::vector<CoverageSummary> summarize_coverage(std::span<const CoverageRecord> records) {
  std::vector<CoverageSummary> out;
  for (const auto& r : records) {
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& s) { return s.model_id == r.model_id; });
    if (it == out.end()) it = out.insert(out.end(), {r.model_id, 0.0, 0});
    it->mean += r.coverage;
    ++it->items;
  }
  for (auto& s : out) s.mean /= static_cast<double>(s.items);
  return out;
}

std::string format_coverage_table(std::span<const CoverageSummary> summaries,
                                  const std::map<std::string, std::string>& baselines) {
  auto pct = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  std::vector<std::string> head{"Models"}, row{"Coverage (%)"};
  for (const auto& s : summaries) {
    head.push_back(s.model_id);
    std::string cell = pct(100.0 * s.mean);
    if (const auto b = baselines.find(s.model_id); b != baselines.end()) {
      const auto base = std::find_if(summaries.begin(), summaries.end(),
                                     [&](const auto& x) { return x.model_id == b->second; });
      if (base != summaries.end()) {
        const long long d = std::llround(1e4 * s.mean) - std::llround(1e4 * base->mean);
        char buf[32];
        std::snprintf(buf, sizeof buf, " (%+.2f)", static_cast<double>(d) / 100.0);
        cell += buf;
      }
    }
    row.push_back(cell);
  }
  std::string out;
  for (const auto* line : {&head, &row}) {
    std::string text;
    for (std::size_t c = 0; c < line->size(); ++c) {
      const std::size_t w = std::max(head[c].size(), row[c].size());
      const std::string& v = (*line)[c];
      text += c == 0 ? v + std::string(w - v.size(), ' ') : std::string(w - v.size(), ' ') + v;
      if (c + 1 < line->size()) text += "  ";
    }
    out += text + "\n";
  }
  return out;
}

}  // namespace r2i
