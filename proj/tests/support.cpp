#include "support.hpp"

#include <atomic>
#include <random>

#include <fstream>
#include <sstream>

#include "r2i/error.hpp"
#include "r2i/hash.hpp"
#include "r2i/io.hpp"

namespace r2i::testing {

TempDir::TempDir() {
  static std::atomic<unsigned> counter{0};
  std::random_device rd;
  path_ = std::filesystem::temp_directory_path() /
          ("r2i-test-" + std::to_string(rd()) + "-" + std::to_string(counter.fetch_add(1)));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::filesystem::path fixtures() { return R2I_FIXTURES; }

Image pattern_image(int width, int height, unsigned salt) {
  Image img(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      img.set_pixel(x, y, {static_cast<std::uint8_t>((x * 255) / std::max(1, width - 1)),
                           static_cast<std::uint8_t>((y * 255) / std::max(1, height - 1)),
                           static_cast<std::uint8_t>((x + y + salt * 37) % 256)});
    }
  }
  std::mt19937 rng(salt);
  for (int b = 0; b < 6; ++b) {
    const int x0 = static_cast<int>(rng() % static_cast<unsigned>(width));
    const int y0 = static_cast<int>(rng() % static_cast<unsigned>(height));
    const Rgb c{static_cast<std::uint8_t>(rng()), static_cast<std::uint8_t>(rng()), static_cast<std::uint8_t>(rng())};
    for (int y = y0; y < std::min(height, y0 + height / 5); ++y) {
      for (int x = x0; x < std::min(width, x0 + width / 5); ++x) img.set_pixel(x, y, c);
    }
  }
  return img;
}

ImageRecord write_test_image(const std::filesystem::path& path, int width, int height, unsigned salt) {
  write_image(path, pattern_image(width, height, salt));
  const std::string bytes = read_file(path);
  ImageRecord r;
  r.content_hash = sha256_hex(bytes);
  r.image_id = r.content_hash.substr(0, 16);
  r.path = path.string();
  r.width = width;
  r.height = height;
  r.source = "test";
  return r;
}

PipelineConfig e2e_config(const std::filesystem::path& work_dir) {
  PipelineConfig c = load_config(fixtures() / "e2e.yaml");
  c.work_dir = work_dir;
  return c;
}

std::map<std::string, std::string> tree_digest(const std::filesystem::path& base, const std::vector<std::string>& roots) {
  std::map<std::string, std::string> out;
  for (const auto& root : roots) {
    if (!std::filesystem::exists(base / root)) continue;
    for (const auto& e : std::filesystem::recursive_directory_iterator(base / root)) {
      if (!e.is_regular_file()) continue;
      out[e.path().lexically_relative(base).generic_string()] = sha256_hex(read_file(e.path()));
    }
  }
  return out;
}

std::map<std::string, std::string> read_sha256_list(const std::filesystem::path& file) {
  std::map<std::string, std::string> out;
  std::istringstream in(read_file(file));
  std::string digest, path;
  while (in >> digest >> path) out[path] = digest;
  return out;
}

ClientSet wrap_clients(const ClientSet& in,
                       const std::function<std::shared_ptr<ModelClient>(std::shared_ptr<ModelClient>)>& wrap) {
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

std::string FailAfter::chat(const ChatRequest& request) {
  if (budget_->fetch_sub(1) <= 0) throw TransportError(inner_->endpoint_id() + ": injected outage", 503, true);
  return inner_->chat(request);
}

}  // namespace r2i::testing
