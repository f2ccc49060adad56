#include "r2i/text.hpp"

#include <cctype>
#include <charconv>

namespace r2i {
namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_terminal_punct(char c) {
  switch (c) {
    case '.': case ',': case ';': case ':': case '!': case '?':
      return true;
    default:
      return false;
  }
}

}  // namespace

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending = false;
  for (char c : s) {
    if (is_space(c)) {
      pending = !out.empty();
      continue;
    }
    if (pending) out.push_back(' ');
    pending = false;
    out.push_back(c);
  }
  return out;
}

std::vector<std::string> split_lines(std::string_view s) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t nl = s.find('\n', start);
    if (nl == std::string_view::npos) nl = s.size();
    std::string_view line = s.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.emplace_back(line);
    start = nl + 1;
  }
  return lines;
}

std::string last_nonempty_line(std::string_view s) {
  auto lines = split_lines(s);
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    std::string t = trim(*it);
    if (!t.empty()) return t;
  }
  return {};
}

std::string normalize_answer(std::string_view s) {
  std::string out = collapse_whitespace(to_lower_ascii(s));
  // Stripping punctuation can expose trailing whitespace and vice versa.
  while (!out.empty() && (is_terminal_punct(out.back()) || is_space(out.back()))) out.pop_back();
  return out;
}

std::string normalize_for_match(std::string_view s) {
  std::string lowered = to_lower_ascii(s);
  std::string spaced;
  spaced.reserve(lowered.size());
  for (std::size_t i = 0; i < lowered.size(); ++i) {
    const auto c = static_cast<unsigned char>(lowered[i]);
    if (c < 0x80 && std::ispunct(c)) {
      const bool between_digits = (c == '.' || c == ',') && i > 0 && i + 1 < lowered.size() &&
                                  is_digit(lowered[i - 1]) && is_digit(lowered[i + 1]);
      spaced.push_back(between_digits ? static_cast<char>(c) : ' ');
    } else {
      spaced.push_back(static_cast<char>(c));
    }
  }
  return collapse_whitespace(spaced);
}

std::optional<double> parse_number(std::string_view raw) {
  std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  std::string cleaned;
  cleaned.reserve(s.size());
  std::size_t i = 0;
  if (s[0] == '+' || s[0] == '-') {
    if (s[0] == '-') cleaned.push_back('-');
    i = 1;
  }
  bool seen_digit = false, seen_dot = false, seen_exp = false;
  for (; i < s.size(); ++i) {
    const char c = s[i];
    if (is_digit(c)) {
      seen_digit = true;
      cleaned.push_back(c);
    } else if (c == ',' && !seen_dot && !seen_exp && i > 0 && is_digit(s[i - 1]) &&
               i + 3 < s.size() && is_digit(s[i + 1]) && is_digit(s[i + 2]) && is_digit(s[i + 3]) &&
               (i + 4 == s.size() || !is_digit(s[i + 4]))) {
      // thousands separator: exactly three digits follow
    } else if (c == '.' && !seen_dot && !seen_exp) {
      seen_dot = true;
      cleaned.push_back(c);
    } else if ((c == 'e' || c == 'E') && seen_digit && !seen_exp) {
      seen_exp = true;
      cleaned.push_back('e');
      if (i + 1 < s.size() && (s[i + 1] == '+' || s[i + 1] == '-')) cleaned.push_back(s[++i]);
    } else {
      return std::nullopt;
    }
  }
  if (!seen_digit) return std::nullopt;
  double value = 0;
  const char* first = cleaned.data();
  const char* last = cleaned.data() + cleaned.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return value;
}

std::string substitute(std::string_view tmpl, const std::map<std::string, std::string, std::less<>>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const std::size_t close = tmpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        auto it = values.find(tmpl.substr(i + 1, close - i - 1));
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(tmpl[i++]);
  }
  return out;
}

std::optional<std::string> last_boxed(std::string_view s) {
  static constexpr std::string_view kTag = "\\boxed{";
  const std::size_t pos = s.rfind(kTag);
  if (pos == std::string_view::npos) return std::nullopt;
  int depth = 1;
  const std::size_t start = pos + kTag.size();
  for (std::size_t i = start; i < s.size(); ++i) {
    if (s[i] == '{') ++depth;
    if (s[i] == '}' && --depth == 0) return std::string(s.substr(start, i - start));
  }
  return std::nullopt;
}

}  // namespace r2i
