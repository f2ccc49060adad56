#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace r2i {

std::string trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);
std::string collapse_whitespace(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);

/// Last line that is non-empty after trimming, trimmed; empty if none.
std::string last_nonempty_line(std::string_view s);

/// Grouping key for teacher answers: ASCII case-fold, trim, strip terminal
/// punctuation, collapse whitespace runs. Idempotent.
std::string normalize_answer(std::string_view s);

/// Matching key for scoring: like normalize_answer, but every punctuation
/// character becomes a space unless it sits between two digits ("3.5", "1,200").
std::string normalize_for_match(std::string_view s);

/// Parses a whole (trimmed) string as a number: optional sign, digits with
/// optional thousands commas, optional decimal part and exponent.
std::optional<double> parse_number(std::string_view s);

/// Replaces each `{name}` whose name is a key of `values` in one left-to-right
/// pass; substituted text is never rescanned. Unknown braces are kept.
std::string substitute(std::string_view tmpl, const std::map<std::string, std::string, std::less<>>& values);

/// Content of the last `\boxed{...}` with balanced braces, if any.
std::optional<std::string> last_boxed(std::string_view s);

}  // namespace r2i
