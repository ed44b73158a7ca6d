#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pfscale {

/// Content of the last balanced \boxed{...} (or \fbox{...}) group, trimmed.
/// Also accepts the brace-less form "\boxed 5". Returns nullopt when no
/// complete group exists; never throws.
std::optional<std::string> extract_boxed(std::string_view text);

/// Lower-cased answer with LaTeX spacing, \left/\right, \text{}, dollar
/// signs, degree marks, braces and whitespace removed; \dfrac and \tfrac
/// become \frac and a leading single-letter "x=" is dropped.
std::string normalize_answer(std::string_view answer);

/// Value of an integer, decimal, comma-grouped number, a/b, \frac{a}{b} or
/// percentage. Percentages yield the bare number (50% -> 50).
struct ParsedNumber {
  double value = 0.0;
  bool percent = false;
};
std::optional<ParsedNumber> parse_number(std::string_view answer);

inline constexpr double kAnswerRelTolerance = 1e-6;

/// Numeric equality within kAnswerRelTolerance when both sides parse as
/// numbers, otherwise equality of normalized strings. A percentage p%
/// matches both p and p/100. No algebraic simplification: "x+1" != "1+x".
bool answers_equal(std::string_view a, std::string_view b);

/// True for non-numeric golds written as expressions (operators, \sqrt,
/// \frac, \pi, ...) that this checker cannot match up to algebraic
/// rearrangement; reports count them so such misses can be reviewed.
bool needs_symbolic_check(std::string_view gold);

/// Grouping key used by weighted best-of-N.
std::string canonical_answer(std::string_view answer);

/// Fraction of true entries. Throws std::invalid_argument when empty.
double accuracy(const std::vector<bool>& correct);

}  // namespace pfscale
