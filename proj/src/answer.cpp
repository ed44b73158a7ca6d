#include "pfscale/answer.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <regex>
#include <stdexcept>

namespace pfscale {

namespace {

std::string_view trim(std::string_view s) {
  auto space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && space(s.front())) s.remove_prefix(1);
  while (!s.empty() && space(s.back())) s.remove_suffix(1);
  return s;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  if (from.empty()) return;
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

/// Position one past the brace matching the '{' at `open`, or npos.
std::size_t match_brace(std::string_view s, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '\\') {
      ++i;
      continue;
    }
    if (c == '{') ++depth;
    if (c == '}' && --depth == 0) return i + 1;
  }
  return std::string_view::npos;
}

std::optional<std::string> boxed_at(std::string_view text, std::size_t after_keyword) {
  std::size_t i = after_keyword;
  if (i < text.size() && text[i] == '{') {
    const std::size_t end = match_brace(text, i);
    if (end == std::string_view::npos) return std::nullopt;
    return std::string(trim(text.substr(i + 1, end - i - 2)));
  }
  // "\boxed 5" form: a space, then one token.
  if (i >= text.size() || text[i] != ' ') return std::nullopt;
  while (i < text.size() && text[i] == ' ') ++i;
  const std::size_t start = i;
  while (i < text.size() && text[i] != '$' && !std::isspace(static_cast<unsigned char>(text[i])))
    ++i;
  return std::string(text.substr(start, i - start));
}

/// Unwraps \cmd{...} into its contents for every occurrence.
void unwrap_command(std::string& s, std::string_view cmd) {
  std::size_t pos = 0;
  while ((pos = s.find(cmd, pos)) != std::string::npos) {
    const std::size_t open = pos + cmd.size();
    if (open >= s.size() || s[open] != '{') {
      pos = open;
      continue;
    }
    const std::size_t end = match_brace(s, open);
    if (end == std::string::npos) return;
    s = s.substr(0, pos) + s.substr(open + 1, end - open - 2) + s.substr(end);
  }
}

/// Expands "\frac12" to "\frac{1}{2}".
void expand_short_frac(std::string& s) {
  std::size_t pos = 0;
  while ((pos = s.find("\\frac", pos)) != std::string::npos) {
    std::size_t i = pos + 5;
    std::string rebuilt = "\\frac";
    for (int arg = 0; arg < 2; ++arg) {
      if (i >= s.size()) break;
      if (s[i] == '{') {
        const std::size_t end = match_brace(s, i);
        if (end == std::string::npos) return;
        rebuilt += s.substr(i, end - i);
        i = end;
      } else if (std::isalnum(static_cast<unsigned char>(s[i]))) {
        rebuilt += '{';
        rebuilt += s[i];
        rebuilt += '}';
        ++i;
      }
    }
    s = s.substr(0, pos) + rebuilt + s.substr(i);
    pos += rebuilt.size();
  }
}

/// Cleaning shared by the numeric and string paths; braces are kept.
std::string clean(std::string_view raw) {
  std::string s(trim(raw));
  replace_all(s, "\\$", "");
  s.erase(std::remove(s.begin(), s.end(), '$'), s.end());
  replace_all(s, "{,}", ",");
  for (std::string_view cmd : {"\\text", "\\textbf", "\\mathrm", "\\mbox", "\\mathbf"})
    unwrap_command(s, cmd);
  // Keep the \\ row separator intact under the backslash-space rule.
  replace_all(s, "\\\\", "\x01");
  for (std::string_view junk : {"\\displaystyle", "\\left", "\\right", "\\qquad", "\\quad", "\\!",
                                "\\,", "\\;", "\\:", "\\ ", "~", "^{\\circ}", "^\\circ"})
    replace_all(s, junk, "");
  replace_all(s, "\x01", "\\\\");
  replace_all(s, "\\dfrac", "\\frac");
  replace_all(s, "\\tfrac", "\\frac");
  replace_all(s, "\\%", "%");
  s.erase(std::remove_if(s.begin(), s.end(),
                         [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }),
          s.end());
  while (!s.empty() && s.back() == '.') s.pop_back();
  if (s.size() > 2 && std::isalpha(static_cast<unsigned char>(s[0])) && s[1] == '=')
    s.erase(0, 2);
  expand_short_frac(s);
  return s;
}

std::optional<double> plain_number(const std::string& s) {
  static const std::regex kPlain(R"(^[+-]?(\d+\.?\d*|\.\d+)$)");
  static const std::regex kGrouped(R"(^[+-]?\d{1,3}(,\d{3})+(\.\d*)?$)");
  if (std::regex_match(s, kPlain)) return std::stod(s);
  if (std::regex_match(s, kGrouped)) {
    std::string digits = s;
    digits.erase(std::remove(digits.begin(), digits.end(), ','), digits.end());
    return std::stod(digits);
  }
  return std::nullopt;
}

std::optional<double> strip_braces_number(std::string s) {
  while (s.size() >= 2 && s.front() == '{' && s.back() == '}') s = s.substr(1, s.size() - 2);
  return plain_number(s);
}

bool close(double x, double y) {
  return std::fabs(x - y) <= kAnswerRelTolerance * std::max(std::fabs(x), std::fabs(y));
}

}  // namespace

std::optional<std::string> extract_boxed(std::string_view text) {
  std::size_t search_end = text.size();
  while (true) {
    const std::size_t boxed = text.rfind("\\boxed", search_end);
    const std::size_t fbox = text.rfind("\\fbox", search_end);
    std::size_t pos = std::string_view::npos;
    std::size_t len = 0;
    if (boxed != std::string_view::npos && (fbox == std::string_view::npos || boxed > fbox)) {
      pos = boxed;
      len = 6;
    } else if (fbox != std::string_view::npos) {
      pos = fbox;
      len = 5;
    }
    if (pos == std::string_view::npos) return std::nullopt;
    if (auto content = boxed_at(text, pos + len); content && !content->empty()) return content;
    if (pos == 0) return std::nullopt;
    search_end = pos - 1;
  }
}

std::string normalize_answer(std::string_view answer) {
  std::string s = clean(answer);
  replace_all(s, "\\{", "");
  replace_all(s, "\\}", "");
  s.erase(std::remove_if(s.begin(), s.end(), [](char c) { return c == '{' || c == '}'; }), s.end());
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::optional<ParsedNumber> parse_number(std::string_view answer) {
  std::string s = clean(answer);
  ParsedNumber out;
  if (!s.empty() && s.back() == '%') {
    out.percent = true;
    s.pop_back();
  }
  double sign = 1.0;
  if (!s.empty() && (s.front() == '-' || s.front() == '+') && s.rfind("\\frac", 1) == 1) {
    if (s.front() == '-') sign = -1.0;
    s.erase(0, 1);
  }
  if (s.rfind("\\frac{", 0) == 0) {
    const std::size_t num_end = match_brace(s, 5);
    if (num_end == std::string::npos || num_end >= s.size() || s[num_end] != '{')
      return std::nullopt;
    const std::size_t den_end = match_brace(s, num_end);
    if (den_end != s.size()) return std::nullopt;
    const auto num = strip_braces_number(s.substr(5, num_end - 5));
    const auto den = strip_braces_number(s.substr(num_end, den_end - num_end));
    if (!num || !den || *den == 0.0) return std::nullopt;
    out.value = sign * *num / *den;
    return out;
  }
  if (const std::size_t slash = s.find('/'); slash != std::string::npos) {
    const auto num = plain_number(s.substr(0, slash));
    const auto den = plain_number(s.substr(slash + 1));
    if (!num || !den || *den == 0.0) return std::nullopt;
    out.value = *num / *den;
    return out;
  }
  const auto v = strip_braces_number(s);
  if (!v) return std::nullopt;
  out.value = *v;
  return out;
}

bool answers_equal(std::string_view a, std::string_view b) {
  const auto na = parse_number(a);
  const auto nb = parse_number(b);
  if (na && nb) {
    auto candidates = [](const ParsedNumber& n) {
      return std::array<double, 2>{n.value, n.percent ? n.value / 100.0 : n.value};
    };
    for (double x : candidates(*na))
      for (double y : candidates(*nb))
        if (close(x, y)) return true;
  }
  return normalize_answer(a) == normalize_answer(b);
}

bool needs_symbolic_check(std::string_view gold) {
  if (parse_number(gold)) return false;
  const std::string n = normalize_answer(gold);
  if (n.find_first_of("+-*/^") != std::string::npos) return true;
  for (std::string_view cmd : {"\\sqrt", "\\frac", "\\pi", "\\cdot", "\\times"})
    if (n.find(cmd) != std::string::npos) return true;
  return false;
}

std::string canonical_answer(std::string_view answer) {
  if (const auto n = parse_number(answer)) {
    std::array<char, 40> buf{};
    std::snprintf(buf.data(), buf.size(), "%.10g", n->value);
    return buf.data();
  }
  return normalize_answer(answer);
}

double accuracy(const std::vector<bool>& correct) {
  if (correct.empty()) throw std::invalid_argument("accuracy of an empty record set");
  const auto hits = std::count(correct.begin(), correct.end(), true);
  return static_cast<double>(hits) / static_cast<double>(correct.size());
}

}  // namespace pfscale
