#include "omegaprm/answer.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <regex>

namespace omegaprm {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Content of the last \boxed{...} with balanced braces.
std::optional<std::string> last_boxed(std::string_view text) {
  static constexpr std::string_view kMarker = "\\boxed{";
  auto pos = text.rfind(kMarker);
  while (pos != std::string_view::npos) {
    std::size_t depth = 1;
    std::size_t i = pos + kMarker.size();
    std::size_t start = i;
    for (; i < text.size() && depth > 0; ++i) {
      if (text[i] == '{') ++depth;
      if (text[i] == '}') --depth;
    }
    if (depth == 0) return std::string(trim(text.substr(start, i - 1 - start)));
    if (pos == 0) break;
    pos = text.rfind(kMarker, pos - 1);
  }
  return std::nullopt;
}

std::optional<std::string> last_marked(std::string_view text) {
  static const std::regex kMarker(R"([Aa]nswer\s+is\s*:?\s*([^\n]*))");
  std::optional<std::string> found;
  std::string s(text);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), kMarker); it != std::sregex_iterator(); ++it) {
    std::string span((*it)[1].str());
    auto t = trim(span);
    while (!t.empty() && (t.back() == '.' || t.back() == '$')) t = trim(t.substr(0, t.size() - 1));
    while (!t.empty() && t.front() == '$') t = trim(t.substr(1));
    if (!t.empty()) found = std::string(t);
  }
  return found;
}

std::optional<std::string> last_number(std::string_view text) {
  static const std::regex kNumber(R"(-?\d[\d,]*(?:\.\d+)?(?:/\d+)?)");
  std::optional<std::string> found;
  std::string s(text);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), kNumber); it != std::sregex_iterator(); ++it)
    found = it->str();
  return found;
}

std::optional<double> parse_decimal(std::string_view s) {
  if (s.empty()) return std::nullopt;
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  if (!std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace

std::string extract_final_answer(std::string_view text) {
  if (auto boxed = last_boxed(text)) return *boxed;
  if (auto marked = last_marked(text)) return *marked;
  if (auto number = last_number(text)) return *number;
  return {};
}

std::string normalize_answer(std::string_view answer) {
  std::string out;
  out.reserve(answer.size());
  for (char c : answer) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == ',' || c == '$') continue;
    out += c;
  }
  static const std::regex kFrac(R"(\\d?frac\{([^{}]*)\}\{([^{}]*)\})");
  out = std::regex_replace(out, kFrac, "$1/$2");
  while (!out.empty() && out.back() == '.') out.pop_back();
  return out;
}

std::optional<double> parse_number(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  auto slash = s.find('/');
  if (slash == std::string_view::npos) {
    // from_chars accepts "inf"/"nan" and hex forms; restrict to plain decimals.
    for (char c : s)
      if (!(std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == 'e' || c == 'E'))
        return std::nullopt;
    return parse_decimal(s);
  }
  auto num = parse_number(s.substr(0, slash));
  auto den = parse_number(s.substr(slash + 1));
  if (!num || !den || *den == 0.0) return std::nullopt;
  return *num / *den;
}

bool answers_equivalent(std::string_view a, std::string_view b) {
  auto na = normalize_answer(a);
  auto nb = normalize_answer(b);
  if (na.empty() || nb.empty()) return false;
  auto va = parse_number(na);
  auto vb = parse_number(nb);
  if (va && vb) {
    double diff = std::fabs(*va - *vb);
    double scale = std::max(std::fabs(*va), std::fabs(*vb));
    return diff <= 1e-9 * scale || diff == 0.0;
  }
  return na == nb;
}

}  // namespace omegaprm
