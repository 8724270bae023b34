#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace omegaprm {

// Last \boxed{...} span, else the text after the last "answer is" marker,
// else the last number-like token. Empty when nothing is found.
std::string extract_final_answer(std::string_view text);

// Whitespace, commas, '$' and a trailing period removed; \frac{a}{b} and
// \dfrac{a}{b} rewritten as a/b.
std::string normalize_answer(std::string_view answer);

// Integers, decimals, and a/b fractions. nullopt when the normalized text
// is not a number.
std::optional<double> parse_number(std::string_view normalized);

// Numeric comparison (relative tolerance 1e-9) when both sides parse as
// numbers, exact comparison of normalized text otherwise. An empty answer
// is never equivalent to anything.
bool answers_equivalent(std::string_view a, std::string_view b);

}  // namespace omegaprm
