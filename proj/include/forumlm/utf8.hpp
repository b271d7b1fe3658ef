#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace forumlm::utf8 {

inline constexpr std::string_view kReplacement = "\xEF\xBF\xBD";

// Replaces every ill-formed subsequence with U+FFFD (one replacement per
// maximal subpart). Well-formed input is returned unchanged.
std::string sanitize(std::string_view bytes);

bool is_valid(std::string_view bytes);

// Number of Unicode scalar values; ill-formed subparts count as one each.
std::size_t count_scalars(std::string_view bytes);

// Largest n <= bytes.size() such that bytes[0, n) does not end inside a
// multi-byte sequence.
std::size_t floor_boundary(std::string_view bytes, std::size_t n);

// Appends the UTF-8 encoding of a scalar value.
void append(std::string &out, char32_t cp);

} // namespace forumlm::utf8
