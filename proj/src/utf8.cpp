#include "forumlm/utf8.hpp"

#include <cstdint>

namespace forumlm::utf8 {

namespace {

// Length of the well-formed sequence starting at `pos`, or 0 when the bytes
// there are ill-formed. `consumed` receives the length of the maximal subpart
// to skip in that case.
std::size_t decode_one(std::string_view s, std::size_t pos, std::size_t &consumed) {
  const auto b0 = static_cast<std::uint8_t>(s[pos]);
  consumed = 1;
  if (b0 < 0x80)
    return 1;

  std::size_t len = 0;
  std::uint8_t lo = 0x80, hi = 0xBF;
  if (b0 >= 0xC2 && b0 <= 0xDF) {
    len = 2;
  } else if (b0 >= 0xE0 && b0 <= 0xEF) {
    len = 3;
    if (b0 == 0xE0)
      lo = 0xA0;
    else if (b0 == 0xED)
      hi = 0x9F;
  } else if (b0 >= 0xF0 && b0 <= 0xF4) {
    len = 4;
    if (b0 == 0xF0)
      lo = 0x90;
    else if (b0 == 0xF4)
      hi = 0x8F;
  } else {
    return 0;
  }

  for (std::size_t i = 1; i < len; ++i) {
    if (pos + i >= s.size())
      return 0;
    const auto b = static_cast<std::uint8_t>(s[pos + i]);
    const std::uint8_t l = (i == 1) ? lo : 0x80;
    const std::uint8_t h = (i == 1) ? hi : 0xBF;
    if (b < l || b > h)
      return 0;
    consumed = i + 1;
  }
  return len;
}

} // namespace

std::string sanitize(std::string_view bytes) {
  std::string out;
  out.reserve(bytes.size());
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    std::size_t consumed = 0;
    const std::size_t len = decode_one(bytes, pos, consumed);
    if (len == 0) {
      out.append(kReplacement);
      pos += consumed;
    } else {
      out.append(bytes.substr(pos, len));
      pos += len;
    }
  }
  return out;
}

bool is_valid(std::string_view bytes) {
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    std::size_t consumed = 0;
    const std::size_t len = decode_one(bytes, pos, consumed);
    if (len == 0)
      return false;
    pos += len;
  }
  return true;
}

std::size_t count_scalars(std::string_view bytes) {
  std::size_t count = 0, pos = 0;
  while (pos < bytes.size()) {
    std::size_t consumed = 0;
    const std::size_t len = decode_one(bytes, pos, consumed);
    pos += len == 0 ? consumed : len;
    ++count;
  }
  return count;
}

std::size_t floor_boundary(std::string_view bytes, std::size_t n) {
  if (n >= bytes.size())
    return bytes.size();
  while (n > 0 && (static_cast<std::uint8_t>(bytes[n]) & 0xC0) == 0x80)
    --n;
  return n;
}

void append(std::string &out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

} // namespace forumlm::utf8
