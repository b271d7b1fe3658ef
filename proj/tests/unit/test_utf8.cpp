#include <doctest.h>

#include "forumlm/utf8.hpp"

using namespace forumlm;

TEST_CASE("valid text passes through sanitize unchanged") {
  const std::string s = "Hårdvara: PC 😀 ok";
  CHECK(utf8::is_valid(s));
  CHECK(utf8::sanitize(s) == s);
}

TEST_CASE("a cut multi-byte character becomes one replacement character") {
  const std::string a = "å"; // C3 A5
  CHECK(utf8::sanitize("x" + a.substr(0, 1)) == "x" + std::string(utf8::kReplacement));
  const std::string emoji = "😀"; // 4 bytes
  CHECK(utf8::sanitize(emoji.substr(0, 3) + "y") == std::string(utf8::kReplacement) + "y");
  // Orphan continuation bytes are replaced one by one.
  CHECK(utf8::sanitize(emoji.substr(2)) == std::string(utf8::kReplacement) + std::string(utf8::kReplacement));
}

TEST_CASE("surrogates and overlongs are ill-formed") {
  CHECK_FALSE(utf8::is_valid("\xED\xA0\x80"));
  CHECK_FALSE(utf8::is_valid("\xC0\xAF"));
  CHECK_FALSE(utf8::is_valid("\xF4\x90\x80\x80"));
}

TEST_CASE("scalar counting and boundaries") {
  CHECK(utf8::count_scalars("") == 0);
  CHECK(utf8::count_scalars("åäö") == 3);
  CHECK(utf8::count_scalars("a😀b") == 3);
  const std::string s = "aå";
  CHECK(utf8::floor_boundary(s, 2) == 1);
  CHECK(utf8::floor_boundary(s, 3) == 3);
  CHECK(utf8::floor_boundary(s, 10) == 3);
}
