#ifndef RSTAR_QUARTER_HPP
#define RSTAR_QUARTER_HPP

#include <cctype>
#include <compare>
#include <string>

#include "rstar/errors.hpp"

namespace rstar {

// Calendar quarter. Canonical text form is "1961:Q1"; ISO dates on the
// first month of a quarter ("1961-01" or "1961-01-01") are accepted on
// input and normalized.
struct Quarter {
  int year = 0;
  int q = 1;  // 1..4

  static Quarter parse(const std::string& text);
  std::string str() const;

  int index() const { return year * 4 + (q - 1); }
  static Quarter from_index(int idx) { return Quarter{idx / 4, idx % 4 + 1}; }
  Quarter plus(int n) const { return from_index(index() + n); }

  friend auto operator<=>(const Quarter&, const Quarter&) = default;
};

inline std::string Quarter::str() const {
  return std::to_string(year) + ":Q" + std::to_string(q);
}

inline Quarter Quarter::parse(const std::string& text) {
  const auto fail = [&]() -> Quarter {
    throw ValidationError("unparseable quarter '" + text + "' (expected YYYY:Qn or ISO first month of quarter)");
  };
  std::string s;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) s.push_back(c);
  if (s.size() < 6) return fail();
  int year = 0;
  for (int i = 0; i < 4; ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return fail();
    year = year * 10 + (s[i] - '0');
  }
  // YYYY:Qn / YYYYQn
  std::size_t p = 4;
  if (s[p] == ':' || s[p] == '.') ++p;
  if (p < s.size() && (s[p] == 'Q' || s[p] == 'q')) {
    if (p + 1 >= s.size() || s[p + 1] < '1' || s[p + 1] > '4' || p + 2 != s.size()) return fail();
    return Quarter{year, s[p + 1] - '0'};
  }
  // ISO: YYYY-MM or YYYY-MM-DD with MM in {01,04,07,10}
  if (s[4] != '-') return fail();
  if (s.size() < 7 || !std::isdigit(static_cast<unsigned char>(s[5])) ||
      !std::isdigit(static_cast<unsigned char>(s[6])))
    return fail();
  const int month = (s[5] - '0') * 10 + (s[6] - '0');
  if (s.size() > 7) {
    if (s.size() != 10 || s[7] != '-' || !std::isdigit(static_cast<unsigned char>(s[8])) ||
        !std::isdigit(static_cast<unsigned char>(s[9])))
      return fail();
  }
  if (month != 1 && month != 4 && month != 7 && month != 10) return fail();
  return Quarter{year, (month - 1) / 3 + 1};
}

}  // namespace rstar

#endif  // RSTAR_QUARTER_HPP
