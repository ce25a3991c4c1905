#include "forge/text.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <sstream>

namespace forge::text {

namespace {
const std::array<const char *, 14> kStopwords = {
    "a", "an", "the", "of", "is", "are", "in", "on", "at", "to", "and", "or",
    "with", "for"};
} // namespace

std::string lower(const std::string &s) {
  std::string out = s;
  for (char &c : out)
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(const std::string &s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b])))
    ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1])))
    --e;
  return s.substr(b, e - b);
}

std::string normalize(const std::string &s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (unsigned char c : s) {
    if (std::isalnum(c)) {
      if (pending_space && !out.empty())
        out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(std::tolower(c)));
    } else {
      pending_space = true;
    }
  }
  return out;
}

std::vector<std::string> tokenize(const std::string &s) {
  std::vector<std::string> toks;
  std::istringstream iss(s);
  std::string tok;
  while (iss >> tok)
    toks.push_back(tok);
  return toks;
}

bool is_stopword(const std::string &token) {
  for (const char *w : kStopwords)
    if (token == w)
      return true;
  return false;
}

std::vector<std::string> content_tokens(const std::string &s,
                                        bool drop_stopwords) {
  std::vector<std::string> toks = tokenize(normalize(s));
  if (!drop_stopwords)
    return toks;
  std::vector<std::string> out;
  out.reserve(toks.size());
  for (auto &t : toks)
    if (!is_stopword(t))
      out.push_back(std::move(t));
  return out;
}

std::int64_t token_estimate(const std::string &s) {
  std::int64_t words = 0;
  bool in_word = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++words;
    }
  }
  return std::llround(static_cast<double>(words) * 1.3);
}

std::uint64_t fnv1a(const std::string &s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string fnv1a_hex(const std::string &s) {
  static const char *digits = "0123456789abcdef";
  std::uint64_t h = fnv1a(s);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xF];
    h >>= 4;
  }
  return out;
}

std::uint64_t attempt_seed(const std::string &sample_id, int attempt) {
  return fnv1a(sample_id + "\x1f" + std::to_string(attempt));
}

} // namespace forge::text
