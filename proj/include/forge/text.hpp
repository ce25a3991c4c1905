#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace forge::text {

// Lowercase, punctuation to spaces, collapsed whitespace.
std::string normalize(const std::string &s);

std::vector<std::string> tokenize(const std::string &s);

// normalize() then tokenize, optionally dropping stopwords. Stopwords are
// only dropped for overlap-style metrics, never for exact comparison.
std::vector<std::string> content_tokens(const std::string &s,
                                        bool drop_stopwords = false);

bool is_stopword(const std::string &token);

// Whitespace-token proxy used for cost reporting: round(words * 1.3).
std::int64_t token_estimate(const std::string &s);

// FNV-1a 64-bit, returned as fixed-width lowercase hex.
std::uint64_t fnv1a(const std::string &s);
std::string fnv1a_hex(const std::string &s);

// Deterministic per-attempt seed for tier-3 retries.
std::uint64_t attempt_seed(const std::string &sample_id, int attempt);

std::string trim(const std::string &s);
std::string lower(const std::string &s);

} // namespace forge::text
