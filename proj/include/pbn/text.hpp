#pragma once

#include <cctype>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "pbn/linalg.hpp"

namespace pbn {

struct TokenSequence {
  std::vector<std::string> tokens;
  std::string source_text;
};

// Lowercase (ASCII), whitespace-split, ASCII punctuation split into its own
// tokens. Non-ASCII bytes pass through untouched.
inline TokenSequence tokenize(const std::string& text) {
  TokenSequence seq;
  seq.source_text = text;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      seq.tokens.push_back(cur);
      cur.clear();
    }
  };
  for (unsigned char c : text) {
    if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      seq.tokens.emplace_back(1, static_cast<char>(c));
    } else {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c))
                             : static_cast<char>(c));
    }
  }
  flush();
  return seq;
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

struct Vocabulary {
  std::unordered_map<std::string, std::size_t> token_to_index;
  std::vector<std::string> index_to_token;
  std::size_t unk_index = 0;

  std::size_t size() const { return index_to_token.size(); }

  std::size_t lookup(const std::string& token) const {
    auto it = token_to_index.find(token);
    return it == token_to_index.end() ? unk_index : it->second;
  }

  std::size_t add(const std::string& token) {
    auto it = token_to_index.find(token);
    if (it != token_to_index.end()) return it->second;
    const std::size_t idx = index_to_token.size();
    token_to_index.emplace(token, idx);
    index_to_token.push_back(token);
    return idx;
  }

  // Index 0 is the shared unknown-token row.
  static Vocabulary with_unk() {
    Vocabulary v;
    v.unk_index = v.add("<unk>");
    return v;
  }
};

struct EmbeddingTable {
  Matrix vectors;  // |V| x D
  bool trainable = true;
};

// Mean of token embedding rows; empty sequence maps to the zero vector.
inline Vec encode_bag(const TokenSequence& tokens, const EmbeddingTable& table,
                      const Vocabulary& vocab) {
  if (table.vectors.rows != vocab.size())
    throw std::invalid_argument("encode_bag: table/vocabulary size mismatch");
  Vec out(table.vectors.cols, 0.0);
  if (tokens.tokens.empty()) return out;
  for (const auto& tok : tokens.tokens) {
    const double* row = table.vectors.row(vocab.lookup(tok));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += row[i];
  }
  const double inv = 1.0 / static_cast<double>(tokens.tokens.size());
  for (double& v : out) v *= inv;
  return out;
}

// Row-index -> gradient contribution; repeated tokens accumulate.
inline std::unordered_map<std::size_t, Vec> encode_bag_backward(
    const TokenSequence& tokens, const Vocabulary& vocab,
    const Vec& upstream_grad) {
  std::unordered_map<std::size_t, Vec> grads;
  if (tokens.tokens.empty()) return grads;
  const double inv = 1.0 / static_cast<double>(tokens.tokens.size());
  for (const auto& tok : tokens.tokens) {
    const std::size_t idx = vocab.lookup(tok);
    auto [it, fresh] = grads.try_emplace(idx, Vec(upstream_grad.size(), 0.0));
    for (std::size_t i = 0; i < upstream_grad.size(); ++i)
      it->second[i] += upstream_grad[i] * inv;
  }
  return grads;
}

// FNV-1a, 64-bit; the stable hash behind the char n-gram featurizer.
inline std::uint64_t fnv1a64(const std::string& s, std::uint64_t salt) {
  std::uint64_t h = 14695981039346656037ULL ^ salt;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Hashed char n-gram featurizer: signed counts in `dims` buckets,
// L2-normalized. Deterministic across runs and platforms.
inline Vec encode_char_ngram(const std::string& text, std::size_t n,
                             std::size_t dims, std::uint64_t salt) {
  if (n < 1) throw std::invalid_argument("encode_char_ngram: n must be >= 1");
  if (dims < 1) throw std::invalid_argument("encode_char_ngram: dims must be >= 1");
  std::string lower;
  lower.reserve(text.size());
  for (unsigned char c : text)
    lower.push_back(c < 0x80 ? static_cast<char>(std::tolower(c))
                             : static_cast<char>(c));
  Vec out(dims, 0.0);
  if (lower.size() < n) {
    // Too short for a full n-gram: hash the whole string, unless empty.
    if (!lower.empty()) {
      const std::uint64_t h = fnv1a64(lower, salt);
      out[h % dims] += ((h >> 32) & 1) ? 1.0 : -1.0;
    }
  } else {
    for (std::size_t i = 0; i + n <= lower.size(); ++i) {
      const std::uint64_t h = fnv1a64(lower.substr(i, n), salt);
      out[h % dims] += ((h >> 32) & 1) ? 1.0 : -1.0;
    }
  }
  const double nrm = norm2(out);
  if (nrm > 0.0)
    for (double& v : out) v /= nrm;
  return out;
}

}  // namespace pbn
