#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "pbn/dataset.hpp"
#include "pbn/linalg.hpp"
#include "pbn/oracle.hpp"
#include "pbn/rng.hpp"
#include "pbn/text.hpp"

namespace pbn {

enum class AttackStrategy { CharBug, BugBlend, SynGreedy, SaliencySyn };

inline std::string to_string(AttackStrategy s) {
  switch (s) {
    case AttackStrategy::CharBug: return "charbug";
    case AttackStrategy::BugBlend: return "bugblend";
    case AttackStrategy::SynGreedy: return "syngreedy";
    case AttackStrategy::SaliencySyn: return "saliencysyn";
  }
  return "?";
}

inline AttackStrategy attack_strategy_from_string(const std::string& s) {
  if (s == "charbug") return AttackStrategy::CharBug;
  if (s == "bugblend") return AttackStrategy::BugBlend;
  if (s == "syngreedy") return AttackStrategy::SynGreedy;
  if (s == "saliencysyn") return AttackStrategy::SaliencySyn;
  throw std::invalid_argument(
      "unknown attack strategy: '" + s +
      "' (valid: charbug, bugblend, syngreedy, saliencysyn)");
}

inline const std::vector<AttackStrategy>& all_attack_strategies() {
  static const std::vector<AttackStrategy> all = {
      AttackStrategy::CharBug, AttackStrategy::BugBlend,
      AttackStrategy::SynGreedy, AttackStrategy::SaliencySyn};
  return all;
}

// word -> ordered lowercase substitution candidates.
using SynonymTable = std::map<std::string, std::vector<std::string>>;

struct AttackConfig {
  AttackStrategy strategy = AttackStrategy::CharBug;
  std::size_t max_candidates_per_word = 10;
  double max_words_perturbed_fraction = 0.4;
  std::size_t query_budget = 2000;
  std::uint64_t seed = 0;

  void validate() const {
    if (query_budget < 1)
      throw std::invalid_argument("AttackConfig: query_budget must be >= 1");
    if (max_words_perturbed_fraction <= 0.0 || max_words_perturbed_fraction > 1.0)
      throw std::invalid_argument(
          "AttackConfig: max_words_perturbed_fraction must be in (0, 1]");
  }
};

struct PerturbationRecord {
  std::int64_t original_id = -1;
  std::string original_text;
  std::string perturbed_text;
  std::size_t gold_label = 0;
  std::string attack_name;
  std::uint64_t queries_used = 0;
  double words_perturbed_fraction = 0.0;
  bool success = false;
  bool original_correct = true;
};

// Versioned homoglyph substitutions (visually similar characters).
inline const std::vector<std::pair<char, std::string>>& homoglyph_map() {
  static const std::vector<std::pair<char, std::string>> map = {
      {'o', "0"}, {'l', "1"}, {'a', "@"},       {'e', "\xc3\xa8"},  // è
      {'s', "$"}, {'i', "\xc3\xad"},                                // í
      {'c', "\xc2\xa9"},                                            // ©
  };
  return map;
}

// Deterministic character-level candidate set: adjacent swaps, deletions,
// one seeded insertion per gap, homoglyph substitutions, case flips, and
// space insertions. Ordered by transformation type then position;
// de-duplicated; never contains the original word.
inline std::vector<std::string> char_candidates(const std::string& word,
                                                std::uint64_t seed) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen{word};
  auto push = [&](std::string s) {
    if (!s.empty() && seen.insert(s).second) out.push_back(std::move(s));
  };
  const std::size_t n = word.size();
  // Adjacent swaps.
  for (std::size_t i = 0; i + 1 < n; ++i) {
    std::string s = word;
    std::swap(s[i], s[i + 1]);
    push(std::move(s));
  }
  // Single deletions.
  for (std::size_t i = 0; i < n; ++i) {
    std::string s = word;
    s.erase(i, 1);
    push(std::move(s));
  }
  // One inserted letter per gap, chosen by a seeded hash.
  static const char alphabet[] = "abcdefghijklmnopqrstuvwxyz";
  for (std::size_t i = 0; i <= n; ++i) {
    const std::uint64_t h =
        fnv1a64(word + "#" + std::to_string(i), seed ^ 0x9e3779b97f4a7c15ULL);
    std::string s = word;
    s.insert(i, 1, alphabet[h % 26]);
    push(std::move(s));
  }
  // Homoglyph substitutions.
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& [from, to] : homoglyph_map())
      if (word[i] == from) {
        std::string s = word.substr(0, i) + to + word.substr(i + 1);
        push(std::move(s));
      }
  // Case flips.
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char c = static_cast<unsigned char>(word[i]);
    if (c < 0x80 && std::isalpha(c)) {
      std::string s = word;
      s[i] = std::islower(c) ? static_cast<char>(std::toupper(c))
                             : static_cast<char>(std::tolower(c));
      push(std::move(s));
    }
  }
  // Space insertion at interior positions (splits the word in two).
  for (std::size_t i = 1; i < n; ++i)
    push(word.substr(0, i) + " " + word.substr(i));
  return out;
}

inline std::vector<std::string> synonym_candidates(const std::string& word,
                                                   const SynonymTable& table) {
  auto it = table.find(word);
  return it == table.end() ? std::vector<std::string>{} : it->second;
}

struct RankingResult {
  std::vector<std::size_t> order;  // token indices, most important first
  std::vector<double> scores;      // per original token index
  std::vector<std::string> best_substitute;  // SaliencySyn only
  bool complete = true;            // false when the budget ran out mid-ranking
};

inline double p_at(const OracleAnswer& a, std::size_t label) {
  return label < a.probabilities.size() ? a.probabilities[label] : 0.0;
}

namespace detail {

inline std::string with_token_removed(const std::vector<std::string>& tokens,
                                      std::size_t drop) {
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (i != drop) rest.push_back(tokens[i]);
  return join_tokens(rest);
}

inline std::string with_token_replaced(const std::vector<std::string>& tokens,
                                       std::size_t idx,
                                       const std::string& repl) {
  std::vector<std::string> copy = tokens;
  copy[idx] = repl;
  return join_tokens(copy);
}

// Stable descending sort by score, ties by lower index.
inline std::vector<std::size_t> order_by_score(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  return order;
}

}  // namespace detail

// Leave-one-out importance: score(i) = p_gold(original) - p_gold(without i).
// Costs exactly one query per token; a ranking cut short by the budget is
// returned partial with complete=false.
inline RankingResult word_importance_ranking(ModelOracle& oracle,
                                             const std::vector<std::string>& tokens,
                                             std::size_t gold_label,
                                             double p_gold_original,
                                             std::size_t budget) {
  RankingResult r;
  r.scores.assign(tokens.size(), 0.0);
  std::size_t scored = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (budget == 0) {
      r.complete = false;
      break;
    }
    const OracleAnswer a = oracle.query(detail::with_token_removed(tokens, i));
    --budget;
    r.scores[i] = p_gold_original - p_at(a, gold_label);
    ++scored;
  }
  std::vector<double> effective(r.scores.begin(),
                                r.scores.begin() + static_cast<std::ptrdiff_t>(scored));
  r.order = detail::order_by_score(effective);
  return r;
}

// Saliency-weighted ordering: softmax over leave-one-out saliencies times the
// best per-word substitution effectiveness, carrying the argmax substitute.
inline RankingResult saliency_weighted_order(ModelOracle& oracle,
                                             const std::vector<std::string>& tokens,
                                             std::size_t gold_label,
                                             double p_gold_original,
                                             const SynonymTable& table,
                                             std::size_t max_candidates,
                                             std::size_t budget) {
  RankingResult r;
  const std::size_t n = tokens.size();
  std::vector<double> saliency(n, 0.0);
  std::vector<double> effectiveness(n, 0.0);
  r.best_substitute.assign(n, "");
  std::size_t scored = 0;
  bool truncated = false;
  for (std::size_t i = 0; i < n && !truncated; ++i) {
    if (budget == 0) {
      truncated = true;
      break;
    }
    const OracleAnswer del = oracle.query(detail::with_token_removed(tokens, i));
    --budget;
    saliency[i] = p_gold_original - p_at(del, gold_label);
    const auto candidates = synonym_candidates(tokens[i], table);
    for (std::size_t c = 0; c < candidates.size() && c < max_candidates; ++c) {
      if (budget == 0) {
        truncated = true;
        break;
      }
      const OracleAnswer sub =
          oracle.query(detail::with_token_replaced(tokens, i, candidates[c]));
      --budget;
      const double drop = p_gold_original - p_at(sub, gold_label);
      if (drop > effectiveness[i] || r.best_substitute[i].empty()) {
        if (drop > effectiveness[i]) {
          effectiveness[i] = drop;
          r.best_substitute[i] = candidates[c];
        } else if (r.best_substitute[i].empty()) {
          r.best_substitute[i] = candidates[c];
        }
      }
    }
    ++scored;
  }
  r.complete = !truncated;
  const std::vector<double> sal_slice(saliency.begin(),
                                      saliency.begin() + static_cast<std::ptrdiff_t>(scored));
  std::vector<double> combined(scored, 0.0);
  if (scored > 0) {
    const Vec weights = softmax(sal_slice);
    for (std::size_t i = 0; i < scored; ++i)
      combined[i] = weights[i] * effectiveness[i];
  }
  r.order = detail::order_by_score(combined);
  r.scores = combined;
  return r;
}

// Greedy word-by-word search shared by the four strategies. Walks the
// strategy's ranking, tries bounded candidate sets per position, commits the
// candidate with the largest strict p_gold drop, and stops on label flip,
// word-fraction cap, or query budget.
inline PerturbationRecord greedy_attack(ModelOracle& oracle,
                                        const std::string& text,
                                        std::size_t gold_label,
                                        const AttackConfig& config,
                                        const SynonymTable& table) {
  config.validate();
  PerturbationRecord rec;
  rec.original_text = text;
  rec.perturbed_text = text;
  rec.gold_label = gold_label;
  rec.attack_name = to_string(config.strategy);

  const std::uint64_t start_queries = oracle.queries();
  std::size_t budget = config.query_budget;

  const OracleAnswer initial = oracle.query(text);
  --budget;
  if (initial.predicted != gold_label) {
    rec.original_correct = false;
    rec.queries_used = oracle.queries() - start_queries;
    return rec;
  }

  const std::vector<std::string> original_tokens = tokenize(text).tokens;
  const std::size_t n = original_tokens.size();
  if (n == 0 || budget == 0) {
    rec.queries_used = oracle.queries() - start_queries;
    return rec;
  }

  const double p0 = p_at(initial, gold_label);
  RankingResult ranking;
  if (config.strategy == AttackStrategy::SaliencySyn) {
    ranking = saliency_weighted_order(oracle, original_tokens, gold_label, p0,
                                      table, config.max_candidates_per_word,
                                      budget);
  } else {
    ranking = word_importance_ranking(oracle, original_tokens, gold_label, p0,
                                      budget);
  }
  budget = config.query_budget - (oracle.queries() - start_queries);

  const std::size_t max_changed = std::max<std::size_t>(
      1, static_cast<std::size_t>(config.max_words_perturbed_fraction *
                                  static_cast<double>(n)));

  std::vector<std::string> working = original_tokens;
  double p_current = p0;
  std::size_t changed = 0;

  for (const std::size_t idx : ranking.order) {
    if (budget == 0 || changed >= max_changed) break;
    std::vector<std::string> candidates;
    switch (config.strategy) {
      case AttackStrategy::CharBug: {
        // Pure character edits: swaps, deletions, insertions.
        for (auto& c : char_candidates(original_tokens[idx], config.seed)) {
          if (c.find(' ') == std::string::npos) candidates.push_back(std::move(c));
          if (candidates.size() >= config.max_candidates_per_word) break;
        }
        break;
      }
      case AttackStrategy::BugBlend: {
        // Character edits plus homoglyphs, space insertion, and similar
        // words. Half the per-word budget is reserved for similar-word
        // substitutions so char edits can't crowd them out of the cap.
        const auto syns = synonym_candidates(original_tokens[idx], table);
        const std::size_t syn_take =
            std::min(syns.size(), std::max<std::size_t>(1, config.max_candidates_per_word / 2));
        candidates.assign(syns.begin(),
                          syns.begin() + static_cast<std::ptrdiff_t>(syn_take));
        for (auto& c : char_candidates(original_tokens[idx], config.seed)) {
          if (candidates.size() >= config.max_candidates_per_word) break;
          candidates.push_back(std::move(c));
        }
        break;
      }
      case AttackStrategy::SynGreedy:
      case AttackStrategy::SaliencySyn:
        candidates = synonym_candidates(original_tokens[idx], table);
        break;
    }
    if (candidates.size() > config.max_candidates_per_word)
      candidates.resize(config.max_candidates_per_word);

    double best_drop = 0.0;
    std::string best_candidate;
    OracleAnswer best_answer;
    for (const auto& cand : candidates) {
      if (budget == 0) break;
      if (cand == working[idx]) continue;
      const OracleAnswer a =
          oracle.query(detail::with_token_replaced(working, idx, cand));
      --budget;
      const double drop = p_current - p_at(a, gold_label);
      if (drop > best_drop) {
        best_drop = drop;
        best_candidate = cand;
        best_answer = a;
      }
    }
    if (best_drop > 0.0) {
      working[idx] = best_candidate;
      p_current -= best_drop;
      ++changed;
      rec.perturbed_text = join_tokens(working);
      if (best_answer.predicted != gold_label) {
        rec.success = true;
        break;
      }
    }
  }

  rec.words_perturbed_fraction =
      static_cast<double>(changed) / static_cast<double>(n);
  rec.queries_used = oracle.queries() - start_queries;
  if (!rec.success) rec.perturbed_text = join_tokens(working);
  return rec;
}

// Attacks correctly-classified examples in seeded shuffle order until the
// success target is met or the dataset is exhausted. All records (successes
// and failures) are returned for metric computation.
inline std::vector<PerturbationRecord> run_campaign(ModelOracle& oracle,
                                                    const LabeledDataset& dataset,
                                                    const AttackConfig& config,
                                                    std::size_t target_successes,
                                                    const SynonymTable& table) {
  std::vector<PerturbationRecord> records;
  if (target_successes == 0) return records;
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(config.seed);
  rng.shuffle(order);
  std::size_t successes = 0;
  for (const std::size_t i : order) {
    if (successes >= target_successes) break;
    const auto& ex = dataset.examples[i];
    PerturbationRecord rec =
        greedy_attack(oracle, ex.text, ex.label, config, table);
    rec.original_id = ex.id;
    if (rec.success) ++successes;
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace pbn
