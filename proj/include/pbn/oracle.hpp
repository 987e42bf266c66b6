#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pbn/baseline.hpp"
#include "pbn/linalg.hpp"
#include "pbn/train.hpp"

namespace pbn {

struct OracleAnswer {
  std::size_t predicted = 0;
  Vec probabilities;
};

// Query-only model interface. Every query bumps the counter by one;
// attacks see nothing but (label, probabilities).
class ModelOracle {
 public:
  virtual ~ModelOracle() = default;

  OracleAnswer query(const std::string& text) {
    ++queries_;
    return classify(text);
  }

  std::uint64_t queries() const { return queries_; }
  void reset_counter() { queries_ = 0; }

 protected:
  virtual OracleAnswer classify(const std::string& text) const = 0;

 private:
  std::uint64_t queries_ = 0;
};

class PbnOracle : public ModelOracle {
 public:
  explicit PbnOracle(const ModelState& state) : state_(state) {}

 protected:
  OracleAnswer classify(const std::string& text) const override {
    const Vec e = encode_text(state_, text);
    const ForwardTrace t =
        forward(state_.config, state_.prototypes, state_.head, {e});
    OracleAnswer ans;
    ans.probabilities = t.probabilities.row_vec(0);
    for (std::size_t c = 1; c < ans.probabilities.size(); ++c)
      if (ans.probabilities[c] > ans.probabilities[ans.predicted])
        ans.predicted = c;
    return ans;
  }

 private:
  const ModelState& state_;
};

class LinearOracle : public ModelOracle {
 public:
  explicit LinearOracle(const LinearModel& model) : model_(model) {}

 protected:
  OracleAnswer classify(const std::string& text) const override {
    const Vec e = encode_bag(tokenize(text), model_.table, model_.vocab);
    OracleAnswer ans;
    ans.probabilities = linear_probabilities(model_, e);
    for (std::size_t c = 1; c < ans.probabilities.size(); ++c)
      if (ans.probabilities[c] > ans.probabilities[ans.predicted])
        ans.predicted = c;
    return ans;
  }

 private:
  const LinearModel& model_;
};

// Fixed text -> answer map with a fallback; test fixture.
class LookupOracle : public ModelOracle {
 public:
  LookupOracle(std::unordered_map<std::string, OracleAnswer> answers,
               OracleAnswer fallback)
      : answers_(std::move(answers)), fallback_(std::move(fallback)) {}

 protected:
  OracleAnswer classify(const std::string& text) const override {
    auto it = answers_.find(text);
    return it == answers_.end() ? fallback_ : it->second;
  }

 private:
  std::unordered_map<std::string, OracleAnswer> answers_;
  OracleAnswer fallback_;
};

class ConstantOracle : public ModelOracle {
 public:
  explicit ConstantOracle(OracleAnswer answer) : answer_(std::move(answer)) {}

 protected:
  OracleAnswer classify(const std::string&) const override { return answer_; }

 private:
  OracleAnswer answer_;
};

}  // namespace pbn
