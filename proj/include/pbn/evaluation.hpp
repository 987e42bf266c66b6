#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "pbn/attack.hpp"
#include "pbn/dataset.hpp"
#include "pbn/oracle.hpp"
#include "pbn/train.hpp"

namespace pbn {

struct TargetedReport {
  std::string attack_name;
  std::size_t attempted = 0;  // correctly-classified originals attacked
  std::size_t successes = 0;
  double asr = 0.0;
  double apwp = 0.0;
  std::uint64_t total_queries = 0;
};

// ASR counts only records whose original was correctly classified.
inline double attack_success_rate(const std::vector<PerturbationRecord>& records) {
  std::size_t attempted = 0, successes = 0;
  for (const auto& r : records) {
    if (!r.original_correct) continue;
    ++attempted;
    if (r.success) ++successes;
  }
  return attempted == 0 ? 0.0
                        : static_cast<double>(successes) /
                              static_cast<double>(attempted);
}

// Mean words-perturbed fraction over success records; 0 when empty.
inline double average_percentage_words_perturbed(
    const std::vector<PerturbationRecord>& records) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : records)
    if (r.success) {
      sum += r.words_perturbed_fraction;
      ++n;
    }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

inline TargetedReport make_targeted_report(
    const std::string& attack_name,
    const std::vector<PerturbationRecord>& records) {
  TargetedReport rep;
  rep.attack_name = attack_name;
  for (const auto& r : records) {
    rep.total_queries += r.queries_used;
    if (!r.original_correct) continue;
    ++rep.attempted;
    if (r.success) ++rep.successes;
  }
  rep.asr = attack_success_rate(records);
  rep.apwp = average_percentage_words_perturbed(records);
  return rep;
}

struct StaticEntry {
  std::int64_t original_id = -1;
  std::string source_model;
  PerturbationRecord record;
};

struct StaticPerturbationSet {
  std::vector<StaticEntry> entries;
  std::vector<std::string> source_models;
};

struct StaticReport {
  std::string attack_name;
  std::size_t total = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
};

struct NamedOracle {
  std::string name;
  ModelOracle* oracle = nullptr;
};

// Runs one campaign per source oracle and keeps only originals whose attack
// succeeded against every source; k sources yield k variants per survivor.
inline StaticPerturbationSet compile_static_set(
    const std::vector<NamedOracle>& sources, const LabeledDataset& dataset,
    const AttackConfig& config, std::size_t target_successes,
    const SynonymTable& table) {
  if (sources.empty())
    throw std::invalid_argument("compile_static_set: need at least one source oracle");
  StaticPerturbationSet out;
  // original_id -> (source name -> success record)
  std::map<std::int64_t, std::map<std::string, PerturbationRecord>> by_original;
  for (const auto& src : sources) {
    out.source_models.push_back(src.name);
    const auto records =
        run_campaign(*src.oracle, dataset, config, target_successes, table);
    for (const auto& r : records)
      if (r.success) by_original[r.original_id][src.name] = r;
  }
  for (const auto& [oid, per_source] : by_original) {
    if (per_source.size() != sources.size()) continue;  // not fooled by all
    for (const auto& src : sources) {
      StaticEntry e;
      e.original_id = oid;
      e.source_model = src.name;
      e.record = per_source.at(src.name);
      out.entries.push_back(std::move(e));
    }
  }
  return out;
}

inline StaticReport evaluate_static(ModelOracle& target,
                                    const StaticPerturbationSet& set,
                                    const std::string& attack_name = "") {
  if (set.entries.empty())
    throw std::invalid_argument("evaluate_static: empty perturbation set");
  StaticReport rep;
  rep.attack_name = attack_name;
  for (const auto& e : set.entries) {
    if (!attack_name.empty() && e.record.attack_name != attack_name) continue;
    ++rep.total;
    if (target.query(e.record.perturbed_text).predicted == e.record.gold_label)
      ++rep.correct;
  }
  rep.accuracy = rep.total == 0
                     ? 0.0
                     : static_cast<double>(rep.correct) /
                           static_cast<double>(rep.total);
  return rep;
}

struct SweepPoint {
  std::size_t num_prototypes = 8;
  double lambda_c = 0.9;
  double lambda_i = 0.9;
  double lambda_s = 0.9;
  DistanceKind distance = DistanceKind::Euclidean;
};

struct SweepRow {
  SweepPoint point;
  std::uint64_t seed = 0;
  std::string attack_name;
  double clean_accuracy = 0.0;
  double asr = 0.0;
  double apwp = 0.0;
  std::size_t attempted = 0;
  std::size_t successes = 0;
  bool failed = false;
  std::string error;
};

struct SweepGrid {
  std::vector<std::size_t> num_prototypes = {8};
  std::vector<double> lambda_c = {0.9};
  std::vector<double> lambda_i = {0.9};
  std::vector<double> lambda_s = {0.9};
  std::vector<DistanceKind> distances = {DistanceKind::Euclidean};
  std::vector<std::uint64_t> seeds = {0};

  std::vector<SweepPoint> points() const {
    std::vector<SweepPoint> out;
    for (auto q : num_prototypes)
      for (auto lc : lambda_c)
        for (auto li : lambda_i)
          for (auto ls : lambda_s)
            for (auto d : distances) out.push_back({q, lc, li, ls, d});
    return out;
  }
};

struct SweepSettings {
  PBNConfig base_model;
  TrainConfig train;
  std::vector<AttackConfig> attacks;
  std::size_t target_successes = 25;
};

inline std::string sweep_row_key(const SweepRow& r) {
  return std::to_string(r.point.num_prototypes) + "|" +
         std::to_string(r.point.lambda_c) + "|" +
         std::to_string(r.point.lambda_i) + "|" +
         std::to_string(r.point.lambda_s) + "|" + to_string(r.point.distance) +
         "|" + std::to_string(r.seed) + "|" + r.attack_name;
}

// Trains one model per grid point per seed and runs targeted campaigns.
// A per-row failure is recorded and the sweep continues.
inline std::vector<SweepRow> sweep(
    const SweepGrid& grid, const SweepSettings& settings,
    const LabeledDataset& train_set, const LabeledDataset& validation_set,
    const LabeledDataset& attack_set, const SynonymTable& table,
    const std::function<void(const SweepRow&)>& on_row = nullptr) {
  const auto points = grid.points();
  if (points.empty() || grid.seeds.empty())
    throw std::invalid_argument("sweep: empty grid");
  std::vector<SweepRow> rows;
  const Vocabulary vocab = build_vocabulary(train_set);
  for (const auto& pt : points) {
    for (const auto seed : grid.seeds) {
      PBNConfig mc = settings.base_model;
      mc.num_prototypes = pt.num_prototypes;
      mc.lambda_c = pt.lambda_c;
      mc.lambda_i = pt.lambda_i;
      mc.lambda_s = pt.lambda_s;
      mc.distance = pt.distance;
      TrainConfig tc = settings.train;
      tc.seed = seed;
      try {
        const ModelState init = init_model(mc, vocab, seed);
        const FitResult fitres = fit(init, train_set, validation_set, tc);
        const double clean = evaluate_accuracy(fitres.best_state, attack_set);
        for (const auto& base_attack : settings.attacks) {
          AttackConfig ac = base_attack;
          ac.seed = seed;
          PbnOracle oracle(fitres.best_state);
          const auto records = run_campaign(oracle, attack_set, ac,
                                            settings.target_successes, table);
          const auto rep = make_targeted_report(to_string(ac.strategy), records);
          SweepRow row;
          row.point = pt;
          row.seed = seed;
          row.attack_name = rep.attack_name;
          row.clean_accuracy = clean;
          row.asr = rep.asr;
          row.apwp = rep.apwp;
          row.attempted = rep.attempted;
          row.successes = rep.successes;
          if (on_row) on_row(row);
          rows.push_back(std::move(row));
        }
      } catch (const std::exception& e) {
        for (const auto& base_attack : settings.attacks) {
          SweepRow row;
          row.point = pt;
          row.seed = seed;
          row.attack_name = to_string(base_attack.strategy);
          row.failed = true;
          row.error = e.what();
          if (on_row) on_row(row);
          rows.push_back(std::move(row));
        }
      }
    }
  }
  return rows;
}

enum class Aggregation { Best, Average };

// Best = min-ASR row; Average = mean over rows.
inline double aggregate_asr(const std::vector<SweepRow>& rows, Aggregation mode) {
  std::vector<double> vals;
  for (const auto& r : rows)
    if (!r.failed) vals.push_back(r.asr);
  if (vals.empty()) return 0.0;
  if (mode == Aggregation::Best)
    return *std::min_element(vals.begin(), vals.end());
  double sum = 0.0;
  for (double v : vals) sum += v;
  return sum / static_cast<double>(vals.size());
}

inline double median(std::vector<double> vals) {
  if (vals.empty()) throw std::invalid_argument("median: empty input");
  std::sort(vals.begin(), vals.end());
  const std::size_t n = vals.size();
  return n % 2 ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
}

}  // namespace pbn
