#include <catch2/catch_amalgamated.hpp>

#include "pbn/evaluation.hpp"
#include "synthetic.hpp"

using namespace pbn;

namespace {

PerturbationRecord rec(std::int64_t id, bool correct, bool success,
                       double fraction) {
  PerturbationRecord r;
  r.original_id = id;
  r.original_correct = correct;
  r.success = success;
  r.words_perturbed_fraction = fraction;
  r.queries_used = 10;
  return r;
}

OracleAnswer binary(double p0) {
  OracleAnswer a;
  a.probabilities = {p0, 1.0 - p0};
  a.predicted = p0 >= 0.5 ? 0 : 1;
  return a;
}

// Predicts by keyword; attackable iff its trigger word can be removed.
class TriggerOracle : public ModelOracle {
 public:
  explicit TriggerOracle(std::string trigger) : trigger_(std::move(trigger)) {}

 protected:
  OracleAnswer classify(const std::string& text) const override {
    return text.find(trigger_) != std::string::npos ? binary(0.9) : binary(0.1);
  }

 private:
  std::string trigger_;
};

}  // namespace

TEST_CASE("attack_success_rate") {
  // 5 records: 1 misclassified original (excluded), 4 attempted, 2 successes.
  std::vector<PerturbationRecord> rs = {
      rec(0, false, false, 0.0), rec(1, true, true, 0.2),
      rec(2, true, false, 0.0),  rec(3, true, true, 0.4),
      rec(4, true, false, 0.0)};
  CHECK(attack_success_rate(rs) == Catch::Approx(2.0 / 4.0));
  CHECK(attack_success_rate({}) == 0.0);
  // Only misclassified originals: no attempts, rate 0.
  CHECK(attack_success_rate({rec(0, false, false, 0.0)}) == 0.0);
}

TEST_CASE("average_percentage_words_perturbed") {
  std::vector<PerturbationRecord> rs = {
      rec(0, true, true, 0.25), rec(1, true, true, 0.75),
      rec(2, true, false, 0.9)};  // failures never count
  CHECK(average_percentage_words_perturbed(rs) == Catch::Approx(0.5));
  CHECK(average_percentage_words_perturbed({rec(0, true, false, 0.3)}) == 0.0);
  CHECK(average_percentage_words_perturbed({}) == 0.0);
}

TEST_CASE("make_targeted_report") {
  std::vector<PerturbationRecord> rs = {
      rec(0, false, false, 0.0), rec(1, true, true, 0.5),
      rec(2, true, false, 0.0)};
  const TargetedReport rep = make_targeted_report("charbug", rs);
  CHECK(rep.attack_name == "charbug");
  CHECK(rep.attempted == 2);
  CHECK(rep.successes == 1);
  CHECK(rep.asr == Catch::Approx(0.5));
  CHECK(rep.apwp == Catch::Approx(0.5));
  CHECK(rep.total_queries == 30);
}

TEST_CASE("compile_static_set") {
  // Dataset where every text contains both triggers; each source oracle keys
  // on its own trigger word.
  LabeledDataset ds;
  ds.label_names = {"pos", "neg"};
  for (std::int64_t i = 0; i < 4; ++i)
    ds.examples.push_back({i, "alpha beta filler" + std::to_string(i), 0});
  SynonymTable table;
  table["alpha"] = {"zzz"};
  table["beta"] = {"qqq"};
  AttackConfig cfg;
  cfg.strategy = AttackStrategy::SynGreedy;
  cfg.max_words_perturbed_fraction = 1.0;

  SECTION("k sources yield a multiple of k entries") {
    TriggerOracle a("alpha"), b("beta");
    std::vector<NamedOracle> sources = {{"A", &a}, {"B", &b}};
    const auto set = compile_static_set(sources, ds, cfg, 10, table);
    CHECK(set.source_models == std::vector<std::string>{"A", "B"});
    CHECK(set.entries.size() % 2 == 0);
    CHECK(!set.entries.empty());
    // Every kept original appears once per source.
    std::map<std::int64_t, std::set<std::string>> seen;
    for (const auto& e : set.entries) {
      CHECK(e.record.success);
      seen[e.original_id].insert(e.source_model);
    }
    for (const auto& [id, srcs] : seen) CHECK(srcs.size() == 2);
  }

  SECTION("disjoint vulnerability gives an empty set") {
    // Source C only flips when "gamma" is removed, but no text has "gamma":
    // campaigns against C never succeed, so the intersection is empty.
    TriggerOracle a("alpha"), c("gamma");
    std::vector<NamedOracle> sources = {{"A", &a}, {"C", &c}};
    const auto set = compile_static_set(sources, ds, cfg, 10, table);
    CHECK(set.entries.empty());
  }

  SECTION("single source degenerates to its own successes") {
    TriggerOracle a("alpha");
    std::vector<NamedOracle> sources = {{"A", &a}};
    const auto set = compile_static_set(sources, ds, cfg, 10, table);
    CHECK(set.entries.size() == 4);
    for (const auto& e : set.entries) CHECK(e.source_model == "A");
  }

  SECTION("no sources is an error") {
    CHECK_THROWS_AS(compile_static_set({}, ds, cfg, 10, table),
                    std::invalid_argument);
  }
}

TEST_CASE("evaluate_static") {
  StaticPerturbationSet set;
  auto add = [&](std::int64_t id, const std::string& text, std::size_t gold,
                 const std::string& attack) {
    StaticEntry e;
    e.original_id = id;
    e.source_model = "src";
    e.record.perturbed_text = text;
    e.record.gold_label = gold;
    e.record.attack_name = attack;
    e.record.success = true;
    set.entries.push_back(e);
  };
  add(0, "alpha one", 0, "charbug");
  add(1, "no trigger", 0, "charbug");
  add(2, "alpha two", 1, "syngreedy");

  SECTION("accuracy counts gold-label agreement") {
    TriggerOracle t("alpha");  // predicts 0 iff "alpha" present
    const StaticReport rep = evaluate_static(t, set);
    CHECK(rep.total == 3);
    CHECK(rep.correct == 1);  // only entry 0
    CHECK(rep.accuracy == Catch::Approx(1.0 / 3.0));
    CHECK(t.queries() == 3);
  }

  SECTION("attack-name filter restricts the pool") {
    TriggerOracle t("alpha");
    const StaticReport rep = evaluate_static(t, set, "charbug");
    CHECK(rep.total == 2);
    CHECK(rep.correct == 1);
    CHECK(rep.accuracy == Catch::Approx(0.5));
  }

  SECTION("target fooled by everything scores zero") {
    ConstantOracle t(binary(0.1));  // always predicts 1
    const StaticReport rep = evaluate_static(t, set, "charbug");
    CHECK(rep.accuracy == 0.0);
  }

  SECTION("empty set is an error") {
    ConstantOracle t(binary(0.9));
    CHECK_THROWS_AS(evaluate_static(t, StaticPerturbationSet{}),
                    std::invalid_argument);
  }
}

TEST_CASE("sweep grid enumeration") {
  SweepGrid grid;
  grid.num_prototypes = {2, 4};
  grid.lambda_c = {0.0, 0.9};
  grid.lambda_s = {0.5};
  grid.distances = {DistanceKind::Euclidean, DistanceKind::Cosine};
  CHECK(grid.points().size() == 2 * 2 * 1 * 1 * 2);

  // Row keys are unique across points, seeds, and attacks.
  std::set<std::string> keys;
  for (const auto& pt : grid.points())
    for (std::uint64_t seed : {0ULL, 1ULL})
      for (const char* attack : {"charbug", "syngreedy"}) {
        SweepRow row;
        row.point = pt;
        row.seed = seed;
        row.attack_name = attack;
        keys.insert(sweep_row_key(row));
      }
  CHECK(keys.size() == 8 * 2 * 2);
}

TEST_CASE("sweep runs the grid and is deterministic") {
  const LabeledDataset ds = pbn::testing::make_keyword_dataset(12, 3);
  const SynonymTable table = pbn::testing::make_keyword_synonyms();
  const SplitResult split = split_dataset(ds, 0.5, 0.25, 0.25, 7);

  SweepGrid grid;
  grid.num_prototypes = {2};
  grid.lambda_c = {0.9};
  grid.lambda_i = {0.9};
  grid.lambda_s = {0.9};
  grid.seeds = {1};

  SweepSettings settings;
  settings.base_model = {2, 2, 8, DistanceKind::Euclidean, 0.9, 0.9, 0.9};
  settings.train.max_epochs = 3;
  AttackConfig atk;
  atk.strategy = AttackStrategy::SynGreedy;
  settings.attacks = {atk};
  settings.target_successes = 3;

  std::size_t callbacks = 0;
  const auto rows_a = sweep(grid, settings, split.train, split.validation,
                            split.test, table,
                            [&](const SweepRow&) { ++callbacks; });
  const auto rows_b =
      sweep(grid, settings, split.train, split.validation, split.test, table);
  REQUIRE(rows_a.size() == 1);
  CHECK(callbacks == 1);
  REQUIRE(rows_b.size() == 1);
  CHECK_FALSE(rows_a[0].failed);
  CHECK(rows_a[0].asr == rows_b[0].asr);
  CHECK(rows_a[0].apwp == rows_b[0].apwp);
  CHECK(rows_a[0].clean_accuracy == rows_b[0].clean_accuracy);
  CHECK(rows_a[0].attack_name == "syngreedy");
  CHECK(rows_a[0].asr >= 0.0);
  CHECK(rows_a[0].asr <= 1.0);

  CHECK_THROWS_AS(
      sweep(SweepGrid{.seeds = {}}, settings, split.train, split.validation,
            split.test, table),
      std::invalid_argument);
}

TEST_CASE("sweep captures per-row failures without aborting") {
  const LabeledDataset ds = pbn::testing::make_keyword_dataset(6, 5);
  const SynonymTable table = pbn::testing::make_keyword_synonyms();

  SweepGrid grid;
  grid.num_prototypes = {1};  // invalid: model requires at least 2
  grid.seeds = {0};
  SweepSettings settings;
  settings.base_model = {2, 2, 4, DistanceKind::Euclidean, 0.9, 0.9, 0.9};
  settings.train.max_epochs = 1;
  AttackConfig atk;
  settings.attacks = {atk};

  const auto rows = sweep(grid, settings, ds, ds, ds, table);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].failed);
  CHECK_FALSE(rows[0].error.empty());
}

TEST_CASE("aggregate_asr and median") {
  auto row = [](double asr, bool failed) {
    SweepRow r;
    r.asr = asr;
    r.failed = failed;
    return r;
  };
  const std::vector<SweepRow> rows = {row(0.4, false), row(0.2, false),
                                      row(0.9, true), row(0.6, false)};
  CHECK(aggregate_asr(rows, Aggregation::Best) == Catch::Approx(0.2));
  CHECK(aggregate_asr(rows, Aggregation::Average) ==
        Catch::Approx((0.4 + 0.2 + 0.6) / 3.0));
  CHECK(aggregate_asr({}, Aggregation::Best) == 0.0);
  CHECK(aggregate_asr({row(1.0, true)}, Aggregation::Average) == 0.0);

  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 3.0, 2.0}) == Catch::Approx(2.5));
  CHECK(median({5.0}) == 5.0);
  CHECK_THROWS_AS(median({}), std::invalid_argument);
}
