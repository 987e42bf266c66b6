// Command-line surface for the prototype-based classification pipeline:
// train, attack, compile-static, eval-static, sweep, explain, report.
//
// Every command accepts --config <json> whose keys mirror the flag names
// (dashes become underscores); explicit flags override the config file. The
// fully-resolved configuration is echoed into the output directory so any run
// can be reproduced from its artifacts.
//
// Exit codes: 0 success, 2 usage/config error, 1 runtime failure.

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pbn/baseline.hpp"
#include "pbn/evaluation.hpp"
#include "pbn/interpret.hpp"
#include "pbn/io.hpp"

namespace fs = std::filesystem;
using pbn::json;

namespace {

// Usage/config problems exit with 2; other exceptions exit with 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw UsageError(what + " path not given");
  if (!fs::exists(path))
    throw UsageError(what + " not found: " + path);
}

json load_config_json(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--config") {
      const std::string path = argv[i + 1];
      if (!fs::exists(path)) throw UsageError("config file not found: " + path);
      try {
        return json::parse(pbn::detail::read_file(path));
      } catch (const json::exception& e) {
        throw UsageError("config file " + path + " is not valid json: " + e.what());
      }
    }
  return json::object();
}

// Pull a default out of the config file; explicit flags later override it.
template <typename T>
void from_cfg(const json& cfg, const std::string& key, T& var) {
  if (cfg.contains(key)) {
    try {
      var = cfg[key].get<T>();
    } catch (const json::exception& e) {
      throw UsageError("config key '" + key + "': " + e.what());
    }
  }
}

std::string default_out_root() {
  const char* env = std::getenv("PBN_OUT_ROOT");
  return env && *env ? std::string(env) : std::string(".");
}

void echo_config(const json& resolved, const std::string& out_dir) {
  fs::create_directories(out_dir);
  pbn::detail::atomic_write((fs::path(out_dir) / "config.json").string(),
                            resolved.dump(2) + "\n");
}

// Aligned plain-text table: header row plus string cells.
std::string render_table(const std::vector<std::vector<std::string>>& rows) {
  if (rows.empty()) return "";
  std::vector<std::size_t> widths;
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c >= widths.size()) widths.push_back(0);
      widths[c] = std::max(widths[c], row[c].size());
    }
  std::ostringstream out;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out << std::left << std::setw(static_cast<int>(widths[c])) << row[c];
      if (c + 1 < row.size()) out << "  ";
    }
    out << "\n";
  }
  return out.str();
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss << std::setprecision(6) << v;
  return ss.str();
}

pbn::SynonymTable load_synonyms_opt(const std::string& path) {
  if (path.empty()) return {};
  require_file(path, "synonym table");
  return pbn::load_synonym_table(path);
}

std::vector<pbn::AttackStrategy> parse_strategies(const std::string& spec) {
  if (spec == "all") return pbn::all_attack_strategies();
  std::vector<pbn::AttackStrategy> out;
  std::istringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(pbn::attack_strategy_from_string(item));
  if (out.empty()) throw UsageError("no attack strategy given");
  return out;
}

// ---------------------------------------------------------------- train ----

struct TrainOpts {
  std::string config_path, out_dir, train_path, val_path;
  std::string format = "csv";
  std::size_t num_prototypes = 8, embed_dim = 32;
  std::string distance = "euclidean";
  double lambda_c = 0.9, lambda_i = 0.9, lambda_s = 0.9;
  double learning_rate = 1e-3, min_delta = 0.01;
  std::size_t batch_size = 32, max_epochs = 50, patience = 4;
  std::uint64_t seed = 0;
  bool freeze_encoder = false;
  std::string optimizer = "adam";
  double val_fraction = 0.2;
};

json train_opts_json(const TrainOpts& o) {
  return json{{"command", "train"},
              {"out", o.out_dir},
              {"train_data", o.train_path},
              {"val_data", o.val_path},
              {"format", o.format},
              {"num_prototypes", o.num_prototypes},
              {"embed_dim", o.embed_dim},
              {"distance", o.distance},
              {"lambda_c", o.lambda_c},
              {"lambda_i", o.lambda_i},
              {"lambda_s", o.lambda_s},
              {"learning_rate", o.learning_rate},
              {"batch_size", o.batch_size},
              {"max_epochs", o.max_epochs},
              {"patience", o.patience},
              {"min_delta", o.min_delta},
              {"seed", o.seed},
              {"freeze_encoder", o.freeze_encoder},
              {"optimizer", o.optimizer},
              {"val_fraction", o.val_fraction}};
}

int cmd_train(const TrainOpts& o) {
  require_file(o.train_path, "training dataset");
  pbn::LabeledDataset train = pbn::load_dataset(o.train_path, o.format);
  pbn::LabeledDataset val;
  if (!o.val_path.empty()) {
    require_file(o.val_path, "validation dataset");
    val = pbn::load_dataset(o.val_path, o.format);
  } else {
    const auto split =
        pbn::split_dataset(train, 1.0 - o.val_fraction, o.val_fraction, 0.0,
                           o.seed);
    train = split.train;
    val = split.validation;
  }
  if (train.label_names.size() < 2)
    throw UsageError("training dataset has fewer than 2 classes");

  pbn::PBNConfig mc{o.num_prototypes,
                    train.label_names.size(),
                    o.embed_dim,
                    pbn::distance_kind_from_string(o.distance),
                    o.lambda_c,
                    o.lambda_i,
                    o.lambda_s};
  pbn::TrainConfig tc;
  tc.learning_rate = o.learning_rate;
  tc.batch_size = o.batch_size;
  tc.max_epochs = o.max_epochs;
  tc.patience = o.patience;
  tc.min_delta = o.min_delta;
  tc.seed = o.seed;
  tc.freeze_encoder = o.freeze_encoder;
  tc.optimizer = o.optimizer == "sgd" ? pbn::OptimizerKind::SGD
                                      : pbn::OptimizerKind::Adam;
  try {
    mc.validate();
    tc.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  echo_config(train_opts_json(o), o.out_dir);
  const pbn::Vocabulary vocab = pbn::build_vocabulary(train);
  const pbn::ModelState init = pbn::init_model(mc, vocab, o.seed);
  const pbn::FitResult result = pbn::fit(init, train, val, tc);

  pbn::save_checkpoint(result.best_state,
                       (fs::path(o.out_dir) / "checkpoint.json").string());
  json log = json::array();
  for (std::size_t i = 0; i < result.log.epochs.size(); ++i) {
    const auto& ep = result.log.epochs[i];
    log.push_back({{"epoch", i},
                   {"total", ep.mean_loss.total},
                   {"classification", ep.mean_loss.classification},
                   {"clustering", ep.mean_loss.clustering},
                   {"interpretability", ep.mean_loss.interpretability},
                   {"separation", ep.mean_loss.separation},
                   {"validation_accuracy", ep.validation_accuracy}});
  }
  pbn::detail::atomic_write((fs::path(o.out_dir) / "train_log.json").string(),
                            log.dump(2) + "\n");
  std::cout << "trained " << result.log.epochs.size() << " epochs; best val acc "
            << fmt(result.log.epochs.empty()
                       ? 0.0
                       : pbn::evaluate_accuracy(result.best_state, val))
            << "\ncheckpoint: " << (fs::path(o.out_dir) / "checkpoint.json").string()
            << "\n";
  return 0;
}

// --------------------------------------------------------------- attack ----

struct AttackOpts {
  std::string config_path, out_dir, checkpoint, data_path, synonyms;
  std::string format = "csv";
  std::string strategies = "all";
  std::size_t target_successes = 25, max_candidates = 10;
  std::size_t query_budget = 2000;
  double max_fraction = 0.4;
  std::uint64_t seed = 0;
};

json attack_opts_json(const AttackOpts& o) {
  return json{{"command", "attack"},
              {"out", o.out_dir},
              {"checkpoint", o.checkpoint},
              {"data", o.data_path},
              {"format", o.format},
              {"synonyms", o.synonyms},
              {"strategies", o.strategies},
              {"target_successes", o.target_successes},
              {"max_candidates", o.max_candidates},
              {"query_budget", o.query_budget},
              {"max_fraction", o.max_fraction},
              {"seed", o.seed}};
}

int cmd_attack(const AttackOpts& o) {
  const auto strategies = parse_strategies(o.strategies);
  require_file(o.checkpoint, "checkpoint");
  require_file(o.data_path, "dataset");
  const pbn::ModelState model = pbn::load_checkpoint(o.checkpoint);
  const pbn::LabeledDataset data = pbn::load_dataset(o.data_path, o.format);
  const pbn::SynonymTable table = load_synonyms_opt(o.synonyms);
  echo_config(attack_opts_json(o), o.out_dir);

  std::vector<std::vector<std::string>> rows = {
      {"attack", "attempted", "successes", "asr", "apwp", "queries"}};
  std::ostringstream tsv;
  tsv << "attack\tattempted\tsuccesses\tasr\tapwp\tqueries\n";
  for (const auto strategy : strategies) {
    pbn::AttackConfig ac;
    ac.strategy = strategy;
    ac.max_candidates_per_word = o.max_candidates;
    ac.max_words_perturbed_fraction = o.max_fraction;
    ac.query_budget = o.query_budget;
    ac.seed = o.seed;
    try {
      ac.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    pbn::PbnOracle oracle(model);
    const auto records =
        pbn::run_campaign(oracle, data, ac, o.target_successes, table);
    const std::string name = pbn::to_string(strategy);
    pbn::save_records(records,
                      (fs::path(o.out_dir) / ("records_" + name + ".jsonl")).string());
    const auto rep = pbn::make_targeted_report(name, records);
    rows.push_back({name, std::to_string(rep.attempted),
                    std::to_string(rep.successes), fmt(rep.asr), fmt(rep.apwp),
                    std::to_string(rep.total_queries)});
    tsv << name << "\t" << rep.attempted << "\t" << rep.successes << "\t"
        << fmt(rep.asr) << "\t" << fmt(rep.apwp) << "\t" << rep.total_queries
        << "\n";
  }
  pbn::detail::atomic_write((fs::path(o.out_dir) / "attack_report.tsv").string(),
                            tsv.str());
  const std::string rendered = render_table(rows);
  pbn::detail::atomic_write((fs::path(o.out_dir) / "attack_report.txt").string(),
                            rendered);
  std::cout << rendered;
  return 0;
}

// ------------------------------------------------- compile / eval static ----

struct CompileStaticOpts {
  std::string config_path, out_dir, data_path, synonyms;
  std::string format = "csv";
  std::vector<std::string> checkpoints;
  std::string strategy = "syngreedy";
  std::size_t target_successes = 25, max_candidates = 10, query_budget = 2000;
  double max_fraction = 0.4;
  std::uint64_t seed = 0;
};

json compile_static_opts_json(const CompileStaticOpts& o) {
  return json{{"command", "compile-static"},
              {"out", o.out_dir},
              {"checkpoints", o.checkpoints},
              {"data", o.data_path},
              {"format", o.format},
              {"synonyms", o.synonyms},
              {"strategy", o.strategy},
              {"target_successes", o.target_successes},
              {"max_candidates", o.max_candidates},
              {"query_budget", o.query_budget},
              {"max_fraction", o.max_fraction},
              {"seed", o.seed}};
}

int cmd_compile_static(const CompileStaticOpts& o) {
  if (o.checkpoints.empty()) throw UsageError("need at least one --checkpoint");
  require_file(o.data_path, "dataset");
  std::vector<pbn::ModelState> models;
  for (const auto& path : o.checkpoints) {
    require_file(path, "checkpoint");
    models.push_back(pbn::load_checkpoint(path));
  }
  const pbn::LabeledDataset data = pbn::load_dataset(o.data_path, o.format);
  const pbn::SynonymTable table = load_synonyms_opt(o.synonyms);
  echo_config(compile_static_opts_json(o), o.out_dir);

  std::vector<pbn::PbnOracle> oracles;
  oracles.reserve(models.size());
  for (const auto& m : models) oracles.emplace_back(m);
  std::vector<pbn::NamedOracle> sources;
  for (std::size_t i = 0; i < oracles.size(); ++i)
    sources.push_back({fs::path(o.checkpoints[i]).stem().string(), &oracles[i]});

  pbn::AttackConfig ac;
  ac.strategy = pbn::attack_strategy_from_string(o.strategy);
  ac.max_candidates_per_word = o.max_candidates;
  ac.max_words_perturbed_fraction = o.max_fraction;
  ac.query_budget = o.query_budget;
  ac.seed = o.seed;
  const auto set =
      pbn::compile_static_set(sources, data, ac, o.target_successes, table);
  const std::string path = (fs::path(o.out_dir) / "static_set.jsonl").string();
  pbn::save_perturbation_set(set, path);
  std::cout << "sources=" << sources.size() << " entries=" << set.entries.size()
            << " multiple_of_sources="
            << (set.entries.size() % sources.size() == 0 ? "true" : "false")
            << "\nset: " << path << "\n";
  return 0;
}

struct EvalStaticOpts {
  std::string config_path, out_dir, checkpoint, set_path, attack_filter;
};

int cmd_eval_static(const EvalStaticOpts& o) {
  require_file(o.checkpoint, "checkpoint");
  require_file(o.set_path, "perturbation set");
  const pbn::ModelState model = pbn::load_checkpoint(o.checkpoint);
  const auto set = pbn::load_perturbation_set(o.set_path);
  if (set.entries.empty()) throw UsageError("perturbation set is empty: " + o.set_path);
  echo_config(json{{"command", "eval-static"},
                   {"out", o.out_dir},
                   {"checkpoint", o.checkpoint},
                   {"set", o.set_path},
                   {"attack", o.attack_filter}},
              o.out_dir);

  std::set<std::string> attack_names;
  for (const auto& e : set.entries) attack_names.insert(e.record.attack_name);
  std::vector<std::vector<std::string>> rows = {
      {"attack", "total", "correct", "accuracy"}};
  std::ostringstream tsv;
  tsv << "attack\ttotal\tcorrect\taccuracy\n";
  auto add = [&](const std::string& name) {
    pbn::PbnOracle oracle(model);
    const auto rep = pbn::evaluate_static(oracle, set, name);
    const std::string shown = name.empty() ? "(all)" : name;
    rows.push_back({shown, std::to_string(rep.total),
                    std::to_string(rep.correct), fmt(rep.accuracy)});
    tsv << shown << "\t" << rep.total << "\t" << rep.correct << "\t"
        << fmt(rep.accuracy) << "\n";
  };
  if (o.attack_filter.empty()) {
    for (const auto& name : attack_names) add(name);
    if (attack_names.size() > 1) add("");
  } else {
    add(o.attack_filter);
  }
  pbn::detail::atomic_write((fs::path(o.out_dir) / "static_report.tsv").string(),
                            tsv.str());
  const std::string rendered = render_table(rows);
  pbn::detail::atomic_write((fs::path(o.out_dir) / "static_report.txt").string(),
                            rendered);
  std::cout << rendered;
  return 0;
}

// ---------------------------------------------------------------- sweep ----

struct SweepOpts {
  std::string config_path, out_dir, data_path, synonyms;
  std::string format = "csv";
  std::vector<std::size_t> prototypes = {8};
  std::vector<double> lambda_c = {0.9}, lambda_i = {0.9}, lambda_s = {0.9};
  std::vector<std::string> distances = {"euclidean"};
  std::vector<std::uint64_t> seeds = {0};
  std::string strategies = "syngreedy";
  std::size_t embed_dim = 32, target_successes = 25;
  std::size_t batch_size = 32, max_epochs = 20;
  double learning_rate = 1e-3;
  std::string aggregate;
  bool resume = false;
  std::size_t workers = 1;  // interface placeholder; runs sequentially
};

json sweep_opts_json(const SweepOpts& o) {
  return json{{"command", "sweep"},
              {"out", o.out_dir},
              {"data", o.data_path},
              {"format", o.format},
              {"synonyms", o.synonyms},
              {"prototypes", o.prototypes},
              {"lambda_c", o.lambda_c},
              {"lambda_i", o.lambda_i},
              {"lambda_s", o.lambda_s},
              {"distances", o.distances},
              {"seeds", o.seeds},
              {"strategies", o.strategies},
              {"embed_dim", o.embed_dim},
              {"target_successes", o.target_successes},
              {"batch_size", o.batch_size},
              {"max_epochs", o.max_epochs},
              {"learning_rate", o.learning_rate},
              {"aggregate", o.aggregate},
              {"resume", o.resume},
              {"workers", o.workers}};
}

std::string sweep_row_tsv(const pbn::SweepRow& r) {
  std::ostringstream ss;
  ss << pbn::sweep_row_key(r) << "\t" << r.point.num_prototypes << "\t"
     << fmt(r.point.lambda_c) << "\t" << fmt(r.point.lambda_i) << "\t"
     << fmt(r.point.lambda_s) << "\t" << pbn::to_string(r.point.distance)
     << "\t" << r.seed << "\t" << r.attack_name << "\t"
     << fmt(r.clean_accuracy) << "\t" << fmt(r.asr) << "\t" << fmt(r.apwp)
     << "\t" << r.attempted << "\t" << r.successes << "\t"
     << (r.failed ? "failed" : "ok") << "\t" << r.error;
  return ss.str();
}

int cmd_sweep(const SweepOpts& o) {
  require_file(o.data_path, "dataset");
  if (!o.aggregate.empty() && o.aggregate != "best" && o.aggregate != "average")
    throw UsageError("--aggregate must be 'best' or 'average'");
  if (o.workers < 1) throw UsageError("--workers must be >= 1");
  const pbn::LabeledDataset full = pbn::load_dataset(o.data_path, o.format);
  const pbn::SynonymTable table = load_synonyms_opt(o.synonyms);
  echo_config(sweep_opts_json(o), o.out_dir);
  const auto split = pbn::split_dataset(full, 0.6, 0.2, 0.2, 13);

  pbn::SweepGrid grid;
  grid.num_prototypes = o.prototypes;
  grid.lambda_c = o.lambda_c;
  grid.lambda_i = o.lambda_i;
  grid.lambda_s = o.lambda_s;
  grid.distances.clear();
  for (const auto& d : o.distances)
    grid.distances.push_back(pbn::distance_kind_from_string(d));
  grid.seeds = o.seeds;

  pbn::SweepSettings settings;
  settings.base_model = {8, full.label_names.size(), o.embed_dim,
                         pbn::DistanceKind::Euclidean, 0.9, 0.9, 0.9};
  settings.train.batch_size = o.batch_size;
  settings.train.max_epochs = o.max_epochs;
  settings.train.learning_rate = o.learning_rate;
  settings.target_successes = o.target_successes;
  for (const auto strategy : parse_strategies(o.strategies)) {
    pbn::AttackConfig ac;
    ac.strategy = strategy;
    settings.attacks.push_back(ac);
  }

  // Idempotent resume: rows already in the table are never written twice.
  const std::string table_path = (fs::path(o.out_dir) / "sweep.tsv").string();
  const std::string header =
      "key\tQ\tlambda_c\tlambda_i\tlambda_s\tdistance\tseed\tattack\t"
      "clean_accuracy\tasr\tapwp\tattempted\tsuccesses\tstatus\terror\n";
  std::set<std::string> existing_keys;
  std::string previous;
  if (o.resume && fs::exists(table_path)) {
    previous = pbn::detail::read_file(table_path);
    std::istringstream in(previous);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      const auto tab = line.find('\t');
      if (tab != std::string::npos) existing_keys.insert(line.substr(0, tab));
    }
  }
  std::ostringstream out;
  if (previous.empty())
    out << header;
  else
    out << previous;

  std::vector<pbn::SweepRow> all_rows;
  const auto rows = pbn::sweep(
      grid, settings, split.train, split.validation, split.test, table,
      [&](const pbn::SweepRow& r) {
        all_rows.push_back(r);
        const std::string key = pbn::sweep_row_key(r);
        if (existing_keys.insert(key).second) out << sweep_row_tsv(r) << "\n";
      });
  pbn::detail::atomic_write(table_path, out.str());
  std::cout << "sweep rows: " << rows.size() << "\ntable: " << table_path << "\n";

  if (!o.aggregate.empty()) {
    const auto mode = o.aggregate == "best" ? pbn::Aggregation::Best
                                            : pbn::Aggregation::Average;
    // Aggregate per attack across grid points and seeds.
    std::map<std::string, std::vector<pbn::SweepRow>> by_attack;
    for (const auto& r : all_rows) by_attack[r.attack_name].push_back(r);
    std::vector<std::vector<std::string>> agg = {{"attack", o.aggregate + "_asr"}};
    for (const auto& [name, group] : by_attack)
      agg.push_back({name, fmt(pbn::aggregate_asr(group, mode))});
    const std::string rendered = render_table(agg);
    pbn::detail::atomic_write(
        (fs::path(o.out_dir) / "sweep_aggregate.txt").string(), rendered);
    std::cout << rendered;
  }
  return 0;
}

// -------------------------------------------------------------- explain ----

struct ExplainOpts {
  std::string config_path, out_dir, checkpoint, data_path, pairs_path;
  std::string format = "csv";
  std::vector<std::string> texts;
  std::size_t k = 2, card_neighbors = 3;
};

int cmd_explain(const ExplainOpts& o) {
  require_file(o.checkpoint, "checkpoint");
  require_file(o.data_path, "dataset");
  const pbn::ModelState model = pbn::load_checkpoint(o.checkpoint);
  const pbn::LabeledDataset data = pbn::load_dataset(o.data_path, o.format);
  if (o.k > model.config.num_prototypes)
    throw UsageError("--k exceeds the number of prototypes");
  if (o.card_neighbors > data.size())
    throw UsageError("--card-neighbors exceeds the dataset size");
  echo_config(json{{"command", "explain"},
                   {"out", o.out_dir},
                   {"checkpoint", o.checkpoint},
                   {"data", o.data_path},
                   {"format", o.format},
                   {"texts", o.texts},
                   {"pairs", o.pairs_path},
                   {"k", o.k},
                   {"card_neighbors", o.card_neighbors}},
              o.out_dir);

  const auto cards = pbn::all_prototype_cards(model, data, o.card_neighbors);
  std::vector<std::size_t> derived;
  for (const auto& c : cards) derived.push_back(c.derived_label);

  std::ostringstream cards_jsonl;
  std::vector<std::vector<std::string>> card_rows = {
      {"prototype", "derived_label", "nearest (id:distance)"}};
  for (const auto& c : cards) {
    json j{{"prototype", c.prototype_index},
           {"derived_label", c.derived_label}};
    j["nearest"] = json::array();
    std::string near;
    for (const auto& ne : c.nearest) {
      j["nearest"].push_back({{"id", ne.example_id},
                              {"distance", ne.distance},
                              {"gold_label", ne.gold_label}});
      if (!near.empty()) near += ", ";
      near += std::to_string(ne.example_id) + ":" + fmt(ne.distance);
    }
    cards_jsonl << j.dump() << "\n";
    card_rows.push_back({std::to_string(c.prototype_index),
                         data.label_names.at(c.derived_label), near});
  }
  pbn::detail::atomic_write((fs::path(o.out_dir) / "prototype_cards.jsonl").string(),
                            cards_jsonl.str());
  std::string rendered = render_table(card_rows);

  auto explain_one = [&](const std::string& text) {
    return pbn::top_activated_prototypes(model, text, o.k, derived);
  };
  auto top_set = [](const pbn::PredictionExplanation& e) {
    std::set<std::size_t> s;
    for (const auto& pc : e.top) s.insert(pc.prototype_index);
    return s;
  };
  auto describe = [&](const pbn::PredictionExplanation& e) {
    json j{{"text", e.text},
           {"predicted", e.predicted},
           {"predicted_label", data.label_names.at(e.predicted)}};
    j["top"] = json::array();
    for (const auto& pc : e.top)
      j["top"].push_back({{"prototype", pc.prototype_index},
                          {"score", pc.score},
                          {"derived_label", pc.derived_label}});
    return j;
  };

  std::ostringstream expl_jsonl;
  for (const auto& text : o.texts)
    expl_jsonl << describe(explain_one(text)).dump() << "\n";

  // Original/perturbed pairs: report whether the top-k prototype set moved.
  if (!o.pairs_path.empty()) {
    require_file(o.pairs_path, "pairs file");
    std::istringstream in(pbn::detail::read_file(o.pairs_path));
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::vector<std::string>> pair_rows = {
        {"original", "perturbed", "flag", "original_top", "perturbed_top"}};
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw UsageError(o.pairs_path + ":" + std::to_string(lineno) +
                         ": malformed json: " + e.what());
      }
      if (!j.contains("original") || !j.contains("perturbed"))
        throw UsageError(o.pairs_path + ":" + std::to_string(lineno) +
                         ": need 'original' and 'perturbed' fields");
      const auto eo = explain_one(j["original"].get<std::string>());
      const auto ep = explain_one(j["perturbed"].get<std::string>());
      const auto so = top_set(eo), sp = top_set(ep);
      // Identical top-k sets are "stable"; any difference is "shifted".
      const std::string flag = so == sp ? "stable" : "shifted";
      json rec{{"original", describe(eo)},
               {"perturbed", describe(ep)},
               {"flag", flag}};
      expl_jsonl << rec.dump() << "\n";
      auto join_set = [](const std::set<std::size_t>& s) {
        std::string out;
        for (auto v : s) {
          if (!out.empty()) out += ",";
          out += std::to_string(v);
        }
        return out;
      };
      pair_rows.push_back({eo.text, ep.text, flag, join_set(so), join_set(sp)});
    }
    rendered += "\n" + render_table(pair_rows);
  }
  pbn::detail::atomic_write((fs::path(o.out_dir) / "explanations.jsonl").string(),
                            expl_jsonl.str());
  pbn::detail::atomic_write((fs::path(o.out_dir) / "explain_report.txt").string(),
                            rendered);
  std::cout << rendered;
  return 0;
}

// --------------------------------------------------------------- report ----

struct ReportOpts {
  std::vector<std::string> records_paths;
  std::string sweep_path;
};

int cmd_report(const ReportOpts& o) {
  if (o.records_paths.empty() && o.sweep_path.empty())
    throw UsageError("report needs --records and/or --sweep inputs");
  if (!o.records_paths.empty()) {
    std::vector<std::vector<std::string>> rows = {
        {"file", "attack", "attempted", "successes", "asr", "apwp", "queries"}};
    for (const auto& path : o.records_paths) {
      require_file(path, "records file");
      const auto records = pbn::load_records(path);
      const std::string name = records.empty() ? "?" : records[0].attack_name;
      const auto rep = pbn::make_targeted_report(name, records);
      rows.push_back({fs::path(path).filename().string(), rep.attack_name,
                      std::to_string(rep.attempted),
                      std::to_string(rep.successes), fmt(rep.asr),
                      fmt(rep.apwp), std::to_string(rep.total_queries)});
    }
    std::cout << render_table(rows);
  }
  if (!o.sweep_path.empty()) {
    require_file(o.sweep_path, "sweep table");
    std::istringstream in(pbn::detail::read_file(o.sweep_path));
    std::string line;
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
      std::vector<std::string> cells;
      std::istringstream ls(line);
      std::string cell;
      while (std::getline(ls, cell, '\t')) cells.push_back(cell);
      if (!cells.empty()) cells.erase(cells.begin());  // drop the key column
      rows.push_back(cells);
    }
    std::cout << render_table(rows);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    const json cfg = load_config_json(argc, argv);
    // Config-file keys apply only to the invoked subcommand; the same key
    // (e.g. lambda_c) can have different shapes across commands.
    const std::string sub = [&] {
      for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--config") {
          ++i;
          continue;
        }
        if (!arg.empty() && arg[0] != '-') return arg;
      }
      return std::string();
    }();
    auto cfg_if = [&](const char* name) {
      return sub == name ? cfg : json::object();
    };
    const json cfg_train = cfg_if("train");
    const json cfg_attack = cfg_if("attack");
    const json cfg_compile = cfg_if("compile-static");
    const json cfg_eval = cfg_if("eval-static");
    const json cfg_sweep = cfg_if("sweep");
    const json cfg_explain = cfg_if("explain");
    const json cfg_report = cfg_if("report");

    CLI::App app{"Prototype-based text classification and robustness harness"};
    app.require_subcommand(1);

    std::string config_path;  // consumed by load_config_json; declared for help
    app.add_option("--config", config_path,
                   "JSON config file; flags override its values");

    TrainOpts t;
    t.out_dir = default_out_root() + "/train_out";
    from_cfg(cfg_train, "out", t.out_dir);
    from_cfg(cfg_train, "train_data", t.train_path);
    from_cfg(cfg_train, "val_data", t.val_path);
    from_cfg(cfg_train, "format", t.format);
    from_cfg(cfg_train, "num_prototypes", t.num_prototypes);
    from_cfg(cfg_train, "embed_dim", t.embed_dim);
    from_cfg(cfg_train, "distance", t.distance);
    from_cfg(cfg_train, "lambda_c", t.lambda_c);
    from_cfg(cfg_train, "lambda_i", t.lambda_i);
    from_cfg(cfg_train, "lambda_s", t.lambda_s);
    from_cfg(cfg_train, "learning_rate", t.learning_rate);
    from_cfg(cfg_train, "batch_size", t.batch_size);
    from_cfg(cfg_train, "max_epochs", t.max_epochs);
    from_cfg(cfg_train, "patience", t.patience);
    from_cfg(cfg_train, "min_delta", t.min_delta);
    from_cfg(cfg_train, "seed", t.seed);
    from_cfg(cfg_train, "freeze_encoder", t.freeze_encoder);
    from_cfg(cfg_train, "optimizer", t.optimizer);
    from_cfg(cfg_train, "val_fraction", t.val_fraction);
    auto* train_cmd = app.add_subcommand("train", "Train a model");
    train_cmd->add_option("--config", config_path, "JSON config file");
    train_cmd->add_option("--out", t.out_dir, "Output directory");
    train_cmd->add_option("--train-data", t.train_path, "Training dataset path");
    train_cmd->add_option("--val-data", t.val_path,
                          "Validation dataset path (default: split from train)");
    train_cmd->add_option("--format", t.format, "Dataset format: csv or jsonl");
    train_cmd->add_option("--num-prototypes", t.num_prototypes, "Prototype count Q");
    train_cmd->add_option("--embed-dim", t.embed_dim, "Embedding dimension");
    train_cmd->add_option("--distance", t.distance, "euclidean or cosine");
    train_cmd->add_option("--lambda-c", t.lambda_c, "Clustering loss weight");
    train_cmd->add_option("--lambda-i", t.lambda_i, "Interpretability loss weight");
    train_cmd->add_option("--lambda-s", t.lambda_s, "Separation loss weight");
    train_cmd->add_option("--learning-rate", t.learning_rate, "Learning rate");
    train_cmd->add_option("--batch-size", t.batch_size, "Batch size");
    train_cmd->add_option("--max-epochs", t.max_epochs, "Epoch cap");
    train_cmd->add_option("--patience", t.patience, "Early-stopping patience");
    train_cmd->add_option("--min-delta", t.min_delta, "Early-stopping threshold");
    train_cmd->add_option("--seed", t.seed, "Random seed");
    train_cmd->add_flag("--freeze-encoder", t.freeze_encoder,
                        "Keep embedding table fixed");
    train_cmd->add_option("--optimizer", t.optimizer, "adam or sgd");
    train_cmd->add_option("--val-fraction", t.val_fraction,
                          "Validation fraction when splitting");

    AttackOpts a;
    a.out_dir = default_out_root() + "/attack_out";
    from_cfg(cfg_attack, "out", a.out_dir);
    from_cfg(cfg_attack, "checkpoint", a.checkpoint);
    from_cfg(cfg_attack, "data", a.data_path);
    from_cfg(cfg_attack, "format", a.format);
    from_cfg(cfg_attack, "synonyms", a.synonyms);
    from_cfg(cfg_attack, "strategies", a.strategies);
    from_cfg(cfg_attack, "target_successes", a.target_successes);
    from_cfg(cfg_attack, "max_candidates", a.max_candidates);
    from_cfg(cfg_attack, "query_budget", a.query_budget);
    from_cfg(cfg_attack, "max_fraction", a.max_fraction);
    from_cfg(cfg_attack, "seed", a.seed);
    auto* attack_cmd = app.add_subcommand("attack", "Run targeted attack campaigns");
    attack_cmd->add_option("--config", config_path, "JSON config file");
    attack_cmd->add_option("--out", a.out_dir, "Output directory");
    attack_cmd->add_option("--checkpoint", a.checkpoint, "Model checkpoint");
    attack_cmd->add_option("--data", a.data_path, "Dataset to attack");
    attack_cmd->add_option("--format", a.format, "csv or jsonl");
    attack_cmd->add_option("--synonyms", a.synonyms, "Synonym table (tsv)");
    attack_cmd->add_option("--strategy", a.strategies,
                           "Comma list of charbug,bugblend,syngreedy,saliencysyn or 'all'");
    attack_cmd->add_option("--target-successes", a.target_successes,
                           "Stop after this many successful perturbations");
    attack_cmd->add_option("--max-candidates", a.max_candidates,
                           "Candidates tried per word");
    attack_cmd->add_option("--query-budget", a.query_budget,
                           "Oracle queries per example");
    attack_cmd->add_option("--max-fraction", a.max_fraction,
                           "Max fraction of words perturbed");
    attack_cmd->add_option("--seed", a.seed, "Random seed");

    CompileStaticOpts cs;
    cs.out_dir = default_out_root() + "/static_out";
    from_cfg(cfg_compile, "out", cs.out_dir);
    from_cfg(cfg_compile, "checkpoints", cs.checkpoints);
    from_cfg(cfg_compile, "data", cs.data_path);
    from_cfg(cfg_compile, "format", cs.format);
    from_cfg(cfg_compile, "synonyms", cs.synonyms);
    from_cfg(cfg_compile, "strategy", cs.strategy);
    from_cfg(cfg_compile, "target_successes", cs.target_successes);
    from_cfg(cfg_compile, "max_candidates", cs.max_candidates);
    from_cfg(cfg_compile, "query_budget", cs.query_budget);
    from_cfg(cfg_compile, "max_fraction", cs.max_fraction);
    from_cfg(cfg_compile, "seed", cs.seed);
    auto* compile_cmd =
        app.add_subcommand("compile-static", "Build a static perturbation set");
    compile_cmd->add_option("--config", config_path, "JSON config file");
    compile_cmd->add_option("--out", cs.out_dir, "Output directory");
    compile_cmd->add_option("--checkpoint", cs.checkpoints,
                            "Source checkpoints (repeatable)");
    compile_cmd->add_option("--data", cs.data_path, "Dataset to attack");
    compile_cmd->add_option("--format", cs.format, "csv or jsonl");
    compile_cmd->add_option("--synonyms", cs.synonyms, "Synonym table (tsv)");
    compile_cmd->add_option("--strategy", cs.strategy, "Attack strategy");
    compile_cmd->add_option("--target-successes", cs.target_successes,
                            "Success target per source");
    compile_cmd->add_option("--max-candidates", cs.max_candidates,
                            "Candidates tried per word");
    compile_cmd->add_option("--query-budget", cs.query_budget,
                            "Oracle queries per example");
    compile_cmd->add_option("--max-fraction", cs.max_fraction,
                            "Max fraction of words perturbed");
    compile_cmd->add_option("--seed", cs.seed, "Random seed");

    EvalStaticOpts es;
    es.out_dir = default_out_root() + "/static_eval_out";
    from_cfg(cfg_eval, "out", es.out_dir);
    from_cfg(cfg_eval, "checkpoint", es.checkpoint);
    from_cfg(cfg_eval, "set", es.set_path);
    from_cfg(cfg_eval, "attack", es.attack_filter);
    auto* eval_cmd =
        app.add_subcommand("eval-static", "Evaluate a model on a static set");
    eval_cmd->add_option("--config", config_path, "JSON config file");
    eval_cmd->add_option("--out", es.out_dir, "Output directory");
    eval_cmd->add_option("--checkpoint", es.checkpoint, "Target checkpoint");
    eval_cmd->add_option("--set", es.set_path, "Static perturbation set file");
    eval_cmd->add_option("--attack", es.attack_filter,
                         "Restrict to one attack name");

    SweepOpts sw;
    sw.out_dir = default_out_root() + "/sweep_out";
    from_cfg(cfg_sweep, "out", sw.out_dir);
    from_cfg(cfg_sweep, "data", sw.data_path);
    from_cfg(cfg_sweep, "format", sw.format);
    from_cfg(cfg_sweep, "synonyms", sw.synonyms);
    from_cfg(cfg_sweep, "prototypes", sw.prototypes);
    from_cfg(cfg_sweep, "lambda_c", sw.lambda_c);
    from_cfg(cfg_sweep, "lambda_i", sw.lambda_i);
    from_cfg(cfg_sweep, "lambda_s", sw.lambda_s);
    from_cfg(cfg_sweep, "distances", sw.distances);
    from_cfg(cfg_sweep, "seeds", sw.seeds);
    from_cfg(cfg_sweep, "strategies", sw.strategies);
    from_cfg(cfg_sweep, "embed_dim", sw.embed_dim);
    from_cfg(cfg_sweep, "target_successes", sw.target_successes);
    from_cfg(cfg_sweep, "batch_size", sw.batch_size);
    from_cfg(cfg_sweep, "max_epochs", sw.max_epochs);
    from_cfg(cfg_sweep, "learning_rate", sw.learning_rate);
    from_cfg(cfg_sweep, "aggregate", sw.aggregate);
    from_cfg(cfg_sweep, "resume", sw.resume);
    from_cfg(cfg_sweep, "workers", sw.workers);
    auto* sweep_cmd =
        app.add_subcommand("sweep", "Grid sweep: train + attack per point");
    sweep_cmd->add_option("--config", config_path, "JSON config file");
    sweep_cmd->add_option("--out", sw.out_dir, "Output directory");
    sweep_cmd->add_option("--data", sw.data_path, "Dataset (split 60/20/20)");
    sweep_cmd->add_option("--format", sw.format, "csv or jsonl");
    sweep_cmd->add_option("--synonyms", sw.synonyms, "Synonym table (tsv)");
    sweep_cmd->add_option("--prototypes", sw.prototypes, "Q values (repeatable)");
    sweep_cmd->add_option("--lambda-c", sw.lambda_c, "Clustering weights");
    sweep_cmd->add_option("--lambda-i", sw.lambda_i, "Interpretability weights");
    sweep_cmd->add_option("--lambda-s", sw.lambda_s, "Separation weights");
    sweep_cmd->add_option("--distances", sw.distances, "euclidean/cosine values");
    sweep_cmd->add_option("--seeds", sw.seeds, "Seeds (repeatable)");
    sweep_cmd->add_option("--strategies", sw.strategies,
                          "Comma list of attacks or 'all'");
    sweep_cmd->add_option("--embed-dim", sw.embed_dim, "Embedding dimension");
    sweep_cmd->add_option("--target-successes", sw.target_successes,
                          "Success target per campaign");
    sweep_cmd->add_option("--batch-size", sw.batch_size, "Batch size");
    sweep_cmd->add_option("--max-epochs", sw.max_epochs, "Epoch cap");
    sweep_cmd->add_option("--learning-rate", sw.learning_rate, "Learning rate");
    sweep_cmd->add_option("--aggregate", sw.aggregate,
                          "Also report 'best' or 'average' ASR per attack");
    sweep_cmd->add_flag("--resume", sw.resume,
                        "Append to an existing table without duplicating rows");
    sweep_cmd->add_option("--workers", sw.workers, "Worker count (sequential run)");

    ExplainOpts ex;
    ex.out_dir = default_out_root() + "/explain_out";
    from_cfg(cfg_explain, "out", ex.out_dir);
    from_cfg(cfg_explain, "checkpoint", ex.checkpoint);
    from_cfg(cfg_explain, "data", ex.data_path);
    from_cfg(cfg_explain, "format", ex.format);
    from_cfg(cfg_explain, "texts", ex.texts);
    from_cfg(cfg_explain, "pairs", ex.pairs_path);
    from_cfg(cfg_explain, "k", ex.k);
    from_cfg(cfg_explain, "card_neighbors", ex.card_neighbors);
    auto* explain_cmd = app.add_subcommand(
        "explain", "Prototype cards and prediction explanations");
    explain_cmd->add_option("--config", config_path, "JSON config file");
    explain_cmd->add_option("--out", ex.out_dir, "Output directory");
    explain_cmd->add_option("--checkpoint", ex.checkpoint, "Model checkpoint");
    explain_cmd->add_option("--data", ex.data_path, "Training dataset for cards");
    explain_cmd->add_option("--format", ex.format, "csv or jsonl");
    explain_cmd->add_option("--text", ex.texts, "Text to explain (repeatable)");
    explain_cmd->add_option("--pairs", ex.pairs_path,
                            "JSONL of {original, perturbed} pairs");
    explain_cmd->add_option("--k", ex.k, "Top activated prototypes per text");
    explain_cmd->add_option("--card-neighbors", ex.card_neighbors,
                            "Nearest examples per prototype card");

    ReportOpts rp;
    from_cfg(cfg_report, "records", rp.records_paths);
    from_cfg(cfg_report, "sweep", rp.sweep_path);
    auto* report_cmd =
        app.add_subcommand("report", "Render record files or sweep tables");
    report_cmd->add_option("--config", config_path, "JSON config file");
    report_cmd->add_option("--records", rp.records_paths,
                           "Perturbation record files (repeatable)");
    report_cmd->add_option("--sweep", rp.sweep_path, "Sweep table to render");

    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e);
      return code == 0 ? 0 : 2;
    }

    if (train_cmd->parsed()) return cmd_train(t);
    if (attack_cmd->parsed()) return cmd_attack(a);
    if (compile_cmd->parsed()) return cmd_compile_static(cs);
    if (eval_cmd->parsed()) return cmd_eval_static(es);
    if (sweep_cmd->parsed()) return cmd_sweep(sw);
    if (explain_cmd->parsed()) return cmd_explain(ex);
    if (report_cmd->parsed()) return cmd_report(rp);
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
