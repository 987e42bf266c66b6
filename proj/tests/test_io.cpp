#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "pbn/io.hpp"
#include "pbn/train.hpp"

using namespace pbn;
namespace fs = std::filesystem;

namespace {

// Per-process scratch directory, cleaned up at exit.
fs::path scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() /
                 ("pbn_io_test_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string write_temp(const std::string& name, const std::string& content) {
  const fs::path p = scratch() / name;
  std::ofstream out(p, std::ios::binary);
  out << content;
  return p.string();
}

}  // namespace

TEST_CASE("load_dataset csv") {
  SECTION("basic rows with first-appearance label mapping") {
    const auto path = write_temp(
        "basic.csv", "text,label\nhello world,pos\nbad film,neg\nmore,pos\n");
    const LabeledDataset ds = load_dataset(path, "csv");
    REQUIRE(ds.size() == 3);
    CHECK(ds.label_names == std::vector<std::string>{"pos", "neg"});
    CHECK(ds.examples[0].text == "hello world");
    CHECK(ds.examples[0].label == 0);
    CHECK(ds.examples[1].label == 1);
    CHECK(ds.examples[2].label == 0);
    CHECK(ds.examples[2].id == 2);
  }

  SECTION("quoted fields with commas and embedded quotes") {
    const auto path = write_temp(
        "quoted.csv", "text,label\n\"a, b \"\"c\"\"\",pos\n");
    const LabeledDataset ds = load_dataset(path, "csv");
    REQUIRE(ds.size() == 1);
    CHECK(ds.examples[0].text == "a, b \"c\"");
  }

  SECTION("bad header names the first line") {
    const auto path = write_temp("badhdr.csv", "txt,lbl\nfoo,pos\n");
    CHECK_THROWS_WITH(load_dataset(path, "csv"),
                      Catch::Matchers::ContainsSubstring(":1:"));
  }

  SECTION("wrong field count names the offending line") {
    const auto path = write_temp("badrow.csv", "text,label\na,b\nx,y,z\n");
    CHECK_THROWS_WITH(load_dataset(path, "csv"),
                      Catch::Matchers::ContainsSubstring(":3:"));
  }

  SECTION("missing file and unknown format") {
    CHECK_THROWS_AS(load_dataset((scratch() / "nope.csv").string(), "csv"),
                    std::runtime_error);
    const auto path = write_temp("fmt.csv", "text,label\n");
    CHECK_THROWS_AS(load_dataset(path, "parquet"), std::invalid_argument);
  }
}

TEST_CASE("load_dataset jsonl") {
  SECTION("string and integer labels") {
    const auto path = write_temp(
        "mix.jsonl",
        "{\"text\":\"one\",\"label\":\"pos\"}\n"
        "{\"text\":\"two\",\"label\":\"neg\"}\n");
    const LabeledDataset ds = load_dataset(path, "jsonl");
    REQUIRE(ds.size() == 2);
    CHECK(ds.examples[0].label == 0);
    CHECK(ds.examples[1].label == 1);

    const auto ints = write_temp(
        "ints.jsonl",
        "{\"text\":\"one\",\"label\":1}\n{\"text\":\"two\",\"label\":0}\n");
    const LabeledDataset di = load_dataset(ints, "jsonl");
    CHECK(di.examples[0].label == 1);
    CHECK(di.examples[1].label == 0);
    CHECK(di.label_names.size() == 2);
  }

  SECTION("malformed json and missing fields name the line") {
    const auto bad = write_temp("bad.jsonl", "{\"text\":\"ok\",\"label\":0}\nnot json\n");
    CHECK_THROWS_WITH(load_dataset(bad, "jsonl"),
                      Catch::Matchers::ContainsSubstring(":2:"));
    const auto missing =
        write_temp("missing.jsonl", "{\"text\":\"no label here\"}\n");
    CHECK_THROWS_WITH(load_dataset(missing, "jsonl"),
                      Catch::Matchers::ContainsSubstring("label"));
  }
}

TEST_CASE("save_dataset_csv round trip") {
  LabeledDataset ds;
  ds.label_names = {"pos", "neg"};
  ds.examples = {{0, "plain words", 0},
                 {1, "with, comma and \"quotes\"", 1},
                 {2, "more", 0}};
  const auto path = (scratch() / "roundtrip.csv").string();
  save_dataset_csv(ds, path);
  const LabeledDataset back = load_dataset(path, "csv");
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.examples[i].text == ds.examples[i].text);
    CHECK(back.examples[i].label == ds.examples[i].label);
  }
  CHECK(back.label_names == ds.label_names);
  // No temp file left behind.
  CHECK_FALSE(fs::exists(path + ".tmp"));
}

TEST_CASE("load_synonym_table") {
  const auto path = write_temp(
      "syn.tsv",
      "# comment line\n"
      "Good\tFINE,decent , \n"
      "bad\tpoor\n"
      "self\tself\n"
      "\n");
  const SynonymTable t = load_synonym_table(path);
  REQUIRE(t.count("good") == 1);
  CHECK(t.at("good") == std::vector<std::string>{"fine", "decent"});
  CHECK(t.at("bad") == std::vector<std::string>{"poor"});
  // A word whose only synonym is itself is dropped.
  CHECK(t.count("self") == 0);

  const auto bad = write_temp("syn_bad.tsv", "word-without-tab\n");
  CHECK_THROWS_WITH(load_synonym_table(bad),
                    Catch::Matchers::ContainsSubstring(":1:"));
}

TEST_CASE("perturbation record JSONL round trip") {
  PerturbationRecord a;
  a.original_id = 42;
  a.original_text = "the original";
  a.perturbed_text = "the perturbèd";
  a.gold_label = 1;
  a.attack_name = "charbug";
  a.queries_used = 137;
  a.words_perturbed_fraction = 0.1 + 0.2;  // not exactly representable
  a.success = true;
  a.original_correct = true;
  PerturbationRecord b;
  b.original_id = 7;
  b.success = false;

  const auto path = (scratch() / "records.jsonl").string();
  save_records({a, b}, path);
  const auto back = load_records(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].original_id == 42);
  CHECK(back[0].perturbed_text == "the perturbèd");
  // Bit-exact double round trip.
  CHECK(back[0].words_perturbed_fraction == a.words_perturbed_fraction);
  CHECK(back[0].queries_used == 137);
  CHECK(back[0].success);
  CHECK_FALSE(back[1].success);

  const auto missing = write_temp("rec_missing.jsonl",
                                  "{\"original_id\":1,\"success\":true}\n");
  CHECK_THROWS_WITH(load_records(missing),
                    Catch::Matchers::ContainsSubstring("missing field"));
}

TEST_CASE("static perturbation set round trip and versioning") {
  StaticPerturbationSet set;
  set.source_models = {"modelA", "modelB"};
  for (int i = 0; i < 2; ++i) {
    StaticEntry e;
    e.original_id = i;
    e.source_model = i ? "modelB" : "modelA";
    e.record.original_id = i;
    e.record.perturbed_text = "text " + std::to_string(i);
    e.record.attack_name = "syngreedy";
    e.record.success = true;
    set.entries.push_back(e);
  }
  const auto path = (scratch() / "static.jsonl").string();
  save_perturbation_set(set, path);
  const auto back = load_perturbation_set(path);
  CHECK(back.source_models == set.source_models);
  REQUIRE(back.entries.size() == 2);
  CHECK(back.entries[1].source_model == "modelB");
  CHECK(back.entries[1].record.perturbed_text == "text 1");
  CHECK(back.entries[1].original_id == 1);

  const auto vbad = write_temp(
      "static_v9.jsonl", "{\"format_version\":9,\"source_models\":[]}\n");
  CHECK_THROWS_WITH(load_perturbation_set(vbad),
                    Catch::Matchers::ContainsSubstring("version 9"));
  const auto empty = write_temp("static_empty.jsonl", "");
  CHECK_THROWS_AS(load_perturbation_set(empty), std::runtime_error);
}

TEST_CASE("checkpoint round trip") {
  LabeledDataset ds;
  ds.label_names = {"a", "b"};
  ds.examples = {{0, "alpha beta", 0}, {1, "gamma delta", 1}};
  const Vocabulary vocab = build_vocabulary(ds);
  const PBNConfig cfg{3, 2, 5, DistanceKind::Cosine, 0.25, 0.5, 0.75};
  ModelState state = init_model(cfg, vocab, 99);
  state.rng.uniform();  // advance so the stream position is nontrivial

  const auto path = (scratch() / "model.ckpt").string();
  save_checkpoint(state, path);
  ModelState back = load_checkpoint(path);

  CHECK(back.config.num_prototypes == 3);
  CHECK(back.config.distance == DistanceKind::Cosine);
  CHECK(back.config.lambda_c == 0.25);
  // Bit-exact parameter round trip.
  CHECK(back.prototypes.prototypes == state.prototypes.prototypes);
  CHECK(back.head.weights == state.head.weights);
  CHECK(back.table.vectors == state.table.vectors);
  CHECK(back.vocab.index_to_token == state.vocab.index_to_token);
  CHECK(back.vocab.lookup("alpha") == state.vocab.lookup("alpha"));
  // RNG stream resumes identically.
  CHECK(back.rng.uniform() == state.rng.uniform());

  SECTION("version mismatch names both versions") {
    json j = json::parse(detail::read_file(path));
    j["format_version"] = 2;
    const auto v2 = write_temp("model_v2.ckpt", j.dump());
    CHECK_THROWS_WITH(load_checkpoint(v2),
                      Catch::Matchers::ContainsSubstring("version 2") &&
                          Catch::Matchers::ContainsSubstring("expected 1"));
  }

  SECTION("corrupted file is rejected") {
    const auto bad = write_temp("model_bad.ckpt", "{not valid json");
    CHECK_THROWS_WITH(load_checkpoint(bad),
                      Catch::Matchers::ContainsSubstring("corrupted"));
  }

  SECTION("shape inconsistency is rejected") {
    json j = json::parse(detail::read_file(path));
    j["config"]["num_prototypes"] = 4;  // prototypes matrix still has 3 rows
    const auto bad = write_temp("model_shape.ckpt", j.dump());
    CHECK_THROWS_WITH(load_checkpoint(bad),
                      Catch::Matchers::ContainsSubstring("shapes"));
  }

  SECTION("flat data size must match rows x cols") {
    json j = json::parse(detail::read_file(path));
    j["head"]["data"].push_back(0.0);
    const auto bad = write_temp("model_data.ckpt", j.dump());
    CHECK_THROWS_AS(load_checkpoint(bad), std::runtime_error);
  }
}

TEST_CASE("split_dataset") {
  LabeledDataset ds;
  ds.label_names = {"a", "b"};
  for (std::int64_t i = 0; i < 100; ++i)
    ds.examples.push_back({i, "text " + std::to_string(i),
                           static_cast<std::size_t>(i % 2)});

  SECTION("fractions are honored and examples partition exactly") {
    const SplitResult s = split_dataset(ds, 0.8, 0.1, 0.1, 5);
    CHECK(s.train.size() == 80);
    CHECK(s.validation.size() == 10);
    CHECK(s.test.size() == 10);
    std::set<std::int64_t> ids;
    for (const auto* part : {&s.train, &s.validation, &s.test})
      for (const auto& ex : part->examples) ids.insert(ex.id);
    CHECK(ids.size() == 100);
  }

  SECTION("stratified: per-class proportions are preserved") {
    const SplitResult s = split_dataset(ds, 0.8, 0.1, 0.1, 5);
    std::size_t train_class0 = 0;
    for (const auto& ex : s.train.examples) train_class0 += ex.label == 0;
    CHECK(train_class0 == 40);
  }

  SECTION("seed determinism and sensitivity") {
    const SplitResult a = split_dataset(ds, 0.6, 0.2, 0.2, 11);
    const SplitResult b = split_dataset(ds, 0.6, 0.2, 0.2, 11);
    const SplitResult c = split_dataset(ds, 0.6, 0.2, 0.2, 12);
    REQUIRE(a.train.size() == b.train.size());
    bool same = true, diff = false;
    for (std::size_t i = 0; i < a.train.size(); ++i) {
      same = same && a.train.examples[i].id == b.train.examples[i].id;
      diff = diff || a.train.examples[i].id != c.train.examples[i].id;
    }
    CHECK(same);
    CHECK(diff);
  }

  SECTION("invalid fractions are rejected") {
    CHECK_THROWS_AS(split_dataset(ds, 0.5, 0.2, 0.2, 0), std::invalid_argument);
    CHECK_THROWS_AS(split_dataset(ds, -0.1, 0.6, 0.5, 0), std::invalid_argument);
  }
}
