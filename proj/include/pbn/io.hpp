#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pbn/attack.hpp"
#include "pbn/dataset.hpp"
#include "pbn/evaluation.hpp"
#include "pbn/train.hpp"

namespace pbn {

using json = nlohmann::json;

inline constexpr int kCheckpointVersion = 1;
inline constexpr int kPerturbationSetVersion = 1;

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Write-temp-then-rename so a failed save never leaves a torn file.
inline void atomic_write(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open file for writing: " + tmp);
    out << content;
    if (!out) throw std::runtime_error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

// Minimal RFC-4180 style row parser (quoted fields, doubled quotes).
inline std::vector<std::string> parse_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace detail

// csv: header `text,label`. jsonl: objects with "text" and "label".
// Labels map to indices by first appearance; integer labels pass through.
inline LabeledDataset load_dataset(const std::string& path,
                                   const std::string& format) {
  LabeledDataset ds;
  std::map<std::string, std::size_t> label_map;
  auto map_label = [&](const std::string& name) {
    auto it = label_map.find(name);
    if (it != label_map.end()) return it->second;
    const std::size_t idx = ds.label_names.size();
    label_map.emplace(name, idx);
    ds.label_names.push_back(name);
    return idx;
  };

  std::istringstream in(detail::read_file(path));
  std::string line;
  std::size_t lineno = 0;
  if (format == "csv") {
    if (!std::getline(in, line) || detail::parse_csv_row(line) !=
                                       std::vector<std::string>{"text", "label"})
      throw std::runtime_error(path + ":1: expected header 'text,label'");
    ++lineno;
    std::int64_t id = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto fields = detail::parse_csv_row(line);
      if (fields.size() != 2)
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": expected 2 fields, got " +
                                 std::to_string(fields.size()));
      ds.examples.push_back({id++, fields[0], map_label(fields[1])});
    }
  } else if (format == "jsonl") {
    std::int64_t id = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": malformed json: " + e.what());
      }
      if (!j.contains("text") || !j.contains("label"))
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": missing 'text' or 'label' field");
      std::size_t label;
      if (j["label"].is_number_integer()) {
        label = j["label"].get<std::size_t>();
        while (ds.label_names.size() <= label)
          ds.label_names.push_back(std::to_string(ds.label_names.size()));
      } else {
        label = map_label(j["label"].get<std::string>());
      }
      ds.examples.push_back({id++, j["text"].get<std::string>(), label});
    }
  } else {
    throw std::invalid_argument("load_dataset: unknown format '" + format +
                                "' (expected csv or jsonl)");
  }
  return ds;
}

inline void save_dataset_csv(const LabeledDataset& ds, const std::string& path) {
  std::ostringstream out;
  out << "text,label\n";
  for (const auto& ex : ds.examples)
    out << detail::csv_escape(ex.text) << ","
        << detail::csv_escape(ds.label_names.at(ex.label)) << "\n";
  detail::atomic_write(path, out.str());
}

// One line per headword: `word<TAB>syn1,syn2,...`; lowercase enforced.
inline SynonymTable load_synonym_table(const std::string& path) {
  SynonymTable table;
  std::istringstream in(detail::read_file(path));
  std::string line;
  std::size_t lineno = 0;
  auto lower = [](std::string s) {
    for (char& c : s)
      if (static_cast<unsigned char>(c) < 0x80)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected 'word<TAB>syn1,syn2,...'");
    const std::string word = lower(line.substr(0, tab));
    std::vector<std::string> syns;
    std::istringstream rest(line.substr(tab + 1));
    std::string syn;
    while (std::getline(rest, syn, ',')) {
      const auto first = syn.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      syn = lower(syn.substr(first, syn.find_last_not_of(" \t\r") - first + 1));
      if (syn != word) syns.push_back(syn);
    }
    if (!syns.empty()) table[word] = std::move(syns);
  }
  return table;
}

inline json record_to_json(const PerturbationRecord& r) {
  return json{{"original_id", r.original_id},
              {"original_text", r.original_text},
              {"perturbed_text", r.perturbed_text},
              {"gold_label", r.gold_label},
              {"attack", r.attack_name},
              {"queries_used", r.queries_used},
              {"words_perturbed_fraction", r.words_perturbed_fraction},
              {"success", r.success},
              {"original_correct", r.original_correct}};
}

inline PerturbationRecord record_from_json(const json& j, const std::string& where) {
  for (const char* field :
       {"original_id", "original_text", "perturbed_text", "gold_label",
        "attack", "queries_used", "words_perturbed_fraction", "success",
        "original_correct"})
    if (!j.contains(field))
      throw std::runtime_error(where + ": missing field '" + field + "'");
  PerturbationRecord r;
  r.original_id = j["original_id"].get<std::int64_t>();
  r.original_text = j["original_text"].get<std::string>();
  r.perturbed_text = j["perturbed_text"].get<std::string>();
  r.gold_label = j["gold_label"].get<std::size_t>();
  r.attack_name = j["attack"].get<std::string>();
  r.queries_used = j["queries_used"].get<std::uint64_t>();
  r.words_perturbed_fraction = j["words_perturbed_fraction"].get<double>();
  r.success = j["success"].get<bool>();
  r.original_correct = j["original_correct"].get<bool>();
  return r;
}

inline void save_records(const std::vector<PerturbationRecord>& records,
                         const std::string& path) {
  std::ostringstream out;
  for (const auto& r : records) out << record_to_json(r).dump() << "\n";
  detail::atomic_write(path, out.str());
}

inline std::vector<PerturbationRecord> load_records(const std::string& path) {
  std::vector<PerturbationRecord> records;
  std::istringstream in(detail::read_file(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    records.push_back(record_from_json(
        json::parse(line, nullptr, true), path + ":" + std::to_string(lineno)));
  }
  return records;
}

inline void save_perturbation_set(const StaticPerturbationSet& set,
                                  const std::string& path) {
  std::ostringstream out;
  json header{{"format_version", kPerturbationSetVersion},
              {"source_models", set.source_models}};
  out << header.dump() << "\n";
  for (const auto& e : set.entries) {
    json j = record_to_json(e.record);
    j["source_model"] = e.source_model;
    out << j.dump() << "\n";
  }
  detail::atomic_write(path, out.str());
}

inline StaticPerturbationSet load_perturbation_set(const std::string& path) {
  StaticPerturbationSet set;
  std::istringstream in(detail::read_file(path));
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error(path + ": empty perturbation-set file");
  const json header = json::parse(line);
  if (!header.contains("format_version"))
    throw std::runtime_error(path + ":1: missing field 'format_version'");
  const int version = header["format_version"].get<int>();
  if (version != kPerturbationSetVersion)
    throw std::runtime_error(path + ": format version " +
                             std::to_string(version) + ", expected " +
                             std::to_string(kPerturbationSetVersion));
  set.source_models = header["source_models"].get<std::vector<std::string>>();
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const json j = json::parse(line);
    const std::string where = path + ":" + std::to_string(lineno);
    if (!j.contains("source_model"))
      throw std::runtime_error(where + ": missing field 'source_model'");
    StaticEntry e;
    e.source_model = j["source_model"].get<std::string>();
    e.record = record_from_json(j, where);
    e.original_id = e.record.original_id;
    set.entries.push_back(std::move(e));
  }
  return set;
}

namespace detail {

inline json matrix_to_json(const Matrix& m) {
  return json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

inline Matrix matrix_from_json(const json& j) {
  Matrix m;
  m.rows = j["rows"].get<std::size_t>();
  m.cols = j["cols"].get<std::size_t>();
  m.data = j["data"].get<Vec>();
  if (m.data.size() != m.rows * m.cols)
    throw std::runtime_error("matrix shape mismatch: " + std::to_string(m.rows) +
                             "x" + std::to_string(m.cols) + " with " +
                             std::to_string(m.data.size()) + " values");
  return m;
}

}  // namespace detail

// Doubles survive the JSON round trip exactly (shortest-round-trip printing).
inline void save_checkpoint(const ModelState& state, const std::string& path) {
  json j;
  j["format_version"] = kCheckpointVersion;
  j["config"] = {{"num_prototypes", state.config.num_prototypes},
                 {"num_classes", state.config.num_classes},
                 {"embed_dim", state.config.embed_dim},
                 {"distance", to_string(state.config.distance)},
                 {"lambda_c", state.config.lambda_c},
                 {"lambda_i", state.config.lambda_i},
                 {"lambda_s", state.config.lambda_s}};
  j["prototypes"] = detail::matrix_to_json(state.prototypes.prototypes);
  j["head"] = detail::matrix_to_json(state.head.weights);
  j["table"] = detail::matrix_to_json(state.table.vectors);
  j["table_trainable"] = state.table.trainable;
  j["vocab"] = state.vocab.index_to_token;
  j["unk_index"] = state.vocab.unk_index;
  j["rng_state"] = state.rng.serialize();
  detail::atomic_write(path, j.dump());
}

inline ModelState load_checkpoint(const std::string& path) {
  json j;
  try {
    j = json::parse(detail::read_file(path));
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": corrupted checkpoint: " + e.what());
  }
  if (!j.contains("format_version"))
    throw std::runtime_error(path + ": missing field 'format_version'");
  const int version = j["format_version"].get<int>();
  if (version != kCheckpointVersion)
    throw std::runtime_error(path + ": checkpoint version " +
                             std::to_string(version) + ", expected " +
                             std::to_string(kCheckpointVersion));
  ModelState state;
  const json& c = j["config"];
  state.config.num_prototypes = c["num_prototypes"].get<std::size_t>();
  state.config.num_classes = c["num_classes"].get<std::size_t>();
  state.config.embed_dim = c["embed_dim"].get<std::size_t>();
  state.config.distance = distance_kind_from_string(c["distance"].get<std::string>());
  state.config.lambda_c = c["lambda_c"].get<double>();
  state.config.lambda_i = c["lambda_i"].get<double>();
  state.config.lambda_s = c["lambda_s"].get<double>();
  state.prototypes.prototypes = detail::matrix_from_json(j["prototypes"]);
  state.head.weights = detail::matrix_from_json(j["head"]);
  state.table.vectors = detail::matrix_from_json(j["table"]);
  state.table.trainable = j["table_trainable"].get<bool>();
  state.vocab.index_to_token = j["vocab"].get<std::vector<std::string>>();
  for (std::size_t i = 0; i < state.vocab.index_to_token.size(); ++i)
    state.vocab.token_to_index[state.vocab.index_to_token[i]] = i;
  state.vocab.unk_index = j["unk_index"].get<std::size_t>();
  state.rng.deserialize(j["rng_state"].get<std::string>());

  if (state.prototypes.prototypes.rows != state.config.num_prototypes ||
      state.prototypes.prototypes.cols != state.config.embed_dim ||
      state.head.weights.rows != state.config.num_classes ||
      state.head.weights.cols != state.config.num_prototypes ||
      state.table.vectors.rows != state.vocab.size() ||
      state.table.vectors.cols != state.config.embed_dim)
    throw std::runtime_error(path + ": checkpoint shapes inconsistent with config");
  return state;
}

}  // namespace pbn
