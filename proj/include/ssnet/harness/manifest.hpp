#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ssnet/error.hpp"

namespace ssnet::harness {

enum class Split { kTrain, kTest };

inline std::string split_name(Split s) { return s == Split::kTrain ? "train" : "test"; }

struct ManifestEntry {
  std::filesystem::path path;  // resolved against the manifest's directory
  std::string label;
  Split split = Split::kTrain;
};

// Clip table with a lexicographically sorted label vocabulary; class ids are
// positions in that vocabulary.
struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> vocabulary;

  int label_id(const std::string& label) const {
    auto it = std::lower_bound(vocabulary.begin(), vocabulary.end(), label);
    if (it == vocabulary.end() || *it != label) throw Error("label '" + label + "' not in vocabulary");
    return static_cast<int>(it - vocabulary.begin());
  }

  std::size_t count(Split s) const {
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [s](const auto& e) { return e.split == s; }));
  }

  void require_both_splits() const {
    if (count(Split::kTrain) == 0) throw Error("manifest has no training clips");
    if (count(Split::kTest) == 0) throw Error("manifest has no test clips");
  }
};

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, '\t')) out.push_back(field);
  if (!line.empty() && line.back() == '\t') out.emplace_back();
  return out;
}

inline std::optional<Split> parse_split(const std::string& s) {
  if (s == "train" || s == "training") return Split::kTrain;
  if (s == "test" || s == "evaluate" || s == "eval") return Split::kTest;
  return std::nullopt;
}

struct RawRow {
  std::string file;
  std::string label;
  std::optional<Split> split;
  std::size_t line = 0;
};

inline std::vector<RawRow> read_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest: " + path.string());
  std::vector<RawRow> rows;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_tabs(line);
    if (fields.size() < 2) {
      throw FormatError(path.string() + ":" + std::to_string(n) + ": expected filename<TAB>scene_label");
    }
    if (fields[0] == "filename") continue;  // header row
    RawRow row{fields[0], fields[1], std::nullopt, n};
    if (fields.size() >= 3 && !fields[2].empty()) {
      row.split = parse_split(fields[2]);
      if (!row.split) {
        throw FormatError(path.string() + ":" + std::to_string(n) + ": unknown split '" + fields[2] + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline DatasetManifest finish(std::vector<ManifestEntry> entries,
                              const std::optional<std::vector<std::string>>& vocabulary) {
  DatasetManifest m;
  std::set<std::filesystem::path> seen;
  for (const auto& e : entries) {
    if (!seen.insert(e.path.lexically_normal()).second) throw Error("duplicate clip path: " + e.path.string());
  }
  if (vocabulary) {
    m.vocabulary = *vocabulary;
    std::sort(m.vocabulary.begin(), m.vocabulary.end());
    for (const auto& e : entries) {
      if (!std::binary_search(m.vocabulary.begin(), m.vocabulary.end(), e.label)) {
        throw Error("unknown label '" + e.label + "' for " + e.path.string());
      }
    }
  } else {
    std::set<std::string> labels;
    for (const auto& e : entries) labels.insert(e.label);
    m.vocabulary.assign(labels.begin(), labels.end());
  }
  m.entries = std::move(entries);
  return m;
}

}  // namespace detail

// TSV with filename, scene_label and a split column (train | test/evaluate).
// Relative filenames resolve against the manifest's directory.
inline DatasetManifest parse_manifest(const std::filesystem::path& path,
                                      const std::optional<std::vector<std::string>>& vocabulary = std::nullopt) {
  const auto base = path.parent_path();
  std::vector<ManifestEntry> entries;
  for (const auto& row : detail::read_rows(path)) {
    if (!row.split) {
      throw FormatError(path.string() + ":" + std::to_string(row.line) +
                        ": missing split column (use a train/test file pair instead)");
    }
    entries.push_back({base / row.file, row.label, *row.split});
  }
  return detail::finish(std::move(entries), vocabulary);
}

// DCASE-style fold files (e.g. fold1_train.txt + fold1_evaluate.txt); any
// split column in them is ignored.
inline DatasetManifest parse_manifest_pair(const std::filesystem::path& train, const std::filesystem::path& test,
                                           const std::optional<std::vector<std::string>>& vocabulary = std::nullopt) {
  std::vector<ManifestEntry> entries;
  for (const auto& row : detail::read_rows(train)) entries.push_back({train.parent_path() / row.file, row.label, Split::kTrain});
  for (const auto& row : detail::read_rows(test)) entries.push_back({test.parent_path() / row.file, row.label, Split::kTest});
  return detail::finish(std::move(entries), vocabulary);
}

// Writes paths relative to `path`'s directory when possible.
inline void write_manifest(const std::filesystem::path& path, const DatasetManifest& m,
                           std::optional<Split> only = std::nullopt, bool with_split = true) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest: " + path.string());
  const auto base = path.parent_path();
  for (const auto& e : m.entries) {
    if (only && e.split != *only) continue;
    auto rel = base.empty() ? e.path : e.path.lexically_relative(base);
    if (rel.empty()) rel = e.path;
    out << rel.generic_string() << '\t' << e.label;
    if (with_split) out << '\t' << split_name(e.split);
    out << '\n';
  }
}

}  // namespace ssnet::harness
