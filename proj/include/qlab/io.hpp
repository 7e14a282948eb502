#pragma once

// MDP interchange format and CSV result files.
//
// MDP documents are JSON objects:
//   { "n_states": N, "n_actions": M, "discount": g,
//     "reward":     [N*M numbers, row-major over (s, a)],
//     "transition": [N*M*N numbers, row-major over (s, a, s')] }
// Numbers are written in shortest round-trip form, so save/load is exact.

#include "qlab/types.hpp"

#include <json.hpp>

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace qlab {

/// Shortest decimal string that parses back to exactly `v`.
inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

inline nlohmann::json mdp_to_json(const TabularMdp& mdp) {
  nlohmann::json j;
  j["n_states"] = mdp.n_states;
  j["n_actions"] = mdp.n_actions;
  j["discount"] = mdp.discount;
  std::vector<double> reward, transition;
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) {
      reward.push_back(mdp.reward(s, a));
      for (int s2 = 0; s2 < mdp.n_states; ++s2) transition.push_back(mdp.p(s, a, s2));
    }
  j["reward"] = reward;
  j["transition"] = transition;
  return j;
}

inline TabularMdp mdp_from_json(const nlohmann::json& j) {
  try {
    TabularMdp mdp;
    mdp.n_states = j.at("n_states").get<int>();
    mdp.n_actions = j.at("n_actions").get<int>();
    mdp.discount = j.at("discount").get<double>();
    if (mdp.n_states <= 0 || mdp.n_actions <= 0)
      throw IoError("mdp: n_states and n_actions must be positive");
    const auto reward = j.at("reward").get<std::vector<double>>();
    const auto transition = j.at("transition").get<std::vector<double>>();
    const std::size_t pairs = static_cast<std::size_t>(mdp.n_states) * mdp.n_actions;
    if (reward.size() != pairs)
      throw IoError("mdp: reward has " + std::to_string(reward.size()) + " entries, expected " +
                    std::to_string(pairs));
    if (transition.size() != pairs * mdp.n_states)
      throw IoError("mdp: transition has " + std::to_string(transition.size()) +
                    " entries, expected " + std::to_string(pairs * mdp.n_states));
    mdp.reward.resize(mdp.n_states, mdp.n_actions);
    mdp.transition.resize(static_cast<Eigen::Index>(pairs), mdp.n_states);
    std::size_t t = 0;
    for (int s = 0; s < mdp.n_states; ++s)
      for (int a = 0; a < mdp.n_actions; ++a) {
        mdp.reward(s, a) = reward[static_cast<std::size_t>(mdp.pair_index(s, a))];
        for (int s2 = 0; s2 < mdp.n_states; ++s2) mdp.transition(mdp.pair_index(s, a), s2) = transition[t++];
      }
    return mdp;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("mdp: malformed document: ") + e.what());
  }
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline TabularMdp load_mdp(const std::string& path) {
  const std::string text = read_text_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("'" + path + "' is not valid JSON: " + e.what());
  }
  return mdp_from_json(j);
}

inline void save_mdp(const TabularMdp& mdp, const std::string& path) {
  write_text_file(path, mdp_to_json(mdp).dump(2) + "\n");
}

/// CSV table with '#'-prefixed "key: value" metadata lines before the header.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  void add_metadata(const std::string& key, const std::string& value) {
    metadata_.emplace_back(key, value);
  }

  void add_row(const std::vector<double>& row) {
    if (row.size() != columns_.size()) throw DimensionError("csv: row width differs from header");
    std::string line;
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) line += ',';
      line += format_double(row[i]);
    }
    rows_.push_back(std::move(line));
  }

  const std::vector<std::string>& columns() const { return columns_; }
  std::size_t row_count() const { return rows_.size(); }

  std::string str() const {
    std::string out;
    for (const auto& [k, v] : metadata_) out += "# " + k + ": " + v + "\n";
    for (std::size_t i = 0; i < columns_.size(); ++i) {
      if (i) out += ',';
      out += columns_[i];
    }
    out += '\n';
    for (const auto& r : rows_) out += r + '\n';
    return out;
  }

  void save(const std::string& path) const { write_text_file(path, str()); }

 private:
  std::vector<std::string> columns_;
  std::vector<std::pair<std::string, std::string>> metadata_;
  std::vector<std::string> rows_;
};

struct ParsedCsv {
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::string meta(const std::string& key) const {
    for (const auto& [k, v] : metadata)
      if (k == key) return v;
    throw IoError("csv: no metadata key '" + key + "'");
  }
  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    throw IoError("csv: no column '" + name + "'");
  }
};

inline ParsedCsv parse_csv(const std::string& text) {
  ParsedCsv out;
  std::istringstream in(text);
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(s);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto colon = line.find(": ");
      if (colon == std::string::npos) continue;
      out.metadata.emplace_back(line.substr(2, colon - 2), line.substr(colon + 2));
    } else if (out.columns.empty()) {
      out.columns = split(line);
    } else {
      std::vector<double> row;
      for (const auto& c : split(line)) row.push_back(std::stod(c));
      out.rows.push_back(std::move(row));
    }
  }
  return out;
}

}  // namespace qlab
