// JSON documents for preparation games: a versioned schema holding the
// dimensions, configuration labels, POVM elements as complex-pair
// arrays, and the score table, with an optional free-form provenance
// block.  Serialization round-trips every double bit-exactly.
#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qprep/game.hpp"

namespace qprep {

using Json = nlohmann::json;

inline constexpr const char* kGameSchema = "qprep-game/1";

namespace detail {

inline const Json& field(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(where + ": missing field '" + key + "'");
  return *it;
}

inline double number(const Json& j, const std::string& where) {
  if (!j.is_number()) throw ValidationError(where + ": expected a number");
  return j.get<double>();
}

inline void check_finite(double v, const std::string& where) {
  if (!std::isfinite(v)) throw ValidationError(where + ": non-finite value");
}

}  // namespace detail

// Matrix -> array of rows, each row an array of [re, im] pairs.
inline Json complex_matrix_to_json(const Mat& m) {
  Json rows = Json::array();
  for (long i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (long j = 0; j < m.cols(); ++j) {
      detail::check_finite(m(i, j).real(), "matrix entry");
      detail::check_finite(m(i, j).imag(), "matrix entry");
      row.push_back(Json::array({m(i, j).real(), m(i, j).imag()}));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Mat complex_matrix_from_json(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ValidationError(where + ": expected a non-empty array of rows");
  const size_t nrows = j.size();
  size_t ncols = 0;
  Mat m;
  for (size_t i = 0; i < nrows; ++i) {
    const Json& row = j[i];
    const std::string rw = where + ", row " + std::to_string(i);
    if (!row.is_array() || row.empty()) throw ValidationError(rw + ": expected a non-empty array");
    if (i == 0) {
      ncols = row.size();
      m = Mat::Zero(static_cast<long>(nrows), static_cast<long>(ncols));
    } else if (row.size() != ncols) {
      throw ValidationError(rw + ": ragged matrix");
    }
    for (size_t k = 0; k < ncols; ++k) {
      const Json& pair = row[k];
      const std::string cw = rw + ", column " + std::to_string(k);
      if (!pair.is_array() || pair.size() != 2)
        throw ValidationError(cw + ": expected a [re, im] pair");
      m(static_cast<long>(i), static_cast<long>(k)) =
          Complex(detail::number(pair[0], cw), detail::number(pair[1], cw));
    }
  }
  return m;
}

inline Json game_to_json(const PreparationGame& g, Json provenance = Json()) {
  Json doc;
  doc["schema"] = kGameSchema;
  doc["dims"] = g.dims;
  Json configs = Json::array();
  for (const auto& level : g.configs) configs.push_back(level);
  doc["configs"] = std::move(configs);
  Json povms = Json::array();
  for (const auto& round : g.povms) {
    Json row = Json::array();
    for (const auto& m : round) {
      Json entry;
      entry["labels"] = m.labels;
      Json elements = Json::array();
      for (const auto& e : m.elements) elements.push_back(complex_matrix_to_json(e));
      entry["elements"] = std::move(elements);
      row.push_back(std::move(entry));
    }
    povms.push_back(std::move(row));
  }
  doc["povms"] = std::move(povms);
  Json score = Json::object();
  for (const auto& [label, v] : g.score) {
    detail::check_finite(v, "score '" + label + "'");
    score[label] = v;
  }
  doc["score"] = std::move(score);
  if (!provenance.is_null()) doc["provenance"] = std::move(provenance);
  return doc;
}

struct GameDocument {
  PreparationGame game;
  Json provenance;  // null when the document carries none
};

inline GameDocument game_document_from_json(const Json& doc) {
  const std::string top = "game document";
  const Json& schema = detail::field(doc, "schema", top);
  if (!schema.is_string() || schema.get<std::string>() != kGameSchema)
    throw ValidationError(top + ": unsupported schema (expected " + std::string(kGameSchema) + ")");

  GameDocument out;
  PreparationGame& g = out.game;

  const Json& dims = detail::field(doc, "dims", top);
  if (!dims.is_array() || dims.empty()) throw ValidationError(top + ": 'dims' must be a non-empty array");
  for (const auto& d : dims) {
    if (!d.is_number_integer() || d.get<int>() < 1)
      throw ValidationError(top + ": 'dims' entries must be positive integers");
    g.dims.push_back(d.get<int>());
  }

  const Json& configs = detail::field(doc, "configs", top);
  if (!configs.is_array() || configs.size() < 2)
    throw ValidationError(top + ": 'configs' must list at least two rounds of labels");
  for (size_t k = 0; k < configs.size(); ++k) {
    const std::string where = top + ": configs[" + std::to_string(k) + "]";
    if (!configs[k].is_array() || configs[k].empty())
      throw ValidationError(where + ": expected a non-empty array of labels");
    std::vector<std::string> level;
    for (const auto& label : configs[k]) {
      if (!label.is_string()) throw ValidationError(where + ": labels must be strings");
      level.push_back(label.get<std::string>());
    }
    g.configs.push_back(std::move(level));
  }

  const Json& povms = detail::field(doc, "povms", top);
  if (!povms.is_array() || povms.size() + 1 != g.configs.size())
    throw ValidationError(top + ": 'povms' must hold one row per round");
  for (size_t k = 0; k < povms.size(); ++k) {
    const std::string rw = top + ": povms[" + std::to_string(k) + "]";
    if (!povms[k].is_array() || povms[k].size() != g.configs[k].size())
      throw ValidationError(rw + ": expected one measurement per round-" + std::to_string(k) +
                            " configuration");
    std::vector<Povm> row;
    for (size_t i = 0; i < povms[k].size(); ++i) {
      const std::string mw = rw + "[" + std::to_string(i) + "]";
      const Json& labels = detail::field(povms[k][i], "labels", mw);
      const Json& elements = detail::field(povms[k][i], "elements", mw);
      if (!labels.is_array() || !elements.is_array() || labels.size() != elements.size() ||
          labels.empty())
        throw ValidationError(mw + ": 'labels' and 'elements' must be matching non-empty arrays");
      std::vector<std::string> ls;
      std::vector<Mat> es;
      for (size_t o = 0; o < labels.size(); ++o) {
        if (!labels[o].is_string()) throw ValidationError(mw + ": labels must be strings");
        ls.push_back(labels[o].get<std::string>());
        es.push_back(complex_matrix_from_json(elements[o],
                                              mw + ".elements[" + std::to_string(o) + "]"));
      }
      row.emplace_back(std::move(es), std::move(ls));
    }
    g.povms.push_back(std::move(row));
  }

  const Json& score = detail::field(doc, "score", top);
  if (!score.is_object()) throw ValidationError(top + ": 'score' must be an object");
  for (auto it = score.begin(); it != score.end(); ++it)
    g.score[it.key()] = detail::number(it.value(), top + ": score '" + it.key() + "'");

  if (auto it = doc.find("provenance"); it != doc.end()) out.provenance = *it;
  return out;
}

inline PreparationGame game_from_json(const Json& doc) { return game_document_from_json(doc).game; }

inline std::string serialize_game(const PreparationGame& g, const Json& provenance = Json()) {
  return game_to_json(g, provenance).dump(2);
}

inline GameDocument parse_game_document(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ValidationError(std::string("game document: not valid JSON: ") + e.what());
  }
  return game_document_from_json(doc);
}

inline PreparationGame parse_game(const std::string& text) {
  return parse_game_document(text).game;
}

// Atomic write: the document lands under a temporary name and is renamed
// into place, so readers never observe a partial file.
inline void write_game_file(const std::string& path, const PreparationGame& g,
                            const Json& provenance = Json()) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw ValidationError("game file: cannot open '" + tmp + "' for writing");
    os << serialize_game(g, provenance) << "\n";
    if (!os) throw ValidationError("game file: write to '" + tmp + "' failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw ValidationError("game file: cannot move '" + tmp + "' into place");
}

inline GameDocument read_game_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("game file: cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse_game_document(text);
}

}  // namespace qprep
