#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "stableseq/error.hpp"
#include "stableseq/model.hpp"

namespace stableseq {

inline constexpr int kPoolSchemaVersion = 1;

namespace detail {

using nlohmann::json;

inline const json& field(const json& obj, const char* name, const std::string& where) {
  if (!obj.is_object()) throw ParseError(where + ": expected an object");
  auto it = obj.find(name);
  if (it == obj.end()) throw ParseError(where + "." + name + ": missing field");
  return *it;
}

inline double number(const json& obj, const char* name, const std::string& where) {
  const json& v = field(obj, name, where);
  if (!v.is_number()) throw ParseError(where + "." + name + ": expected a number");
  return v.get<double>();
}

inline long long integer(const json& obj, const char* name, const std::string& where) {
  const json& v = field(obj, name, where);
  if (!v.is_number_integer()) throw ParseError(where + "." + name + ": expected an integer");
  return v.get<long long>();
}

inline std::vector<double> numbers(const json& obj, const char* name, const std::string& where) {
  const json& v = field(obj, name, where);
  if (!v.is_array()) throw ParseError(where + "." + name + ": expected an array");
  std::vector<double> out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number())
      throw ParseError(where + "." + name + "[" + std::to_string(i) + "]: expected a number");
    out.push_back(v[i].get<double>());
  }
  return out;
}

inline Task parse_task(const json& obj, const std::string& where) {
  auto it = obj.find("task");
  if (it == obj.end()) return Task::regression;
  if (*it == "regression") return Task::regression;
  if (*it == "classification") return Task::classification;
  throw ParseError(where + ".task: expected \"regression\" or \"classification\"");
}

inline TreeModel parse_tree(const json& payload, const std::string& where) {
  TreeModel tree;
  const json& nodes = field(payload, "nodes", where);
  if (!nodes.is_array()) throw ParseError(where + ".nodes: expected an array");
  tree.root = static_cast<int>(integer(payload, "root", where));
  tree.task = payload.contains("task") ? parse_task(payload, where) : Task::classification;
  const auto n = static_cast<long long>(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string at = where + ".nodes[" + std::to_string(i) + "]";
    const json& node = nodes[i];
    if (!node.is_object()) throw ParseError(at + ": expected an object");
    TreeNode out;
    if (node.contains("f")) {
      out.feature = static_cast<int>(integer(node, "f", at));
      if (out.feature < 0) throw ParseError(at + ".f: negative feature index");
      out.threshold = number(node, "t", at);
      out.left = static_cast<int>(integer(node, "l", at));
      out.right = static_cast<int>(integer(node, "r", at));
      out.gain = number(node, "gain", at);
      for (auto [child, name] : {std::pair{out.left, "l"}, std::pair{out.right, "r"}})
        if (child < 0 || child >= n)
          throw ParseError(at + "." + name + ": references missing child " + std::to_string(child));
    } else {
      out.label = static_cast<int>(integer(node, "label", at));
      out.count = integer(node, "n", at);
      out.positive_fraction = node.contains("prob") ? number(node, "prob", at)
                                                    : (out.label == 1 ? 1.0 : 0.0);
    }
    tree.nodes.push_back(out);
  }
  if (tree.root < 0 || tree.root >= n) throw ParseError(where + ".root: out of range");
  return tree;
}

inline json tree_to_json(const TreeModel& tree) {
  json nodes = json::array();
  for (const TreeNode& node : tree.nodes) {
    if (node.is_leaf())
      nodes.push_back({{"label", node.label}, {"n", node.count}, {"prob", node.positive_fraction}});
    else
      nodes.push_back({{"f", node.feature},
                       {"t", node.threshold},
                       {"l", node.left},
                       {"r", node.right},
                       {"gain", node.gain}});
  }
  return {{"nodes", std::move(nodes)}, {"root", tree.root}, {"task", to_string(tree.task)}};
}

}  // namespace detail

inline nlohmann::json model_to_json(const Model& m) {
  using nlohmann::json;
  json payload;
  if (const auto* lin = std::get_if<LinearModel>(&m.representation)) {
    payload = {{"coefficients", lin->coefficients},
               {"intercept", lin->intercept},
               {"task", to_string(lin->task)}};
  } else if (const auto* tree = std::get_if<TreeModel>(&m.representation)) {
    payload = detail::tree_to_json(*tree);
  } else {
    payload = {{"importances", std::get<ImportanceModel>(m.representation).importances}};
  }
  return {{"id", m.id},
          {"kind", to_string(m.kind())},
          {"payload", std::move(payload)},
          {"train_loss", m.train_loss},
          {"val_loss", m.val_loss},
          {"metadata", m.metadata}};
}

inline Model model_from_json(const nlohmann::json& j, const std::string& where) {
  Model m;
  const auto& id = detail::field(j, "id", where);
  if (!id.is_string()) throw ParseError(where + ".id: expected a string");
  m.id = id.get<std::string>();
  const auto& kind = detail::field(j, "kind", where);
  const auto& payload = detail::field(j, "payload", where);
  const std::string at = where + ".payload";
  if (kind == "linear") {
    LinearModel lin;
    lin.coefficients = detail::numbers(payload, "coefficients", at);
    lin.intercept = detail::number(payload, "intercept", at);
    lin.task = detail::parse_task(payload, at);
    m.representation = std::move(lin);
  } else if (kind == "tree") {
    m.representation = detail::parse_tree(payload, at);
  } else if (kind == "importance") {
    m.representation = ImportanceModel{detail::numbers(payload, "importances", at)};
  } else {
    throw ParseError(where + ".kind: expected \"linear\", \"tree\" or \"importance\"");
  }
  m.train_loss = detail::number(j, "train_loss", where);
  m.val_loss = detail::number(j, "val_loss", where);
  if (auto it = j.find("metadata"); it != j.end()) {
    if (!it->is_object()) throw ParseError(where + ".metadata: expected an object");
    m.metadata = *it;
  }
  return m;
}

/// Serialize a validated pool. Refuses invalid pools (NaN losses, no models, ...).
inline nlohmann::json pool_to_json(const CandidatePool& pool) {
  validate_pool(pool);
  nlohmann::json bounds = nlohmann::json::array();
  for (const auto& b : pool.feature_bounds) bounds.push_back({b.min, b.max});
  nlohmann::json models = nlohmann::json::array();
  for (const Model& m : pool.models) models.push_back(model_to_json(m));
  return {{"schema_version", kPoolSchemaVersion},
          {"batch", pool.batch},
          {"p", pool.feature_count},
          {"feature_bounds", std::move(bounds)},
          {"models", std::move(models)}};
}

inline CandidatePool pool_from_json(const nlohmann::json& j) {
  const std::string where = "pool";
  if (!j.is_object()) throw ParseError("pool: expected an object");
  if (detail::integer(j, "schema_version", where) != kPoolSchemaVersion)
    throw ParseError("pool.schema_version: unsupported version");
  CandidatePool pool;
  pool.batch = static_cast<int>(detail::integer(j, "batch", where));
  const long long p = detail::integer(j, "p", where);
  if (p < 0) throw ParseError("pool.p: negative feature count");
  pool.feature_count = static_cast<std::size_t>(p);
  const auto& bounds = detail::field(j, "feature_bounds", where);
  if (!bounds.is_array()) throw ParseError("pool.feature_bounds: expected an array");
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    const auto& b = bounds[i];
    if (!b.is_array() || b.size() != 2 || !b[0].is_number() || !b[1].is_number())
      throw ParseError("pool.feature_bounds[" + std::to_string(i) + "]: expected [min, max]");
    pool.feature_bounds.push_back({b[0].get<double>(), b[1].get<double>()});
  }
  const auto& models = detail::field(j, "models", where);
  if (!models.is_array()) throw ParseError("pool.models: expected an array");
  for (std::size_t i = 0; i < models.size(); ++i)
    pool.models.push_back(model_from_json(models[i], "pool.models[" + std::to_string(i) + "]"));
  validate_pool(pool);
  return pool;
}

inline CandidatePool load_pool(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open pool file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return pool_from_json(j);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline void save_pool(const CandidatePool& pool, const std::filesystem::path& path) {
  write_text(path, pool_to_json(pool).dump(1) + "\n");
}

}  // namespace stableseq
