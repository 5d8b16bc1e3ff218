#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hei/autodiff.hpp"
#include "hei/graph.hpp"
#include "hei/similarity.hpp"
#include "hei/synthgen.hpp"
#include "hei/tensor.hpp"

namespace hei::io {

using json = nlohmann::json;

/// Shortest exact decimal form: doubles survive a write/read round trip.
inline std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

/// Write-temp-then-rename so readers never observe partial files.
inline void atomic_write_text(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- edge / feature / label files ------------------------------------------

inline std::vector<std::pair<NodeId, NodeId>> load_edges(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::pair<NodeId, NodeId>> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    long long u, v;
    if (!(ss >> u)) continue;  // blank or comment-only line
    if (!(ss >> v))
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": malformed edge line");
    edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
  }
  return edges;
}

inline Tensor load_features_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      auto comma = line.find(',', pos);
      std::string cell = line.substr(pos, comma == std::string::npos ? comma : comma - pos);
      try {
        std::size_t used = 0;
        double x = std::stod(cell, &used);
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
        if (used != cell.size()) throw std::invalid_argument(cell);
        row.push_back(x);
      } catch (const std::exception&) {
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                 ": non-numeric feature cell '" + cell + "'");
      }
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": inconsistent feature column count");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error(path.string() + ": empty feature file");
  Tensor t(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i].begin(), rows[i].end(), t.row(i).begin());
  return t;
}

inline std::vector<std::int32_t> load_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::int32_t> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    labels.push_back(static_cast<std::int32_t>(std::stol(line)));
  }
  return labels;
}

inline Graph load_graph(const std::filesystem::path& edges_path,
                        const std::filesystem::path& features_path,
                        const std::filesystem::path& labels_path,
                        GraphBuildStats* stats = nullptr) {
  auto edges = load_edges(edges_path);
  auto feats = load_features_csv(features_path);
  auto labels = load_labels(labels_path);
  if (labels.size() != feats.rows)
    throw std::runtime_error("feature-row/label-count mismatch: " + std::to_string(feats.rows) +
                             " rows vs " + std::to_string(labels.size()) + " labels");
  return build_graph(std::move(edges), std::move(feats), std::move(labels), 0, stats);
}

inline void save_graph(const Graph& g, const std::filesystem::path& edges_path,
                       const std::filesystem::path& features_path,
                       const std::filesystem::path& labels_path) {
  std::string edges;
  for (const auto& [u, v] : g.undirected_edges())
    edges += std::to_string(u) + "\t" + std::to_string(v) + "\n";
  atomic_write_text(edges_path, edges);

  std::string feats;
  for (std::size_t i = 0; i < g.features.rows; ++i) {
    auto row = g.features.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) feats += ',';
      feats += fmt_double(row[j]);
    }
    feats += '\n';
  }
  atomic_write_text(features_path, feats);

  std::string labels;
  for (auto y : g.labels) labels += std::to_string(y) + "\n";
  atomic_write_text(labels_path, labels);
}

// ---- splits, settings, truth ------------------------------------------------

inline void save_split(const NodeSplit& split, const std::filesystem::path& path) {
  json j{{"train", split.train}, {"val", split.val}, {"test", split.test}};
  atomic_write_text(path, j.dump(2) + "\n");
}

inline NodeSplit load_split(const std::filesystem::path& path) {
  json j = json::parse(read_text(path));
  NodeSplit s;
  s.train = j.at("train").get<IndexSet>();
  s.val = j.at("val").get<IndexSet>();
  s.test = j.at("test").get<IndexSet>();
  return s;
}

inline json setting_to_json(const EvalSetting& s) {
  return json{{"kind", to_string(s.kind)},
              {"train_idx", s.train_idx},
              {"full_test", s.full_test},
              {"high_hom_test", s.high_hom_test},
              {"low_hom_test", s.low_hom_test}};
}

inline void save_truth(const SynthTruth& truth, const std::filesystem::path& path) {
  json j{{"target_homophily", truth.target_homophily},
         {"true_env", truth.true_env},
         {"spurious_class", truth.spurious_class}};
  atomic_write_text(path, j.dump() + "\n");
}

inline SynthTruth load_truth(const std::filesystem::path& path) {
  json j = json::parse(read_text(path));
  SynthTruth t;
  t.target_homophily = j.at("target_homophily").get<std::vector<double>>();
  t.true_env = j.at("true_env").get<std::vector<std::int32_t>>();
  t.spurious_class = j.at("spurious_class").get<std::vector<std::int32_t>>();
  return t;
}

// ---- neighbor-pattern CSV ----------------------------------------------------

inline void save_patterns_csv(const NeighborPattern& p, const std::filesystem::path& path) {
  char cbuf[32];
  std::snprintf(cbuf, sizeof(cbuf), "%g", p.config.decay_c);
  std::string out = "node_id,z(metric=" + std::string(to_string(p.config.metric)) +
                    ";c=" + cbuf + ")\n";
  for (std::size_t v = 0; v < p.values.size(); ++v)
    out += std::to_string(v) + "," + fmt_double(p.values[v]) + "\n";
  atomic_write_text(path, out);
}

// ---- parameter checkpoints ---------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'H', 'E', 'I', 'C', 'K', 'P', 'T', '\x01'};

/// Binary blob: magic, parameter count, then per-parameter (id, rows, cols)
/// table followed by all row-major float64 payloads in table order. A JSON
/// manifest with the same shape table is written next to it.
inline void save_checkpoint(const std::vector<ad::Parameter>& params,
                            const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    std::uint64_t count = params.size();
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    for (const auto& p : params) {
      std::uint32_t id_len = static_cast<std::uint32_t>(p.id.size());
      std::uint64_t rows = p.value().rows, cols = p.value().cols;
      out.write(reinterpret_cast<const char*>(&id_len), sizeof(id_len));
      out.write(p.id.data(), static_cast<std::streamsize>(id_len));
      out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
      out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
    }
    for (const auto& p : params)
      out.write(reinterpret_cast<const char*>(p.value().data.data()),
                static_cast<std::streamsize>(p.value().size() * sizeof(double)));
    if (!out.flush()) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);

  json manifest;
  manifest["format"] = "hei-checkpoint-v1";
  manifest["params"] = json::array();
  for (const auto& p : params)
    manifest["params"].push_back(
        {{"id", p.id}, {"rows", p.value().rows}, {"cols", p.value().cols}});
  atomic_write_text(path.string() + ".json", manifest.dump(2) + "\n");
}

inline std::vector<std::pair<std::string, Tensor>> load_checkpoint(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kCheckpointMagic))
    throw std::runtime_error(path.string() + ": not a checkpoint file");
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  struct Entry {
    std::string id;
    std::uint64_t rows, cols;
  };
  std::vector<Entry> table;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint32_t id_len = 0;
    in.read(reinterpret_cast<char*>(&id_len), sizeof(id_len));
    std::string id(id_len, '\0');
    in.read(id.data(), static_cast<std::streamsize>(id_len));
    std::uint64_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
    in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
    if (!in) throw std::runtime_error(path.string() + ": truncated checkpoint table");
    table.push_back({std::move(id), rows, cols});
  }
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(table.size());
  for (const auto& e : table) {
    Tensor t(e.rows, e.cols);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw std::runtime_error(path.string() + ": truncated checkpoint payload");
    out.emplace_back(e.id, std::move(t));
  }
  return out;
}

/// Copies checkpoint tensors into matching parameters by id.
inline void apply_checkpoint(const std::vector<std::pair<std::string, Tensor>>& ckpt,
                             std::vector<ad::Parameter>& params) {
  for (auto& p : params) {
    auto it = std::find_if(ckpt.begin(), ckpt.end(),
                           [&p](const auto& e) { return e.first == p.id; });
    if (it == ckpt.end())
      throw std::runtime_error("checkpoint missing parameter '" + p.id + "'");
    hei::detail::require(it->second.same_shape(p.value()),
                         "checkpoint shape mismatch for '" + p.id + "'");
    p.node->value = it->second;
  }
}

}  // namespace hei::io
