// Interaction data: TSV ingestion, order-invariant per-user splits, degree
// statistics, rarity weights, and feature table loading.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "motorec/errors.hpp"
#include "motorec/io.hpp"
#include "motorec/matrix.hpp"
#include "motorec/rng.hpp"

namespace motorec {

using Edge = std::pair<std::uint32_t, std::uint32_t>;  // (user index, item index)

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;

  void validate() const {
    if (train < 0 || valid < 0 || test < 0 || std::abs(train + valid + test - 1.0) > 1e-9)
      throw config_error("split ratios must be nonnegative and sum to 1");
  }
};

struct InteractionDataset {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::vector<Edge> train, valid, test;
  std::vector<std::uint32_t> item_train_degree;           // d_i over train edges
  std::vector<std::vector<std::uint32_t>> user_train_items;  // sorted per user
  std::vector<std::string> user_ids;  // index -> original id
  std::vector<std::string> item_ids;

  std::size_t total_edges() const { return train.size() + valid.size() + test.size(); }

  bool is_train_edge(std::uint32_t u, std::uint32_t i) const {
    const auto& v = user_train_items[u];
    return std::binary_search(v.begin(), v.end(), i);
  }

  // Rebuilds degree statistics and membership indexes from the split lists.
  void finalize() {
    item_train_degree.assign(num_items, 0);
    user_train_items.assign(num_users, {});
    for (const auto& [u, i] : train) {
      item_train_degree[i]++;
      user_train_items[u].push_back(i);
    }
    for (auto& v : user_train_items) std::sort(v.begin(), v.end());
    std::set<Edge> seen;
    for (const auto* split : {&train, &valid, &test})
      for (const auto& e : *split) {
        if (e.first >= num_users || e.second >= num_items)
          throw contract_error("dataset: edge index out of range");
        if (!seen.insert(e).second) throw contract_error("dataset: splits are not disjoint");
      }
  }
};

namespace detail {

// Deterministic per-user split. Each user's edge set is shuffled with a
// stream forked on the user index, so the outcome does not depend on input
// line order. Users with fewer than 3 interactions go fully to train.
inline void split_user_edges(std::uint32_t user, std::vector<std::uint32_t> items,
                             const SplitRatios& ratios, const Rng& base,
                             InteractionDataset& out) {
  std::sort(items.begin(), items.end());
  Rng rng = base.fork(user);
  rng.shuffle(items);
  const std::size_t n = items.size();
  std::size_t n_valid = 0, n_test = 0;
  if (n >= 3) {
    n_valid = static_cast<std::size_t>(std::floor(ratios.valid * static_cast<double>(n)));
    n_test = static_cast<std::size_t>(std::floor(ratios.test * static_cast<double>(n)));
  }
  const std::size_t n_train = n - n_valid - n_test;
  for (std::size_t k = 0; k < n; ++k) {
    Edge e{user, items[k]};
    if (k < n_train)
      out.train.push_back(e);
    else if (k < n_train + n_valid)
      out.valid.push_back(e);
    else
      out.test.push_back(e);
  }
}

inline void sort_edges(std::vector<Edge>& v) { std::sort(v.begin(), v.end()); }

}  // namespace detail

// Builds a dataset from already-indexed edges (used by the generator and by
// ingestion after ID remapping). Duplicate edges must already be removed.
inline InteractionDataset build_dataset(std::size_t num_users, std::size_t num_items,
                                        const std::vector<Edge>& edges,
                                        const SplitRatios& ratios, std::uint64_t seed) {
  ratios.validate();
  if (edges.empty()) throw data_error("dataset: no interactions");
  InteractionDataset ds;
  ds.num_users = num_users;
  ds.num_items = num_items;
  std::vector<std::vector<std::uint32_t>> per_user(num_users);
  for (const auto& [u, i] : edges) {
    if (u >= num_users || i >= num_items) throw contract_error("build_dataset: index range");
    per_user[u].push_back(i);
  }
  const Rng base(seed);
  for (std::uint32_t u = 0; u < num_users; ++u)
    if (!per_user[u].empty())
      detail::split_user_edges(u, std::move(per_user[u]), ratios, base, ds);
  detail::sort_edges(ds.train);
  detail::sort_edges(ds.valid);
  detail::sort_edges(ds.test);
  ds.finalize();
  return ds;
}

// Parses the interactions TSV (header `user_id<TAB>item_id`), deduplicates,
// remaps IDs in lexicographic order, and splits per user.
inline InteractionDataset load_interactions(const std::string& path, const SplitRatios& ratios,
                                            std::uint64_t seed) {
  ratios.validate();
  std::ifstream in(path);
  if (!in) throw data_error("cannot open interactions file: " + path);
  std::string line;
  std::size_t line_no = 0;
  std::set<std::pair<std::string, std::string>> raw;  // dedup + stable order
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
      throw parse_error(path + ": line " + std::to_string(line_no) +
                        ": expected exactly two tab-separated fields");
    std::string a = line.substr(0, tab), b = line.substr(tab + 1);
    if (!saw_header) {
      saw_header = true;
      if (a == "user_id" && b == "item_id") continue;
      throw parse_error(path + ": line 1: expected header 'user_id\\titem_id'");
    }
    if (a.empty() || b.empty())
      throw parse_error(path + ": line " + std::to_string(line_no) + ": empty field");
    raw.emplace(std::move(a), std::move(b));
  }
  if (raw.empty()) throw data_error(path + ": no interactions");

  std::map<std::string, std::uint32_t> user_index, item_index;
  for (const auto& [u, i] : raw) {
    user_index.emplace(u, 0);
    item_index.emplace(i, 0);
  }
  InteractionDataset scaffold;
  std::uint32_t next = 0;
  for (auto& [id, idx] : user_index) {
    idx = next++;
    scaffold.user_ids.push_back(id);
  }
  next = 0;
  for (auto& [id, idx] : item_index) {
    idx = next++;
    scaffold.item_ids.push_back(id);
  }
  std::vector<Edge> edges;
  edges.reserve(raw.size());
  for (const auto& [u, i] : raw) edges.emplace_back(user_index[u], item_index[i]);

  InteractionDataset ds =
      build_dataset(user_index.size(), item_index.size(), edges, ratios, seed);
  ds.user_ids = std::move(scaffold.user_ids);
  ds.item_ids = std::move(scaffold.item_ids);
  return ds;
}

struct RarityProfile {
  std::uint32_t threshold = 10;
  std::vector<bool> cold;      // c_i = [d_i < threshold]
  std::vector<double> weight;  // w_i, in (0, 1]
};

// Cold mask and inverse-log degree weights:
//   w_i = 1 / log2(d_i + 2)  when cold and d_i > 0, else 1.0.
inline RarityProfile rarity_profile(const InteractionDataset& ds, std::uint32_t tau) {
  if (tau < 1) throw contract_error("rarity_profile: tau must be >= 1");
  RarityProfile p;
  p.threshold = tau;
  p.cold.resize(ds.num_items);
  p.weight.resize(ds.num_items);
  for (std::size_t i = 0; i < ds.num_items; ++i) {
    const std::uint32_t d = ds.item_train_degree[i];
    p.cold[i] = d < tau;
    p.weight[i] =
        (p.cold[i] && d > 0) ? 1.0 / std::log2(static_cast<double>(d) + 2.0) : 1.0;
  }
  return p;
}

enum class Modality { visual, textual };

inline const char* modality_name(Modality m) {
  return m == Modality::visual ? "visual" : "textual";
}

struct ItemFeatureTable {
  Modality modality = Modality::visual;
  DenseMatrix rows;  // one row per item, remapped order

  std::size_t dim() const { return rows.cols; }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline DenseMatrix load_features_csv(const std::string& path,
                                     const std::map<std::string, std::uint32_t>* id_to_index,
                                     std::size_t expected_items) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open features file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw data_error(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "item_id")
    throw parse_error(path + ": line 1: expected header 'item_id,f0,...'");
  const std::size_t dim = header.size() - 1;

  DenseMatrix m(expected_items, dim);
  std::vector<bool> filled(expected_items, false);
  std::size_t line_no = 1, count = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != dim + 1)
      throw parse_error(path + ": line " + std::to_string(line_no) + ": expected " +
                        std::to_string(dim + 1) + " fields");
    std::uint32_t idx;
    if (id_to_index) {
      auto it = id_to_index->find(fields[0]);
      if (it == id_to_index->end())
        throw alignment_error(path + ": line " + std::to_string(line_no) + ": unknown item id '" +
                              fields[0] + "'");
      idx = it->second;
    } else {
      try {
        idx = static_cast<std::uint32_t>(std::stoul(fields[0]));
      } catch (...) {
        throw parse_error(path + ": line " + std::to_string(line_no) + ": bad item index '" +
                          fields[0] + "'");
      }
    }
    if (idx >= expected_items)
      throw alignment_error(path + ": line " + std::to_string(line_no) + ": item index " +
                            std::to_string(idx) + " out of range");
    if (filled[idx])
      throw alignment_error(path + ": line " + std::to_string(line_no) + ": duplicate item");
    filled[idx] = true;
    ++count;
    for (std::size_t c = 0; c < dim; ++c) {
      try {
        m(idx, c) = std::stod(fields[c + 1]);
      } catch (...) {
        throw parse_error(path + ": line " + std::to_string(line_no) + ": bad float '" +
                          fields[c + 1] + "'");
      }
    }
  }
  if (count != expected_items)
    throw alignment_error(path + ": has " + std::to_string(count) + " items, dataset has " +
                          std::to_string(expected_items));
  return m;
}

}  // namespace detail

// Loads MTF1 binary or CSV (sniffed by magic). CSV rows are keyed by original
// item id when a map is supplied, otherwise by integer index.
inline ItemFeatureTable load_features(const std::string& path, Modality modality,
                                      std::size_t expected_items,
                                      const std::map<std::string, std::uint32_t>* id_to_index =
                                          nullptr) {
  ItemFeatureTable t;
  t.modality = modality;
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw data_error("cannot open features file: " + path);
  char magic[4] = {0, 0, 0, 0};
  probe.read(magic, 4);
  probe.close();
  if (std::string(magic, 4) == "MTF1") {
    t.rows = io::read_features(path);
    if (t.rows.rows != expected_items)
      throw alignment_error(path + ": has " + std::to_string(t.rows.rows) +
                            " items, dataset has " + std::to_string(expected_items));
  } else {
    t.rows = detail::load_features_csv(path, id_to_index, expected_items);
  }
  if (!t.rows.is_finite()) throw data_error(path + ": non-finite feature entry");
  return t;
}

// ID map sidecar: TSV `original_id<TAB>index`.
inline void write_id_map(const std::string& path, const std::vector<std::string>& ids) {
  std::string out = "original_id\tindex\n";
  for (std::size_t i = 0; i < ids.size(); ++i) out += ids[i] + "\t" + std::to_string(i) + "\n";
  io::write_file(path, out);
}

inline std::vector<std::string> read_id_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open id map: " + path);
  std::string line;
  std::vector<std::string> ids;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line == "original_id\tindex") continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw parse_error(path + ": line " + std::to_string(line_no) + ": expected two fields");
    const std::size_t idx = std::stoul(line.substr(tab + 1));
    if (idx != ids.size())
      throw parse_error(path + ": line " + std::to_string(line_no) + ": indices must be dense");
    ids.push_back(line.substr(0, tab));
  }
  return ids;
}

inline std::map<std::string, std::uint32_t> invert_id_map(const std::vector<std::string>& ids) {
  std::map<std::string, std::uint32_t> m;
  for (std::size_t i = 0; i < ids.size(); ++i) m[ids[i]] = static_cast<std::uint32_t>(i);
  return m;
}

// Split-file TSV: same header as the input format, remapped integer indices.
inline void write_edges_tsv(const std::string& path, const std::vector<Edge>& edges) {
  std::string out = "user_id\titem_id\n";
  for (const auto& [u, i] : edges)
    out += std::to_string(u) + "\t" + std::to_string(i) + "\n";
  io::write_file(path, out);
}

inline std::vector<Edge> read_edges_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open edges file: " + path);
  std::string line;
  std::vector<Edge> edges;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (line_no == 1 && line == "user_id\titem_id")) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw parse_error(path + ": line " + std::to_string(line_no) + ": expected two fields");
    edges.emplace_back(static_cast<std::uint32_t>(std::stoul(line.substr(0, tab))),
                       static_cast<std::uint32_t>(std::stoul(line.substr(tab + 1))));
  }
  return edges;
}

}  // namespace motorec
