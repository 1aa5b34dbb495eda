#include "nsplat/gat/gat.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>

#include <nlohmann/json.hpp>

#include "nsplat/core/error.hpp"
#include "nsplat/core/rng.hpp"
#include "nsplat/kernels/kernels.hpp"

namespace nsplat::gat {

using json = nlohmann::json;

void validate_graph(const ElectrodeGraph& g) {
  if (g.n_nodes == 0) throw_validation("graph needs at least one node");
  if (g.neighbors.size() != g.n_nodes)
    throw_validation("neighbor list count does not match node count");
  for (std::size_t i = 0; i < g.n_nodes; ++i) {
    const auto& nbr = g.neighbors[i];
    if (!std::is_sorted(nbr.begin(), nbr.end()))
      throw_validation("neighbor lists must be sorted");
    for (const int j : nbr) {
      if (j < 0 || static_cast<std::size_t>(j) >= g.n_nodes)
        throw_validation("neighbor index out of range");
      if (static_cast<std::size_t>(j) == i)
        throw_validation("self-loops must not be stored");
      const auto& back = g.neighbors[j];
      if (!std::binary_search(back.begin(), back.end(), static_cast<int>(i)))
        throw_validation("adjacency is not symmetric");
    }
  }
}

ElectrodeGraph build_montage_graph(const std::vector<Vec3>& positions, int k) {
  const std::size_t n = positions.size();
  if (n == 0) throw_validation("montage needs at least one electrode");
  if (k < 0 || static_cast<std::size_t>(k) >= n)
    throw_validation("k must satisfy 0 <= k < n");

  std::vector<std::vector<char>> adj(n, std::vector<char>(n, 0));
  std::vector<std::pair<double, int>> order;
  for (std::size_t i = 0; i < n; ++i) {
    order.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const Vec3 d = positions[i] - positions[j];
      order.emplace_back(dot(d, d), static_cast<int>(j));
    }
    std::sort(order.begin(), order.end());
    for (int t = 0; t < k; ++t) {
      adj[i][order[t].second] = 1;
      adj[order[t].second][i] = 1;
    }
  }

  ElectrodeGraph g;
  g.n_nodes = n;
  g.neighbors.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (adj[i][j]) g.neighbors[i].push_back(static_cast<int>(j));
  return g;
}

void validate_params(const AttentionParams& p) {
  if (p.n_heads < 1) throw_validation("attention needs at least one head");
  if (p.heads.size() != static_cast<std::size_t>(p.n_heads))
    throw_validation("head parameter count does not match n_heads");
  for (const HeadParams& h : p.heads) {
    if (h.W.rows() != p.d_out || h.W.cols() != p.d_in)
      throw_validation("head weight matrix must be d_out x d_in");
    if (h.a.size() != 2 * p.d_out)
      throw_validation("attention vector length must be 2*d_out");
  }
}

AttentionParams random_attention_params(int n_heads, std::size_t d_in,
                                        std::size_t d_out, double leaky_slope,
                                        std::uint64_t seed) {
  Rng rng(seed);
  AttentionParams p;
  p.n_heads = n_heads;
  p.d_in = d_in;
  p.d_out = d_out;
  p.leaky_slope = leaky_slope;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_in));
  for (int h = 0; h < n_heads; ++h) {
    HeadParams hp;
    hp.W = Matrix(d_out, d_in);
    for (double& v : hp.W.storage()) v = rng.uniform(-scale, scale);
    hp.a.resize(2 * d_out);
    for (double& v : hp.a) v = rng.uniform(-scale, scale);
    p.heads.push_back(std::move(hp));
  }
  return p;
}

void save_attention_params(const AttentionParams& p, const std::string& path) {
  validate_params(p);
  json doc;
  doc["n_heads"] = p.n_heads;
  doc["d_in"] = p.d_in;
  doc["d_out"] = p.d_out;
  doc["leaky_slope"] = p.leaky_slope;
  doc["heads"] = json::array();
  for (const HeadParams& h : p.heads) {
    json hj;
    hj["W"] = h.W.storage();
    hj["a"] = h.a;
    doc["heads"].push_back(std::move(hj));
  }
  std::ofstream out(path);
  if (!out) throw_validation("cannot write '" + path + "'");
  out << doc.dump(2) << "\n";
}

AttentionParams load_attention_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_validation("cannot open '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw_validation(std::string("attention bundle is not valid JSON: ") +
                     e.what());
  }
  AttentionParams p;
  try {
    p.n_heads = doc.at("n_heads").get<int>();
    p.d_in = doc.at("d_in").get<std::size_t>();
    p.d_out = doc.at("d_out").get<std::size_t>();
    p.leaky_slope = doc.at("leaky_slope").get<double>();
    for (const json& hj : doc.at("heads")) {
      HeadParams h;
      const auto wflat = hj.at("W").get<std::vector<double>>();
      if (wflat.size() != p.d_out * p.d_in)
        throw_validation("head W has wrong element count");
      h.W = Matrix(p.d_out, p.d_in);
      h.W.storage() = wflat;
      h.a = hj.at("a").get<std::vector<double>>();
      p.heads.push_back(std::move(h));
    }
  } catch (const json::exception& e) {
    throw_validation(std::string("attention bundle missing fields: ") +
                     e.what());
  }
  validate_params(p);
  return p;
}

std::vector<Vec3> load_positions_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_validation("cannot open '" + path + "'");
  std::vector<Vec3> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    Vec3 p;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &p.x, &p.y, &p.z) != 3)
      throw_validation("positions csv line '" + line + "' is not x,y,z");
    out.push_back(p);
  }
  if (out.empty()) throw_validation("positions csv holds no rows");
  return out;
}

double ordered_sum(std::vector<double>& addends) {
  std::sort(addends.begin(), addends.end(), std::greater<double>());
  double s = 0.0;
  for (const double v : addends) s += v;
  return s;
}

std::vector<double> stable_softmax(const std::vector<double>& logits) {
  if (logits.empty()) throw_validation("softmax over an empty set");
  double max_logit = -std::numeric_limits<double>::infinity();
  for (const double v : logits) max_logit = std::max(max_logit, v);
  std::vector<double> exps(logits.size());
  for (std::size_t t = 0; t < logits.size(); ++t)
    exps[t] = std::exp(logits[t] - max_logit);
  std::vector<double> addends = exps;
  const double denom = ordered_sum(addends);
  for (double& v : exps) v /= denom;
  return exps;
}

namespace {

// W h per node for one head: n x d_out.
Matrix transform_features(const Matrix& features, const HeadParams& head) {
  const std::size_t n = features.rows();
  Matrix out(n, head.W.rows());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < head.W.rows(); ++r)
      out(i, r) = kernels::dot(head.W.row(r), features.row(i), head.W.cols());
  return out;
}

struct RowSoftmax {
  std::vector<int> members;  // N_i + {i}, ascending
  std::vector<double> alpha;
};

// The attention logit a^T [W h_i || W h_k] splits into s_self(i) + s_peer(k);
// both halves are per-node, so the decomposition keeps relabeling exact.
RowSoftmax attention_row(std::size_t i, const std::vector<double>& s_self,
                         const std::vector<double>& s_peer,
                         const ElectrodeGraph& g, double slope) {
  RowSoftmax row;
  row.members = g.neighbors[i];
  row.members.insert(
      std::lower_bound(row.members.begin(), row.members.end(),
                       static_cast<int>(i)),
      static_cast<int>(i));

  std::vector<double> logits(row.members.size());
  for (std::size_t t = 0; t < row.members.size(); ++t)
    logits[t] = leaky_relu(s_self[i] + s_peer[row.members[t]], slope);
  row.alpha = stable_softmax(logits);
  return row;
}

void check_forward_dims(const Matrix& features, const ElectrodeGraph& g,
                        const AttentionParams& p) {
  validate_graph(g);
  validate_params(p);
  if (features.rows() != g.n_nodes)
    throw_validation("feature row count does not match node count");
  if (features.cols() != p.d_in)
    throw_validation("feature width does not match d_in");
  for (const double v : features.storage())
    if (!std::isfinite(v)) throw_validation("features must be finite");
}

}  // namespace

Matrix attention_coefficients(const Matrix& features, const ElectrodeGraph& g,
                              const AttentionParams& p, int head) {
  check_forward_dims(features, g, p);
  if (head < 0 || head >= p.n_heads) throw_validation("head index out of range");

  const Matrix wh = transform_features(features, p.heads[head]);
  const std::vector<double>& a = p.heads[head].a;
  std::vector<double> s_self(g.n_nodes), s_peer(g.n_nodes);
  for (std::size_t i = 0; i < g.n_nodes; ++i) {
    s_self[i] = kernels::dot(a.data(), wh.row(i), p.d_out);
    s_peer[i] = kernels::dot(a.data() + p.d_out, wh.row(i), p.d_out);
  }

  Matrix alpha(g.n_nodes, g.n_nodes, 0.0);
  for (std::size_t i = 0; i < g.n_nodes; ++i) {
    const RowSoftmax row = attention_row(i, s_self, s_peer, g, p.leaky_slope);
    for (std::size_t t = 0; t < row.members.size(); ++t)
      alpha(i, row.members[t]) = row.alpha[t];
  }
  return alpha;
}

Matrix ga_forward(const Matrix& features, const ElectrodeGraph& g,
                  const AttentionParams& p) {
  check_forward_dims(features, g, p);
  const std::size_t n = g.n_nodes;
  Matrix out(n, static_cast<std::size_t>(p.n_heads) * p.d_out, 0.0);

  std::vector<double> addends;
  for (int head = 0; head < p.n_heads; ++head) {
    const Matrix wh = transform_features(features, p.heads[head]);
    const std::vector<double>& a = p.heads[head].a;
    std::vector<double> s_self(n), s_peer(n);
    for (std::size_t i = 0; i < n; ++i) {
      s_self[i] = kernels::dot(a.data(), wh.row(i), p.d_out);
      s_peer[i] = kernels::dot(a.data() + p.d_out, wh.row(i), p.d_out);
    }
    const std::size_t base = static_cast<std::size_t>(head) * p.d_out;
    for (std::size_t i = 0; i < n; ++i) {
      const RowSoftmax row = attention_row(i, s_self, s_peer, g, p.leaky_slope);
      for (std::size_t d = 0; d < p.d_out; ++d) {
        addends.resize(row.members.size());
        for (std::size_t t = 0; t < row.members.size(); ++t)
          addends[t] = row.alpha[t] * wh(row.members[t], d);
        out(i, base + d) = ordered_sum(addends);
      }
    }
  }
  return out;
}

}  // namespace nsplat::gat
