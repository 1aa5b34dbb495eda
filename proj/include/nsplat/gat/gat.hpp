#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "nsplat/core/linalg.hpp"

namespace nsplat::gat {

// Electrode montage graph. Adjacency is symmetric, self-loops are implicit
// (a node always attends to itself), neighbor lists are sorted ascending.
struct ElectrodeGraph {
  std::size_t n_nodes = 0;
  std::vector<std::vector<int>> neighbors;
};

void validate_graph(const ElectrodeGraph& g);

// Symmetric k-nearest-neighbor graph (union of directed kNN edges) over
// electrode positions; distance ties resolved toward the lower index.
ElectrodeGraph build_montage_graph(const std::vector<Vec3>& positions, int k);

struct HeadParams {
  Matrix W;               // d_out x d_in
  std::vector<double> a;  // 2 * d_out
};

struct AttentionParams {
  int n_heads = 4;
  std::size_t d_in = 64;
  std::size_t d_out = 128;
  double leaky_slope = 0.2;
  std::vector<HeadParams> heads;
};

void validate_params(const AttentionParams& p);

AttentionParams random_attention_params(int n_heads, std::size_t d_in,
                                        std::size_t d_out, double leaky_slope,
                                        std::uint64_t seed);

// JSON bundle (shapes plus row-major arrays) and n x 3 positions CSV.
AttentionParams load_attention_params(const std::string& path);
void save_attention_params(const AttentionParams& p, const std::string& path);
std::vector<Vec3> load_positions_csv(const std::string& path);

inline double leaky_relu(double x, double slope) {
  return x >= 0.0 ? x : slope * x;
}

// Deterministic label-invariant reduction: addends are folded in descending
// value order, so the sum is bit-identical for any relabeling of the nodes
// that produced them. Sorts its argument.
double ordered_sum(std::vector<double>& addends);

// Max-subtracted softmax with the ordered-sum denominator; adding a constant
// to every logit leaves the result unchanged to rounding.
std::vector<double> stable_softmax(const std::vector<double>& logits);

// Per-node attention over N_i + {i} for one head. Full n x n matrix, zero
// outside the neighborhood; each stored row sums to 1.
Matrix attention_coefficients(const Matrix& features, const ElectrodeGraph& g,
                              const AttentionParams& p, int head);

// Multi-head forward pass: per head, node i gets sum_k alpha_ik * W h_k;
// head outputs are concatenated, giving n x (n_heads * d_out).
Matrix ga_forward(const Matrix& features, const ElectrodeGraph& g,
                  const AttentionParams& p);

}  // namespace nsplat::gat
