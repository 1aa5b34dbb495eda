#pragma once

#include <string>
#include <vector>

#include "nsplat/core/linalg.hpp"

namespace nsplat::metrics {

struct PointSet {
  std::vector<Vec3> points;
};

void validate_pointset(const PointSet& ps);

// Sum of the two directed means of squared nearest-neighbor distances.
double chamfer(const PointSet& a, const PointSet& b);

// Equal-cardinality optimal-assignment variant: the minimum over bijections
// of the mean Euclidean pair distance. Exact (Jonker-Volgenant potentials).
double emd(const PointSet& a, const PointSet& b);

// Optimal assignment for a square cost matrix; returns row -> column.
std::vector<int> solve_assignment(const Matrix& cost);

using TokenSequence = std::vector<std::string>;

// Lowercase, split on non-alphanumeric, drop empties.
TokenSequence tokenize(const std::string& text);

struct RougeScore {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
};

RougeScore rouge1(const TokenSequence& hyp, const TokenSequence& ref);

// Cumulative BLEU-1..max_n with clipped modified precision, brevity penalty
// when the hypothesis is shorter, and add-epsilon smoothing for zero counts.
std::vector<double> bleu(const TokenSequence& hyp, const TokenSequence& ref,
                         int max_n = 4);

}  // namespace nsplat::metrics
