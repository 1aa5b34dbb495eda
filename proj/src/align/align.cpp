#include "nsplat/align/align.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "nsplat/core/error.hpp"
#include "nsplat/core/rng.hpp"
#include "nsplat/kernels/kernels.hpp"

namespace nsplat::align {

using json = nlohmann::json;

void validate_batch(const EmbeddingBatch& batch) {
  if (batch.eeg.rows() == 0 || batch.eeg.cols() == 0)
    throw_validation("embedding batch is empty");
  if (batch.eeg.rows() != batch.img.rows() ||
      batch.eeg.cols() != batch.img.cols())
    throw_validation("eeg and img batches must share N and d");
  for (const double v : batch.eeg.storage())
    if (!std::isfinite(v)) throw_validation("eeg embeddings must be finite");
  for (const double v : batch.img.storage())
    if (!std::isfinite(v)) throw_validation("img embeddings must be finite");
}

void validate_config(const LossConfig& cfg) {
  if (!(cfg.tau > 0.0)) throw_validation("temperature tau must be positive");
  if (cfg.alpha_scale < 0.0 || cfg.lambda1 < 0.0 || cfg.lambda2 < 0.0)
    throw_validation("alpha_scale and lambdas must be nonnegative");
}

namespace {

std::vector<double> row_norms(const Matrix& m) {
  std::vector<double> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    out[i] = std::sqrt(kernels::sum_sq(m.row(i), m.cols()));
  return out;
}

}  // namespace

Matrix similarity_matrix(const EmbeddingBatch& batch) {
  validate_batch(batch);
  const std::size_t n = batch.eeg.rows();
  const std::size_t d = batch.eeg.cols();
  const std::vector<double> ne = row_norms(batch.eeg);
  const std::vector<double> ni = row_norms(batch.img);
  for (std::size_t i = 0; i < n; ++i)
    if (ne[i] < 1e-150 || ni[i] < 1e-150)
      throw_validation("cosine similarity undefined for a zero-norm row");

  Matrix s(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      double v = kernels::dot(batch.eeg.row(i), batch.img.row(k), d) /
                 (ne[i] * ni[k]);
      s(i, k) = std::clamp(v, -1.0, 1.0);
    }
  return s;
}

double cross_entropy(const std::vector<double>& probs, std::size_t label) {
  if (probs.empty()) throw_validation("probability vector is empty");
  if (label >= probs.size()) throw_validation("label index out of range");
  double sum = 0.0;
  for (const double p : probs) {
    if (!(p >= 0.0) || p > 1.0)
      throw_validation("probabilities must lie in [0, 1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw_validation("probabilities must sum to 1 within 1e-9");
  if (probs[label] == 0.0)
    throw_numeric("cross-entropy is infinite: zero probability at the label");
  return -std::log(probs[label]);
}

double info_nce(const Matrix& similarity, double tau) {
  if (!(tau > 0.0)) throw_validation("temperature tau must be positive");
  if (similarity.rows() != similarity.cols() || similarity.rows() == 0)
    throw_validation("similarity matrix must be square and non-empty");
  const std::size_t n = similarity.rows();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row_max = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k)
      row_max = std::max(row_max, similarity(i, k) / tau);
    double denom = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      denom += std::exp(similarity(i, k) / tau - row_max);
    loss -= similarity(i, i) / tau - row_max - std::log(denom);
  }
  return loss / static_cast<double>(n);
}

double adaptive_margin(double similarity, double alpha_scale) {
  if (alpha_scale < 0.0) throw_validation("alpha_scale must be nonnegative");
  return alpha_scale * (1.0 - similarity);
}

double margin_loss(const Matrix& similarity, const LossConfig& cfg) {
  validate_config(cfg);
  if (similarity.rows() != similarity.cols() || similarity.rows() == 0)
    throw_validation("similarity matrix must be square and non-empty");
  const std::size_t n = similarity.rows();
  if (n == 1) return 0.0;
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double m_i = adaptive_margin(similarity(i, i), cfg.alpha_scale);
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      row += std::max(0.0, m_i - (similarity(i, i) - similarity(i, j)));
    }
    loss += row / static_cast<double>(n - 1);
  }
  return loss / static_cast<double>(n);
}

double total_loss(double ce, double nce, double ml, const LossConfig& cfg) {
  validate_config(cfg);
  if (!std::isfinite(ce) || !std::isfinite(nce) || !std::isfinite(ml))
    throw_validation("loss components must be finite");
  return ce + cfg.lambda1 * nce + cfg.lambda2 * ml;
}

Matrix alignment_grads(const EmbeddingBatch& batch, const LossConfig& cfg) {
  validate_batch(batch);
  validate_config(cfg);
  const std::size_t n = batch.eeg.rows();
  const std::size_t d = batch.eeg.cols();
  const Matrix s = similarity_matrix(batch);

  // dL/dS, accumulated for both weighted loss terms.
  Matrix ds(n, n, 0.0);

  if (cfg.lambda1 > 0.0 && n > 1) {
    for (std::size_t i = 0; i < n; ++i) {
      double row_max = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < n; ++k)
        row_max = std::max(row_max, s(i, k) / cfg.tau);
      double denom = 0.0;
      for (std::size_t k = 0; k < n; ++k)
        denom += std::exp(s(i, k) / cfg.tau - row_max);
      for (std::size_t k = 0; k < n; ++k) {
        const double p = std::exp(s(i, k) / cfg.tau - row_max) / denom;
        const double delta = (k == i) ? 1.0 : 0.0;
        ds(i, k) += cfg.lambda1 * -(delta - p) /
                    (cfg.tau * static_cast<double>(n));
      }
    }
  }

  if (cfg.lambda2 > 0.0 && n > 1) {
    const double scale =
        cfg.lambda2 / (static_cast<double>(n) * static_cast<double>(n - 1));
    for (std::size_t i = 0; i < n; ++i) {
      const double m_i = cfg.alpha_scale * (1.0 - s(i, i));
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        if (m_i - (s(i, i) - s(i, j)) > 0.0) {
          ds(i, j) += scale;
          ds(i, i) += scale * (-cfg.alpha_scale - 1.0);
        }
      }
    }
  }

  // Chain through the cosine: dS[i][k]/de_i = (img_hat_k - S[i][k] eeg_hat_i) / |e_i|.
  const std::vector<double> ne = row_norms(batch.eeg);
  const std::vector<double> ni = row_norms(batch.img);
  Matrix grad(n, d, 0.0);
  std::vector<double> eeg_hat(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) eeg_hat[c] = batch.eeg(i, c) / ne[i];
    double gs = 0.0;  // sum_k dL/dS[i][k] * S[i][k]
    for (std::size_t k = 0; k < n; ++k) {
      const double g = ds(i, k);
      if (g == 0.0) continue;
      gs += g * s(i, k);
      // grad_i += g * img_hat_k
      const double* img_row = batch.img.row(k);
      for (std::size_t c = 0; c < d; ++c)
        grad(i, c) += g * img_row[c] / ni[k];
    }
    for (std::size_t c = 0; c < d; ++c)
      grad(i, c) = (grad(i, c) - gs * eeg_hat[c]) / ne[i];
  }
  return grad;
}

void validate_net(const MappingNet& net) {
  if (net.n_tokens < 1) throw_validation("mapping net needs n_tokens >= 1");
  if (net.d_token < 1) throw_validation("mapping net needs d_token >= 1");
  const std::size_t hidden = net.W1.rows();
  if (hidden == 0 || net.W1.cols() == 0)
    throw_validation("mapping net W1 is empty");
  if (net.b1.size() != hidden)
    throw_validation("mapping net b1 length must equal W1 rows");
  if (net.W2.cols() != hidden)
    throw_validation("mapping net W2 width must equal the hidden size");
  if (net.W2.rows() != net.n_tokens * net.d_token)
    throw_validation("mapping net W2 rows must equal n_tokens * d_token");
  if (net.b2.size() != net.W2.rows())
    throw_validation("mapping net b2 length must equal W2 rows");
}

MappingNet random_mapping_net(std::size_t d_in, std::size_t hidden,
                              std::size_t n_tokens, std::size_t d_token,
                              std::uint64_t seed) {
  Rng rng(seed);
  MappingNet net;
  net.n_tokens = n_tokens;
  net.d_token = d_token;
  net.W1 = Matrix(hidden, d_in);
  net.b1.resize(hidden);
  net.W2 = Matrix(n_tokens * d_token, hidden);
  net.b2.resize(n_tokens * d_token);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(d_in));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (double& v : net.W1.storage()) v = rng.uniform(-s1, s1);
  for (double& v : net.b1) v = rng.uniform(-s1, s1);
  for (double& v : net.W2.storage()) v = rng.uniform(-s2, s2);
  for (double& v : net.b2) v = rng.uniform(-s2, s2);
  return net;
}

void save_mapping_net(const MappingNet& net, const std::string& path) {
  validate_net(net);
  json doc;
  doc["d_in"] = net.W1.cols();
  doc["hidden"] = net.W1.rows();
  doc["n_tokens"] = net.n_tokens;
  doc["d_token"] = net.d_token;
  doc["W1"] = net.W1.storage();
  doc["b1"] = net.b1;
  doc["W2"] = net.W2.storage();
  doc["b2"] = net.b2;
  std::ofstream out(path);
  if (!out) throw_validation("cannot write '" + path + "'");
  out << doc.dump(2) << "\n";
}

MappingNet load_mapping_net(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_validation("cannot open '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw_validation(std::string("mapping net is not valid JSON: ") + e.what());
  }
  MappingNet net;
  try {
    const auto d_in = doc.at("d_in").get<std::size_t>();
    const auto hidden = doc.at("hidden").get<std::size_t>();
    net.n_tokens = doc.at("n_tokens").get<std::size_t>();
    net.d_token = doc.at("d_token").get<std::size_t>();
    net.W1 = Matrix(hidden, d_in);
    net.W1.storage() = doc.at("W1").get<std::vector<double>>();
    net.b1 = doc.at("b1").get<std::vector<double>>();
    net.W2 = Matrix(net.n_tokens * net.d_token, hidden);
    net.W2.storage() = doc.at("W2").get<std::vector<double>>();
    net.b2 = doc.at("b2").get<std::vector<double>>();
    if (net.W1.storage().size() != hidden * d_in ||
        net.W2.storage().size() != net.n_tokens * net.d_token * hidden)
      throw_validation("mapping net arrays have wrong element counts");
  } catch (const json::exception& e) {
    throw_validation(std::string("mapping net missing fields: ") + e.what());
  }
  validate_net(net);
  return net;
}

namespace {

std::vector<double> hidden_preactivation(const std::vector<double>& h_eeg,
                                         const MappingNet& net) {
  std::vector<double> pre(net.W1.rows());
  for (std::size_t r = 0; r < net.W1.rows(); ++r)
    pre[r] = kernels::dot(net.W1.row(r), h_eeg.data(), net.W1.cols()) +
             net.b1[r];
  return pre;
}

}  // namespace

Matrix mapping_forward(const std::vector<double>& h_eeg,
                       const MappingNet& net) {
  validate_net(net);
  if (h_eeg.size() != net.W1.cols())
    throw_validation("input width does not match mapping net d_in");
  std::vector<double> hidden = hidden_preactivation(h_eeg, net);
  for (double& v : hidden) v = std::max(0.0, v);

  Matrix out(net.n_tokens, net.d_token);
  for (std::size_t r = 0; r < net.W2.rows(); ++r)
    out.storage()[r] =
        kernels::dot(net.W2.row(r), hidden.data(), net.W2.cols()) + net.b2[r];
  return out;
}

Matrix mapping_jacobian(const std::vector<double>& h_eeg,
                        const MappingNet& net) {
  validate_net(net);
  if (h_eeg.size() != net.W1.cols())
    throw_validation("input width does not match mapping net d_in");
  const std::vector<double> pre = hidden_preactivation(h_eeg, net);
  const std::size_t hidden = net.W1.rows();
  const std::size_t d_in = net.W1.cols();

  // J = W2 * diag(relu'(pre)) * W1
  Matrix jac(net.W2.rows(), d_in, 0.0);
  for (std::size_t r = 0; r < net.W2.rows(); ++r)
    for (std::size_t h = 0; h < hidden; ++h) {
      if (pre[h] <= 0.0) continue;
      kernels::axpy(net.W2(r, h), net.W1.row(h), jac.row(r), d_in);
    }
  return jac;
}

double sequence_nll(const std::vector<double>& token_probs) {
  if (token_probs.empty())
    throw_validation("sequence must contain at least one token");
  double sum = 0.0;
  for (const double p : token_probs) {
    if (!(p >= 0.0) || p > 1.0)
      throw_validation("token probabilities must lie in [0, 1]");
    if (p == 0.0)
      throw_numeric("sequence likelihood is zero: token with probability 0");
    sum += std::log(p);
  }
  return -sum / static_cast<double>(token_probs.size());
}

Prompt make_prompt(const std::string& label) {
  Prompt p;
  p.system = kPromptSystem;
  p.user = kPromptUserTemplate;
  const std::string placeholder = "<Label>";
  const auto pos = p.user.find(placeholder);
  p.user.replace(pos, placeholder.size(), label);
  return p;
}

}  // namespace nsplat::align
