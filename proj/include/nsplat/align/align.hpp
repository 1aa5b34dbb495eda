#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "nsplat/core/linalg.hpp"

namespace nsplat::align {

// Row-paired embedding batch: eeg row i and img row i are a positive pair.
struct EmbeddingBatch {
  Matrix eeg;  // N x d
  Matrix img;  // N x d
};

struct LossConfig {
  double tau = 0.07;
  double alpha_scale = 0.5;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
};

// Demo training defaults (not used by the losses themselves).
inline constexpr double kDemoLearningRate = 2e-5;
inline constexpr int kDemoBatchSize = 8;

void validate_batch(const EmbeddingBatch& batch);
void validate_config(const LossConfig& cfg);

// S[i][k] = cosine similarity of eeg row i vs img row k; rows must have
// nonzero norm.
Matrix similarity_matrix(const EmbeddingBatch& batch);

// -log probs[label]; probs must sum to 1 within 1e-9.
double cross_entropy(const std::vector<double>& probs, std::size_t label);

// -(1/N) sum_i log softmax_k(S[i][k]/tau)[i], log-sum-exp stabilized.
double info_nce(const Matrix& similarity, double tau);

double adaptive_margin(double similarity, double alpha_scale);

// (1/N) sum_i (1/(N-1)) sum_{j != i} hinge(m_i - (S[i][i] - S[i][j])),
// m_i = alpha * (1 - S[i][i]); zero when N == 1.
double margin_loss(const Matrix& similarity, const LossConfig& cfg);

// ce + lambda1 * nce + lambda2 * ml
double total_loss(double ce, double nce, double ml, const LossConfig& cfg);

// Analytic gradient of lambda1*info_nce + lambda2*margin_loss with respect
// to every eeg entry (img held fixed). Checked against central differences.
Matrix alignment_grads(const EmbeddingBatch& batch, const LossConfig& cfg);

// Two-layer mapping network; every output token is produced from the same
// hidden vector.
struct MappingNet {
  Matrix W1;               // hidden x d_in
  std::vector<double> b1;  // hidden
  Matrix W2;               // (n_tokens * d_token) x hidden
  std::vector<double> b2;  // n_tokens * d_token
  std::size_t n_tokens = 1;
  std::size_t d_token = 1;
};

void validate_net(const MappingNet& net);
MappingNet random_mapping_net(std::size_t d_in, std::size_t hidden,
                              std::size_t n_tokens, std::size_t d_token,
                              std::uint64_t seed);
MappingNet load_mapping_net(const std::string& path);
void save_mapping_net(const MappingNet& net, const std::string& path);

// reshape(W2 * relu(W1 h + b1) + b2) into n_tokens rows of d_token.
Matrix mapping_forward(const std::vector<double>& h_eeg, const MappingNet& net);

// Analytic Jacobian d(flattened output)/d(h_eeg), (n_tokens*d_token) x d_in.
Matrix mapping_jacobian(const std::vector<double>& h_eeg,
                        const MappingNet& net);

// -(1/M) sum_m log p_m over the ground-truth token probabilities.
double sequence_nll(const std::vector<double>& token_probs);

// Chat prompt for the external language-model path. The <EEG> placeholder is
// kept verbatim (it stands for the mapped embeddings); <Label> is replaced.
inline constexpr const char* kPromptSystem = "You are an EEG signal interpreter.";
inline constexpr const char* kPromptUserTemplate =
    "<EEG><Label> Describe it in one sentence.";

struct Prompt {
  std::string system;
  std::string user;
};

Prompt make_prompt(const std::string& label);

}  // namespace nsplat::align
