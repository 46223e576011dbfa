#pragma once

#include "tim/types.hpp"

namespace tim {

// Row-wise L2 normalization; throws on a zero-norm row (code "zero_norm_row").
Matrix normalize_features(const Matrix& raw);

// Numerically stabilized row-wise softmax (max subtraction per row).
Matrix softmax_rows(const Matrix& logits);

// p_ik = softmax_k(-tau/2 * ||w_k - z_i||^2) over every task row, plus the
// query marginal (mean of query rows).
Posteriors compute_posteriors(const Matrix& weights, const Task& task, double tau);

// Entropies in nats. Conditional entropy averages over query rows only.
double conditional_entropy(const Posteriors& post);
double marginal_entropy(const Posteriors& post);

// marginal_entropy - alpha * conditional_entropy; alpha = 1 is the standard
// empirical mutual information between query samples and predictions.
double weighted_mutual_information(const Posteriors& post, double alpha);

// Mean negative log-probability of the true label over support rows.
double cross_entropy(const Posteriors& post, const Task& task);

// lambda * CE - (marginal_entropy - alpha * conditional_entropy)
double tim_loss(const Posteriors& post, const Task& task, const Hyperparameters& hp);

// Four-term alternating-solver objective:
//   lambda * CE + sum_k qhat_k ln qhat_k - (alpha/|Q|) sum q ln p
//   + (beta/|Q|) sum q ln(q/p).
// Equals tim_loss when q == p (the KL penalty and entropy terms recombine).
double adm_loss(const Posteriors& post, const AuxAssignments& aux, const Task& task,
                const Hyperparameters& hp);

// w_k = mean of support embeddings with label k.
Matrix init_prototypes(const Task& task);

// Hard predictions (argmax posterior) for the query rows, in query order.
std::vector<int> query_predictions(const Posteriors& post);

// Fraction of query predictions matching task.query_labels; NaN if unlabeled.
double query_accuracy(const Posteriors& post, const Task& task);

}  // namespace tim
