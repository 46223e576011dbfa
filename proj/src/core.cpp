#include "tim/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace tim {

namespace {

constexpr double kUnitNormTol = 1e-6;

inline double xlogx(double v) { return v > 0.0 ? v * std::log(v) : 0.0; }

}  // namespace

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return splitmix64(splitmix64(base) ^ splitmix64(index + 0x9E3779B97F4A7C15ULL));
}

Solver parse_solver(const std::string& name) {
  if (name == "gd") return Solver::Gd;
  if (name == "adm") return Solver::Adm;
  throw TimError("invalid_config", "unknown solver '" + name + "' (expected gd|adm)");
}

AblationVariant parse_variant(const std::string& name) {
  if (name == "full") return AblationVariant::Full;
  if (name == "ce") return AblationVariant::CeOnly;
  if (name == "ce+cond") return AblationVariant::CePlusCond;
  if (name == "ce-marg") return AblationVariant::CeMinusMarg;
  throw TimError("invalid_config",
                 "unknown variant '" + name + "' (expected full|ce|ce+cond|ce-marg)");
}

std::string solver_name(Solver s) { return s == Solver::Gd ? "gd" : "adm"; }

std::string variant_name(AblationVariant v) {
  switch (v) {
    case AblationVariant::Full: return "full";
    case AblationVariant::CeOnly: return "ce";
    case AblationVariant::CePlusCond: return "ce+cond";
    case AblationVariant::CeMinusMarg: return "ce-marg";
  }
  return "?";
}

Task make_task(const Matrix& support, const std::vector<int>& support_labels,
               const Matrix& query, const std::vector<int>& query_labels,
               int num_classes) {
  if (support.cols() != query.cols())
    throw TimError("dimension_mismatch", "support/query feature dimensions differ");
  Task task;
  task.num_classes = num_classes;
  task.features.resize(support.rows() + query.rows(), support.cols());
  task.features.topRows(support.rows()) = support;
  task.features.bottomRows(query.rows()) = query;
  task.support_indices.resize(support.rows());
  task.query_indices.resize(query.rows());
  for (int i = 0; i < support.rows(); ++i) task.support_indices[i] = i;
  for (int i = 0; i < query.rows(); ++i)
    task.query_indices[i] = static_cast<int>(support.rows()) + i;
  task.support_labels = support_labels;
  task.query_labels = query_labels;
  validate_task(task);
  return task;
}

void validate_task(const Task& task) {
  const int n = static_cast<int>(task.features.rows());
  if (task.num_classes < 2)
    throw TimError("invalid_task", "num_classes must be >= 2");
  if (task.support_indices.size() != task.support_labels.size())
    throw TimError("invalid_task", "support labels/indices size mismatch");
  if (!task.query_labels.empty() &&
      task.query_labels.size() != task.query_indices.size())
    throw TimError("invalid_task", "query labels/indices size mismatch");

  std::vector<char> seen(n, 0);
  auto mark = [&](const std::vector<int>& idx) {
    for (int i : idx) {
      if (i < 0 || i >= n)
        throw TimError("invalid_task", "row index out of range");
      if (seen[i]) throw TimError("invalid_task", "support/query sets overlap");
      seen[i] = 1;
    }
  };
  mark(task.support_indices);
  mark(task.query_indices);
  if (std::find(seen.begin(), seen.end(), 0) != seen.end())
    throw TimError("invalid_task", "support/query sets do not cover all rows");

  std::vector<char> present(task.num_classes, 0);
  for (int lab : task.support_labels) {
    if (lab < 0 || lab >= task.num_classes)
      throw TimError("invalid_task", "support label out of range");
    present[lab] = 1;
  }
  for (int k = 0; k < task.num_classes; ++k)
    if (!present[k])
      throw TimError("invalid_task",
                     "class " + std::to_string(k) + " has no support sample");
  for (int lab : task.query_labels)
    if (lab < 0 || lab >= task.num_classes)
      throw TimError("invalid_task", "query label out of range");

  for (int i = 0; i < n; ++i) {
    const double norm = task.features.row(i).norm();
    if (std::abs(norm - 1.0) > kUnitNormTol)
      throw TimError("invalid_task",
                     "feature row " + std::to_string(i) + " is not unit-norm");
  }
}

void validate_hyperparameters(const Hyperparameters& hp) {
  if (!(hp.tau > 0.0)) throw TimError("invalid_hyperparameters", "tau must be > 0");
  if (hp.alpha < 0.0) throw TimError("invalid_hyperparameters", "alpha must be >= 0");
  if (hp.lambda < 0.0) throw TimError("invalid_hyperparameters", "lambda must be >= 0");
  if (!(hp.beta > 0.0)) throw TimError("invalid_hyperparameters", "beta must be > 0");
  if (!(hp.learning_rate > 0.0))
    throw TimError("invalid_hyperparameters", "learning_rate must be > 0");
  // iterations < 0 is the "use solver default" sentinel; 0 is a valid no-op run
}

Matrix normalize_features(const Matrix& raw) {
  Matrix out = raw;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double norm = out.row(i).norm();
    if (norm == 0.0)
      throw TimError("zero_norm_row",
                     "cannot normalize zero row " + std::to_string(i));
    out.row(i) /= norm;
  }
  return out;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p = logits;
  const Vector rowmax = p.rowwise().maxCoeff();
  p.colwise() -= rowmax;
  p = p.array().exp().matrix();
  const Vector rowsum = p.rowwise().sum();
  p.array().colwise() /= rowsum.array();
  return p;
}

Posteriors compute_posteriors(const Matrix& weights, const Task& task, double tau) {
  if (weights.cols() != task.features.cols())
    throw TimError("dimension_mismatch", "weight/feature dimensions differ");
  const Matrix& z = task.features;
  // -tau/2 ||w_k - z_i||^2 = tau z.w - tau/2 (||z||^2 + ||w||^2)
  Matrix logits = tau * (z * weights.transpose());
  logits.colwise() -= (tau / 2.0) * z.rowwise().squaredNorm();
  logits.rowwise() -= ((tau / 2.0) * weights.rowwise().squaredNorm()).transpose();

  Posteriors post;
  post.probs = softmax_rows(logits);
  post.query_indices = task.query_indices;
  post.query_marginal = Vector::Zero(weights.rows());
  for (int i : task.query_indices)
    post.query_marginal += post.probs.row(i).transpose();
  if (!task.query_indices.empty())
    post.query_marginal /= static_cast<double>(task.query_indices.size());
  return post;
}

double conditional_entropy(const Posteriors& post) {
  double total = 0.0;
  for (int i : post.query_indices)
    for (Eigen::Index k = 0; k < post.probs.cols(); ++k)
      total += xlogx(post.probs(i, k));
  if (post.query_indices.empty()) return 0.0;
  return -total / static_cast<double>(post.query_indices.size());
}

double marginal_entropy(const Posteriors& post) {
  double total = 0.0;
  for (Eigen::Index k = 0; k < post.query_marginal.size(); ++k)
    total += xlogx(post.query_marginal(k));
  return -total;
}

double weighted_mutual_information(const Posteriors& post, double alpha) {
  if (alpha < 0.0) throw TimError("invalid_hyperparameters", "alpha must be >= 0");
  return marginal_entropy(post) - alpha * conditional_entropy(post);
}

double cross_entropy(const Posteriors& post, const Task& task) {
  if (task.support_indices.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t s = 0; s < task.support_indices.size(); ++s)
    total += -std::log(post.probs(task.support_indices[s], task.support_labels[s]));
  return total / static_cast<double>(task.support_indices.size());
}

double tim_loss(const Posteriors& post, const Task& task, const Hyperparameters& hp) {
  return hp.lambda * cross_entropy(post, task) -
         (marginal_entropy(post) - hp.alpha * conditional_entropy(post));
}

double adm_loss(const Posteriors& post, const AuxAssignments& aux, const Task& task,
                const Hyperparameters& hp) {
  const auto& q = aux.assignments;
  const int nq = static_cast<int>(task.query_indices.size());
  if (q.rows() != nq)
    throw TimError("dimension_mismatch", "assignment rows != query count");

  double marg_term = 0.0;
  for (Eigen::Index k = 0; k < aux.marginal.size(); ++k)
    marg_term += xlogx(aux.marginal(k));

  double cond_term = 0.0, penalty = 0.0;
  for (int r = 0; r < nq; ++r) {
    const int i = task.query_indices[r];
    for (Eigen::Index k = 0; k < q.cols(); ++k) {
      const double lp = std::log(post.probs(i, k));
      cond_term += q(r, k) * lp;
      penalty += q(r, k) * (std::log(q(r, k)) - lp);
    }
  }
  return hp.lambda * cross_entropy(post, task) + marg_term -
         hp.alpha / nq * cond_term + hp.beta / nq * penalty;
}

Matrix init_prototypes(const Task& task) {
  Matrix w = Matrix::Zero(task.num_classes, task.features.cols());
  std::vector<int> counts(task.num_classes, 0);
  for (std::size_t s = 0; s < task.support_indices.size(); ++s) {
    w.row(task.support_labels[s]) += task.features.row(task.support_indices[s]);
    ++counts[task.support_labels[s]];
  }
  for (int k = 0; k < task.num_classes; ++k) {
    if (counts[k] == 0)
      throw TimError("empty_class",
                     "class " + std::to_string(k) + " has no support sample");
    w.row(k) /= static_cast<double>(counts[k]);
  }
  return w;
}

std::vector<int> query_predictions(const Posteriors& post) {
  std::vector<int> pred;
  pred.reserve(post.query_indices.size());
  for (int i : post.query_indices) {
    Eigen::Index best = 0;
    post.probs.row(i).maxCoeff(&best);
    pred.push_back(static_cast<int>(best));
  }
  return pred;
}

double query_accuracy(const Posteriors& post, const Task& task) {
  if (!task.has_query_labels())
    return std::numeric_limits<double>::quiet_NaN();
  const auto pred = query_predictions(post);
  int hits = 0;
  for (std::size_t r = 0; r < pred.size(); ++r)
    if (pred[r] == task.query_labels[r]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace tim
