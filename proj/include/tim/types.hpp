#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace tim {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Error with a stable machine-readable code alongside the human message.
class TimError : public std::runtime_error {
 public:
  TimError(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

// One few-shot episode: unit-norm embeddings with a support/query split.
// Rows are stacked support-first by the constructors in this library, but all
// consumers go through the index sets, so any disjoint partition is legal.
struct Task {
  Matrix features;                    // (|S|+|Q|) x d, rows L2-normalized
  std::vector<int> support_indices;   // row indices of labeled samples
  std::vector<int> query_indices;     // row indices of unlabeled samples
  std::vector<int> support_labels;    // parallel to support_indices, in [0, K)
  std::vector<int> query_labels;      // parallel to query_indices; empty when unknown
  int num_classes = 0;

  int support_count() const { return static_cast<int>(support_indices.size()); }
  int query_count() const { return static_cast<int>(query_indices.size()); }
  Eigen::Index dim() const { return features.cols(); }
  bool has_query_labels() const { return !query_labels.empty(); }
};

Task make_task(const Matrix& support, const std::vector<int>& support_labels,
               const Matrix& query, const std::vector<int>& query_labels,
               int num_classes);
void validate_task(const Task& task);

inline constexpr int kDefaultGdIterations = 1000;
inline constexpr int kDefaultAdmIterations = 150;

struct Hyperparameters {
  double tau = 15.0;            // softmax temperature
  double alpha = 0.1;           // conditional-entropy weight
  double lambda = 0.1;          // cross-entropy weight
  double beta = 1.0;            // KL-penalty multiplier (alternating solver)
  double learning_rate = 1e-4;  // gradient solver step size
  int iterations = -1;          // <0 selects the per-solver default
  bool plain_sgd = false;       // gradient solver: vanilla steps instead of Adam
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  int resolved_iterations(bool alternating) const {
    if (iterations >= 0) return iterations;
    return alternating ? kDefaultAdmIterations : kDefaultGdIterations;
  }
};

void validate_hyperparameters(const Hyperparameters& hp);

// Softmax posteriors over every task row plus the query-set marginal.
// query_indices is carried along so entropy/marginal computations need no Task.
struct Posteriors {
  Matrix probs;               // N x K
  Vector query_marginal;      // K
  std::vector<int> query_indices;
};

// Auxiliary simplex assignments of the alternating solver (query rows only).
struct AuxAssignments {
  Matrix assignments;  // |Q| x K, rows on the simplex, strictly positive
  Vector marginal;     // K, mean of rows

  bool empty() const { return assignments.size() == 0; }
};

struct TraceRecord {
  int iteration = 0;
  double loss = 0.0;
  double accuracy = 0.0;  // NaN when query labels are unavailable
  double mi_alpha1 = 0.0;
  double weight_displacement = 0.0;
};

struct ConvergenceTrace {
  std::vector<TraceRecord> records;  // one per completed iteration
};

enum class Solver { Gd, Adm };
enum class AblationVariant { Full, CeOnly, CePlusCond, CeMinusMarg };

Solver parse_solver(const std::string& name);
AblationVariant parse_variant(const std::string& name);
std::string solver_name(Solver s);
std::string variant_name(AblationVariant v);

// seed stream derivation: episode i of a run uses derive_seed(run_seed, i)
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

// Deterministic RNG with a fixed gaussian algorithm (Marsaglia polar) so
// results do not depend on the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double uniform() {  // [0, 1)
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  // unbiased integer in [0, n)
  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = eng_();
    } while (x >= limit);
    return x % n;
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace tim
