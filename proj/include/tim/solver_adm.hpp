#pragma once

#include "tim/types.hpp"

namespace tim {

struct AdmResult {
  Matrix final_weights;
  AuxAssignments final_aux;            // empty for the CeOnly variant
  ConvergenceTrace trace;
  std::vector<int> query_predictions;
  TraceRecord initial_state;
  AblationVariant variant = AblationVariant::Full;
  bool fixed_point_reached = false;    // in-run displacement drop below tol
  int fixed_point_iteration = -1;
  bool hessian_checked = false;        // per-iterate check was enabled
  bool hessian_all_pass = true;
  double hessian_worst_eig = 0.0;      // largest max-eigenvalue seen
};

struct HessianCheckReport {
  Vector max_eig_support;  // per class, support-side matrix
  Vector max_eig_query;    // per class, query-side matrix
  bool pass = false;       // all max eigenvalues <= kHessianEigTol
};

inline constexpr double kHessianEigTol = 1e-10;

// Closed-form assignment update on the query posteriors. Variants:
//   Full        q ∝ p^(1+alpha/beta) / (column sums)^(1/(1+beta))
//   CePlusCond  q ∝ p^(1+alpha/beta)
//   CeMinusMarg q ∝ p / (column sums)^(1/(1+beta))
// Rows renormalized to the simplex; computed in log space for tau=15 scale.
// CeOnly has no assignment step and is rejected here.
AuxAssignments q_update(const Posteriors& post, const Hyperparameters& hp,
                        AblationVariant variant = AblationVariant::Full);

// Closed-form weight update: per class, the weighted-mean expression mixing
// support labels and query assignments, with the linearization correction
// p_ik (w_k - z_i) from the previous iterate. Throws "zero_denominator"
// naming the class if a class mass vanishes (impossible for beta > 0).
Matrix w_update(const Matrix& weights_prev, const Posteriors& post_prev,
                const AuxAssignments& aux, const Task& task,
                const Hyperparameters& hp);

// Per-class concavity diagnostic: assembles, for the support and query sets,
//   H_k = sum_i p_ik (p_ik - 1)(z_i - w_k)(z_i - w_k)^T - p_ik I
// and reports max eigenvalues; pass iff all <= kHessianEigTol.
HessianCheckReport hessian_check(const Matrix& weights, const Posteriors& post,
                                 const Task& task);

struct AdmOptions {
  bool hessian_check_each_iter = false;
  double fixed_point_tol = 1e-4;  // in-run fixed-point detection threshold
};

// Alternating solver: prototype init, then hp.iterations rounds of
// (q_update, w_update). Trace records the objective after each full round.
// CeOnly leaves W at the prototypes (its trace loss column is lambda * CE).
AdmResult run_tim_adm(const Task& task, const Hyperparameters& hp,
                      AblationVariant variant = AblationVariant::Full,
                      const AdmOptions& options = {});

// Applies one extra (q_update, w_update) pair to the final state; true iff
// ||dW||_inf <= tol and ||dq||_inf <= tol. Optional out-params receive the
// displacements. CeOnly results are exact fixed points by construction.
bool fixed_point_test(const AdmResult& result, const Task& task,
                      const Hyperparameters& hp, double tol,
                      double* dw_out = nullptr, double* dq_out = nullptr);

}  // namespace tim
