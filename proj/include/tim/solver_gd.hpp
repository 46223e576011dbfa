#pragma once

#include "tim/types.hpp"

namespace tim {

struct GdResult {
  Matrix final_weights;
  ConvergenceTrace trace;               // length == iterations run
  std::vector<int> query_predictions;   // argmax of final posteriors
  TraceRecord initial_state;            // metrics at the prototype init
};

// Exact analytic gradient of the transductive loss with respect to W,
// including the coupling of the query marginal across samples.
Matrix tim_loss_gradient(const Matrix& weights, const Task& task,
                         const Hyperparameters& hp);

// Full-batch gradient solver: prototype init, then hp.iterations Adam steps
// (or plain gradient steps when hp.plain_sgd). iterations == 0 is a no-op run
// returning the prototype classifier.
GdResult run_tim_gd(const Task& task, const Hyperparameters& hp);

}  // namespace tim
