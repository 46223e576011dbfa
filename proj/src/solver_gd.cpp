#include "tim/solver_gd.hpp"

#include <cmath>

#include "tim/core.hpp"

namespace tim {

Matrix tim_loss_gradient(const Matrix& weights, const Task& task,
                         const Hyperparameters& hp) {
  const Posteriors post = compute_posteriors(weights, task, hp.tau);
  const Matrix& p = post.probs;
  const Eigen::Index cols = p.cols();
  const int ns = task.support_count();
  const int nq = task.query_count();

  // dL/dlogit, assembled per row.
  Matrix g_logit = Matrix::Zero(p.rows(), cols);

  // supervision: (lambda/|S|) (p - y) on support rows
  for (int s = 0; s < ns; ++s) {
    const int i = task.support_indices[s];
    g_logit.row(i) = (hp.lambda / ns) * p.row(i);
    g_logit(i, task.support_labels[s]) -= hp.lambda / ns;
  }

  // query rows: -marginal entropy + alpha * conditional entropy.
  // d(-H(marg))/dlogit_ik = (p_ik/|Q|) (ln phat_k - sum_j p_ij ln phat_j)
  // d(alpha H(cond))/dlogit_ik = -(alpha p_ik/|Q|) (ln p_ik - sum_j p_ij ln p_ij)
  const Vector ln_ph = post.query_marginal.array().log();
  for (int r = 0; r < nq; ++r) {
    const int i = task.query_indices[r];
    const double row_m = p.row(i).dot(ln_ph);
    double row_c = 0.0;
    for (Eigen::Index k = 0; k < cols; ++k)
      row_c += p(i, k) * std::log(p(i, k));
    for (Eigen::Index k = 0; k < cols; ++k) {
      const double lnp = std::log(p(i, k));
      g_logit(i, k) += p(i, k) / nq *
                       ((ln_ph(k) - row_m) - hp.alpha * (lnp - row_c));
    }
  }

  // dlogit_ik/dw_k = tau (z_i - w_k)
  Matrix grad = hp.tau * (g_logit.transpose() * task.features);
  const Vector colsum = g_logit.colwise().sum().transpose();
  grad -= hp.tau * colsum.asDiagonal() * weights;
  return grad;
}

GdResult run_tim_gd(const Task& task, const Hyperparameters& hp) {
  validate_task(task);
  validate_hyperparameters(hp);
  const int iters = hp.resolved_iterations(false);

  GdResult result;
  Matrix w = init_prototypes(task);

  {
    const Posteriors post0 = compute_posteriors(w, task, hp.tau);
    result.initial_state = {0, tim_loss(post0, task, hp),
                           query_accuracy(post0, task),
                           weighted_mutual_information(post0, 1.0), 0.0};
  }

  Matrix m = Matrix::Zero(w.rows(), w.cols());
  Matrix v = Matrix::Zero(w.rows(), w.cols());
  result.trace.records.reserve(iters);

  for (int t = 1; t <= iters; ++t) {
    const Matrix grad = tim_loss_gradient(w, task, hp);
    Matrix step;
    if (hp.plain_sgd) {
      step = hp.learning_rate * grad;
    } else {
      m = hp.adam_beta1 * m + (1.0 - hp.adam_beta1) * grad;
      v = hp.adam_beta2 * v +
          (1.0 - hp.adam_beta2) * grad.array().square().matrix();
      const double bc1 = 1.0 - std::pow(hp.adam_beta1, t);
      const double bc2 = 1.0 - std::pow(hp.adam_beta2, t);
      step = (hp.learning_rate * (m / bc1).array() /
              ((v / bc2).array().sqrt() + hp.adam_eps))
                 .matrix();
    }
    w -= step;

    const Posteriors post = compute_posteriors(w, task, hp.tau);
    result.trace.records.push_back({t, tim_loss(post, task, hp),
                                    query_accuracy(post, task),
                                    weighted_mutual_information(post, 1.0),
                                    step.array().abs().maxCoeff()});
  }

  result.final_weights = std::move(w);
  const Posteriors post = compute_posteriors(result.final_weights, task, hp.tau);
  result.query_predictions = query_predictions(post);
  return result;
}

}  // namespace tim
