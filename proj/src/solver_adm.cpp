#include "tim/solver_adm.hpp"

#include <cmath>
#include <limits>

#include "tim/core.hpp"

namespace tim {

namespace {

// column-wise log-sum-exp of an (n x K) matrix of logs
Vector col_logsumexp(const Matrix& lm) {
  Vector out(lm.cols());
  for (Eigen::Index k = 0; k < lm.cols(); ++k) {
    const double m = lm.col(k).maxCoeff();
    out(k) = m + std::log((lm.col(k).array() - m).exp().sum());
  }
  return out;
}

Matrix rows(const Matrix& m, const std::vector<int>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(r) = m.row(idx[r]);
  return out;
}

}  // namespace

AuxAssignments q_update(const Posteriors& post, const Hyperparameters& hp,
                        AblationVariant variant) {
  if (variant == AblationVariant::CeOnly)
    throw TimError("invalid_config", "CeOnly variant has no assignment update");
  if (!(hp.beta > 0.0))
    throw TimError("invalid_hyperparameters", "beta must be > 0");

  const Matrix pq = rows(post.probs, post.query_indices);
  const Matrix lp = pq.array().log().matrix();

  Matrix lq;
  switch (variant) {
    case AblationVariant::Full: {
      const Matrix lu = (1.0 + hp.alpha / hp.beta) * lp;
      lq = lu;
      lq.rowwise() -= (col_logsumexp(lu) / (1.0 + hp.beta)).transpose();
      break;
    }
    case AblationVariant::CePlusCond:
      lq = (1.0 + hp.alpha / hp.beta) * lp;
      break;
    case AblationVariant::CeMinusMarg:
      lq = lp;
      lq.rowwise() -= (col_logsumexp(lp) / (1.0 + hp.beta)).transpose();
      break;
    default:
      throw TimError("invalid_config", "unhandled variant");
  }

  AuxAssignments aux;
  aux.assignments = softmax_rows(lq);
  aux.marginal = aux.assignments.colwise().mean().transpose();
  return aux;
}

Matrix w_update(const Matrix& weights_prev, const Posteriors& post_prev,
                const AuxAssignments& aux, const Task& task,
                const Hyperparameters& hp) {
  const int k_classes = task.num_classes;
  const int ns = task.support_count();
  const int nq = task.query_count();
  const double cs = hp.lambda / (hp.beta + hp.alpha);
  const double cq = static_cast<double>(ns) / static_cast<double>(nq);

  const Matrix zs = rows(task.features, task.support_indices);
  const Matrix zq = rows(task.features, task.query_indices);
  const Matrix ps = rows(post_prev.probs, task.support_indices);
  const Matrix pq = rows(post_prev.probs, task.query_indices);
  const Matrix& q = aux.assignments;

  // per-class support-label sums (y^T z and counts)
  Matrix ytz = Matrix::Zero(k_classes, task.features.cols());
  Vector ysum = Vector::Zero(k_classes);
  for (int s = 0; s < ns; ++s) {
    ytz.row(task.support_labels[s]) += zs.row(s);
    ysum(task.support_labels[s]) += 1.0;
  }

  const Vector ps_sum = ps.colwise().sum().transpose();
  const Vector pq_sum = pq.colwise().sum().transpose();
  const Vector q_sum = q.colwise().sum().transpose();

  // numerator: cs (y - p_s)^T z_s + cq (q - p_q)^T z_q
  //            + diag(cs sum p_s + cq sum p_q) w_prev
  Matrix num = cs * (ytz - ps.transpose() * zs) +
               cq * (q.transpose() * zq - pq.transpose() * zq);
  num += (cs * ps_sum + cq * pq_sum).asDiagonal() * weights_prev;

  Matrix out(k_classes, task.features.cols());
  for (int k = 0; k < k_classes; ++k) {
    const double den = cs * ysum(k) + cq * q_sum(k);
    if (!(den > 0.0))
      throw TimError("zero_denominator",
                     "weight update denominator vanished for class " +
                         std::to_string(k));
    out.row(k) = num.row(k) / den;
  }
  return out;
}

HessianCheckReport hessian_check(const Matrix& weights, const Posteriors& post,
                                 const Task& task) {
  const Eigen::Index d = weights.cols();
  HessianCheckReport report;
  report.max_eig_support = Vector::Zero(task.num_classes);
  report.max_eig_query = Vector::Zero(task.num_classes);

  auto side_eig = [&](const std::vector<int>& idx, int k) {
    if (idx.empty()) return 0.0;  // empty sum: zero matrix
    Matrix h = Matrix::Zero(d, d);
    double psum = 0.0;
    for (int i : idx) {
      const double p = post.probs(i, k);
      const Vector v = (task.features.row(i) - weights.row(k)).transpose();
      h += p * (p - 1.0) * (v * v.transpose());
      psum += p;
    }
    h -= psum * Matrix::Identity(d, d);
    Eigen::SelfAdjointEigenSolver<Matrix> es(h, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
  };

  report.pass = true;
  for (int k = 0; k < task.num_classes; ++k) {
    report.max_eig_support(k) = side_eig(task.support_indices, k);
    report.max_eig_query(k) = side_eig(task.query_indices, k);
    if (report.max_eig_support(k) > kHessianEigTol ||
        report.max_eig_query(k) > kHessianEigTol)
      report.pass = false;
  }
  return report;
}

AdmResult run_tim_adm(const Task& task, const Hyperparameters& hp,
                      AblationVariant variant, const AdmOptions& options) {
  validate_task(task);
  validate_hyperparameters(hp);
  const int iters = hp.resolved_iterations(true);

  AdmResult result;
  result.variant = variant;
  result.hessian_checked = options.hessian_check_each_iter;
  result.hessian_worst_eig = -std::numeric_limits<double>::infinity();

  Matrix w = init_prototypes(task);
  Posteriors post = compute_posteriors(w, task, hp.tau);
  result.initial_state = {0,
                          variant == AblationVariant::CeOnly
                              ? hp.lambda * cross_entropy(post, task)
                              : tim_loss(post, task, hp),
                          query_accuracy(post, task),
                          weighted_mutual_information(post, 1.0), 0.0};

  result.trace.records.reserve(iters);
  AuxAssignments q_prev;
  for (int t = 1; t <= iters; ++t) {
    if (options.hessian_check_each_iter) {
      const HessianCheckReport hess = hessian_check(w, post, task);
      const double worst = std::max(hess.max_eig_support.maxCoeff(),
                                    hess.max_eig_query.maxCoeff());
      result.hessian_worst_eig = std::max(result.hessian_worst_eig, worst);
      if (!hess.pass) result.hessian_all_pass = false;
    }

    double dw = 0.0, dq = std::numeric_limits<double>::infinity();
    double loss;
    if (variant == AblationVariant::CeOnly) {
      // weights stay at the prototypes; no assignment step
      dq = 0.0;
      loss = hp.lambda * cross_entropy(post, task);
    } else {
      AuxAssignments q = q_update(post, hp, variant);
      const Matrix w_new = w_update(w, post, q, task, hp);
      dw = (w_new - w).array().abs().maxCoeff();
      if (!q_prev.empty())
        dq = (q.assignments - q_prev.assignments).array().abs().maxCoeff();
      w = w_new;
      post = compute_posteriors(w, task, hp.tau);
      loss = adm_loss(post, q, task, hp);
      q_prev = std::move(q);
    }

    result.trace.records.push_back({t, loss, query_accuracy(post, task),
                                    weighted_mutual_information(post, 1.0), dw});
    if (!result.fixed_point_reached && dw <= options.fixed_point_tol &&
        dq <= options.fixed_point_tol) {
      result.fixed_point_reached = true;
      result.fixed_point_iteration = t;
    }
  }

  result.final_weights = std::move(w);
  result.final_aux = std::move(q_prev);
  result.query_predictions = query_predictions(post);
  if (result.hessian_worst_eig == -std::numeric_limits<double>::infinity())
    result.hessian_worst_eig = 0.0;
  return result;
}

bool fixed_point_test(const AdmResult& result, const Task& task,
                      const Hyperparameters& hp, double tol, double* dw_out,
                      double* dq_out) {
  if (result.variant == AblationVariant::CeOnly) {
    if (dw_out) *dw_out = 0.0;
    if (dq_out) *dq_out = 0.0;
    return true;  // the update map is the identity for this variant
  }
  if (result.final_aux.empty())
    throw TimError("invalid_config",
                   "fixed_point_test needs a result with at least one iteration");

  const Posteriors post = compute_posteriors(result.final_weights, task, hp.tau);
  const AuxAssignments q2 = q_update(post, hp, result.variant);
  const Matrix w2 = w_update(result.final_weights, post, q2, task, hp);
  const double dw = (w2 - result.final_weights).array().abs().maxCoeff();
  const double dq =
      (q2.assignments - result.final_aux.assignments).array().abs().maxCoeff();
  if (dw_out) *dw_out = dw;
  if (dq_out) *dq_out = dq;
  return dw <= tol && dq <= tol;
}

}  // namespace tim
