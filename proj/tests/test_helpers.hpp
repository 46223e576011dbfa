#pragma once
// Shared builders and independent numerical oracles for the test suite.
// Everything here recomputes results from first principles (naive loops,
// finite differences, iterative minimizers) so library code is never used
// to check itself.

#include <cmath>
#include <vector>

#include "tim/core.hpp"
#include "tim/solver_adm.hpp"
#include "tim/tasks.hpp"
#include "tim/types.hpp"

namespace timtest {

using tim::Hyperparameters;
using tim::Matrix;
using tim::Posteriors;
using tim::Rng;
using tim::Task;
using tim::Vector;

// Random unit-norm episode with `shots` support and `queries` query rows per
// class, clustered enough that posteriors stay in a generic regime.
inline Task random_task(Rng& rng, int k, int shots, int queries, int dim,
                        double concentration = 3.0) {
  Matrix means(k, dim);
  for (int c = 0; c < k; ++c) {
    for (int j = 0; j < dim; ++j) means(c, j) = rng.gaussian();
    means.row(c) /= means.row(c).norm();
  }
  const auto draw = [&](Matrix& rows, std::vector<int>& labels, int per_class) {
    rows.resize(static_cast<Eigen::Index>(k) * per_class, dim);
    labels.clear();
    Eigen::Index r = 0;
    for (int c = 0; c < k; ++c)
      for (int s = 0; s < per_class; ++s, ++r) {
        for (int j = 0; j < dim; ++j)
          rows(r, j) = means(c, j) + rng.gaussian() / concentration;
        rows.row(r) /= rows.row(r).norm();
        labels.push_back(c);
      }
  };
  Matrix support, query;
  std::vector<int> sl, ql;
  draw(support, sl, shots);
  draw(query, ql, queries);
  return tim::make_task(support, sl, query, ql, k);
}

// Row-stochastic matrix of softmaxed gaussian logits at a given sharpness.
inline Matrix random_stochastic_rows(Rng& rng, int n, int k, double sharp) {
  Matrix p(n, k);
  for (int i = 0; i < n; ++i) {
    double mx = -1e300;
    for (int j = 0; j < k; ++j) {
      p(i, j) = sharp * rng.gaussian();
      mx = std::max(mx, p(i, j));
    }
    double sum = 0.0;
    for (int j = 0; j < k; ++j) {
      p(i, j) = std::exp(p(i, j) - mx);
      sum += p(i, j);
    }
    p.row(i) /= sum;
  }
  return p;
}

// Dirichlet(1,...,1) rows: normalized exponentials.
inline Matrix random_simplex_rows(Rng& rng, int n, int k) {
  Matrix q(n, k);
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    for (int j = 0; j < k; ++j) {
      q(i, j) = -std::log(1.0 - rng.uniform());
      sum += q(i, j);
    }
    q.row(i) /= sum;
  }
  return q;
}

// Posteriors wrapper for a bare query-row probability matrix.
inline Posteriors as_query_posteriors(const Matrix& probs) {
  Posteriors post;
  post.probs = probs;
  post.query_indices.resize(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i)
    post.query_indices[static_cast<std::size_t>(i)] = static_cast<int>(i);
  post.query_marginal = probs.colwise().mean().transpose();
  return post;
}

// q-dependent part of the alternating objective:
//   F(q) = sum_k qhat_k ln qhat_k - (alpha/n) sum q ln p + (beta/n) sum q ln(q/p)
inline double q_objective(const Matrix& q, const Matrix& p, double alpha,
                          double beta) {
  const int n = static_cast<int>(q.rows());
  const int k = static_cast<int>(q.cols());
  double t1 = 0.0;
  for (int j = 0; j < k; ++j) {
    const double qh = q.col(j).mean();
    t1 += qh * std::log(qh);
  }
  double t2 = 0.0, t3 = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) {
      t2 -= q(i, j) * std::log(p(i, j));
      t3 += q(i, j) * std::log(q(i, j) / p(i, j));
    }
  return t1 + (alpha / n) * t2 + (beta / n) * t3;
}

// Independent minimizer of F over row-stochastic q: entropic mirror descent,
// run far past stationarity. Used as the q_update oracle.
inline Matrix mirror_descent_q(const Matrix& p, double alpha, double beta,
                               const Matrix& q0, int iters = 40000,
                               double lr = 0.5) {
  const int n = static_cast<int>(p.rows());
  const int k = static_cast<int>(p.cols());
  Matrix q = q0;
  Matrix lq(n, k);
  for (int t = 0; t < iters; ++t) {
    Vector qh = q.colwise().mean().transpose();
    for (int i = 0; i < n; ++i) {
      double mx = -1e300;
      for (int j = 0; j < k; ++j) {
        const double grad = (1.0 / n) * (std::log(qh(j)) + 1.0) -
                            (alpha / n) * std::log(p(i, j)) +
                            (beta / n) * (std::log(q(i, j) / p(i, j)) + 1.0);
        lq(i, j) = std::log(q(i, j)) - lr * grad * n / beta;
        mx = std::max(mx, lq(i, j));
      }
      double sum = 0.0;
      for (int j = 0; j < k; ++j) {
        q(i, j) = std::exp(lq(i, j) - mx);
        sum += q(i, j);
      }
      q.row(i) /= sum;
    }
  }
  return q;
}

// Central finite differences of the transductive loss with respect to W.
inline Matrix fd_gradient(const Matrix& weights, const Task& task,
                          const Hyperparameters& hp, double step = 1e-5) {
  Matrix grad(weights.rows(), weights.cols());
  Matrix w = weights;
  for (Eigen::Index r = 0; r < weights.rows(); ++r)
    for (Eigen::Index c = 0; c < weights.cols(); ++c) {
      const double saved = w(r, c);
      w(r, c) = saved + step;
      const double up = tim::tim_loss(tim::compute_posteriors(w, task, hp.tau),
                                      task, hp);
      w(r, c) = saved - step;
      const double dn = tim::tim_loss(tim::compute_posteriors(w, task, hp.tau),
                                      task, hp);
      w(r, c) = saved;
      grad(r, c) = (up - dn) / (2.0 * step);
    }
  return grad;
}

// Gradient-check metric: relative above magnitude 1, absolute below.
inline double gradient_rel_error(const Matrix& analytic, const Matrix& fd) {
  double worst = 0.0;
  for (Eigen::Index r = 0; r < analytic.rows(); ++r)
    for (Eigen::Index c = 0; c < analytic.cols(); ++c) {
      const double rel = std::abs(analytic(r, c) - fd(r, c)) /
                         std::max(1.0, std::abs(fd(r, c)));
      worst = std::max(worst, rel);
    }
  return worst;
}

// Naive per-sample evaluation of the auxiliary-bound gradient at `w`:
//   g_k = tau * [ cs * sum_S (y_ik (w_k - z_i) - p_ik (w_prev_k - z_i))
//               + cq * sum_Q (q_ik (w_k - z_i) - p_ik (w_prev_k - z_i)) ]
// with cs = lambda/(beta+alpha), cq = |S|/|Q|. Vanishes at the weight update.
inline Matrix aux_bound_gradient(const Matrix& w, const Matrix& w_prev,
                                 const Posteriors& post_prev, const Matrix& q,
                                 const Task& task, const Hyperparameters& hp) {
  const double cs = hp.lambda / (hp.beta + hp.alpha);
  const double cq = static_cast<double>(task.support_count()) /
                    static_cast<double>(task.query_count());
  Matrix grad = Matrix::Zero(w.rows(), w.cols());
  for (std::size_t s = 0; s < task.support_indices.size(); ++s) {
    const int i = task.support_indices[s];
    for (int k = 0; k < task.num_classes; ++k) {
      const double y = task.support_labels[s] == k ? 1.0 : 0.0;
      grad.row(k) += cs * (y * (w.row(k) - task.features.row(i)) -
                           post_prev.probs(i, k) *
                               (w_prev.row(k) - task.features.row(i)));
    }
  }
  for (std::size_t s = 0; s < task.query_indices.size(); ++s) {
    const int i = task.query_indices[s];
    for (int k = 0; k < task.num_classes; ++k)
      grad.row(k) += cq * (q(static_cast<Eigen::Index>(s), k) *
                               (w.row(k) - task.features.row(i)) -
                           post_prev.probs(i, k) *
                               (w_prev.row(k) - task.features.row(i)));
  }
  return hp.tau * grad;
}

}  // namespace timtest
