#pragma once

#include "tim/types.hpp"

namespace tim {

// All bound quantities are in nats.

struct ConfusionStats {
  Matrix joint;             // K x K, joint[pred][truth], sums to 1
  Vector per_class_recall;  // P(pred = y | truth = y)
  double epsilon = 0.0;     // 1 - min recall
  bool diagonally_dominant = false;        // strict, column-wise:
                                           //   joint[y][y] > joint[y'][y]
  bool diagonally_dominant_weak = false;   // row-wise with >=:
                                           //   joint[y][y] >= joint[y][y']
};

struct BoundReport {
  double p_e = 0.0;               // empirical hard-classifier error
  double kl_marginal = 0.0;       // KL(query marginal || prior)
  double cond_entropy = 0.0;      // H(predictions | sample)
  double p_delta_empirical = 0.0; // 1 - mean max posterior
  double p_delta_bound = 0.0;     // conditional entropy
  double delta_term_kl = 0.0;     // delta(sqrt(kl/2))
  double delta_term_cond = 0.0;   // delta(cond_entropy)
  double g_eps = 0.0;
  double total_bound = 0.0;       // sum of the three terms above
  double epsilon = 0.0;           // from the confusion matrix
  bool domain_valid = false;      // both delta arguments <= (K-1)/K
  bool diagonally_dominant = false;
  bool bound_holds = false;       // p_e <= total_bound (when applicable)
  std::string verdict;            // holds | violated | assumption_violated |
                                  // not_applicable
};

// H2(p) = -p ln p - (1-p) ln(1-p); domain [0, 1].
double binary_entropy(double p);

// delta(x) = H2(x) + x ln(k-1), strictly increasing on [0, (k-1)/k];
// outside that interval throws "domain_error".
double delta_fn(double x, int k);

// g(eps) = -ln(1-eps) - (k-1) eps ln(eps); domain [0, 1).
double g_epsilon(double eps, int k);

ConfusionStats confusion_stats(const std::vector<int>& predictions,
                               const std::vector<int>& truth, int k);

// (empirical, bound) where empirical = 1 - mean max_k p_ik over query rows and
// bound = conditional entropy; checks empirical <= 1 - exp(-H) <= bound.
std::pair<double, double> p_delta_terms(const Posteriors& post);

// sum_k phat_k ln(phat_k / prior_k); throws on a zero prior entry.
double marginal_kl(const Posteriors& post, const Vector& prior);

struct ContinuityBound {
  double bound = 0.0;
  bool domain_valid = false;  // half L1 distance <= (k-1)/k
};

// |H(pa) - H(pb)| <= half_l1 * ln(k-1) + H2(half_l1), half_l1 = 0.5*||pa-pb||_1.
ContinuityBound entropy_continuity_bound(const Vector& pa, const Vector& pb, int k);

// true iff p_e <= cond_entropy_nats / 2; requires p_e in [0, 0.5]
// (throws "regime_error" outside it).
bool kovalevsky_check(double cond_entropy_nats, double p_e);

// Assembles the full error-bound report for the query set of `post` against
// `truth` (one label per query row) under `prior`. Verdicts, not exceptions:
// dominance or domain failures yield "assumption_violated"/"not_applicable".
BoundReport proposition1_bound(const Posteriors& post, const std::vector<int>& truth,
                               const Vector& prior);

std::string bound_report_to_json(const BoundReport& report);
BoundReport bound_report_from_json(const std::string& text);

}  // namespace tim
