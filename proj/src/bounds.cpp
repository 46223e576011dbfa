#include "tim/bounds.hpp"

#include <cmath>
#include <limits>
#include <json.hpp>

#include "tim/core.hpp"

namespace tim {

namespace {

inline double xlogx(double v) { return v > 0.0 ? v * std::log(v) : 0.0; }

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

}  // namespace

double binary_entropy(double p) {
  if (p < 0.0 || p > 1.0)
    throw TimError("domain_error", "binary_entropy argument outside [0,1]");
  return -xlogx(p) - xlogx(1.0 - p);
}

double delta_fn(double x, int k) {
  if (k < 2) throw TimError("domain_error", "delta requires k >= 2");
  const double upper = static_cast<double>(k - 1) / k;
  if (x < 0.0 || x > upper)
    throw TimError("domain_error", "delta argument outside [0, (k-1)/k]");
  return binary_entropy(x) + x * std::log(static_cast<double>(k - 1));
}

double g_epsilon(double eps, int k) {
  if (k < 2) throw TimError("domain_error", "g_epsilon requires k >= 2");
  if (eps < 0.0 || eps >= 1.0)
    throw TimError("domain_error", "g_epsilon argument outside [0, 1)");
  if (eps == 0.0) return 0.0;
  return -std::log(1.0 - eps) - (k - 1) * eps * std::log(eps);
}

ConfusionStats confusion_stats(const std::vector<int>& predictions,
                               const std::vector<int>& truth, int k) {
  if (predictions.size() != truth.size())
    throw TimError("length_mismatch", "prediction/truth lengths differ");
  if (predictions.empty())
    throw TimError("length_mismatch", "empty label arrays");

  ConfusionStats stats;
  stats.joint = Matrix::Zero(k, k);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const int a = predictions[i], b = truth[i];
    if (a < 0 || a >= k || b < 0 || b >= k)
      throw TimError("domain_error", "label outside [0, k)");
    stats.joint(a, b) += 1.0;
  }
  stats.joint /= static_cast<double>(predictions.size());

  stats.per_class_recall = Vector::Zero(k);
  for (int y = 0; y < k; ++y) {
    const double col = stats.joint.col(y).sum();
    stats.per_class_recall(y) = col > 0.0 ? stats.joint(y, y) / col : 0.0;
  }
  stats.epsilon = 1.0 - stats.per_class_recall.minCoeff();

  stats.diagonally_dominant = true;       // strict, within each truth column
  stats.diagonally_dominant_weak = true;  // >=, within each prediction row
  for (int y = 0; y < k; ++y) {
    for (int other = 0; other < k; ++other) {
      if (other == y) continue;
      if (!(stats.joint(y, y) > stats.joint(other, y)))
        stats.diagonally_dominant = false;
      if (!(stats.joint(y, y) >= stats.joint(y, other)))
        stats.diagonally_dominant_weak = false;
    }
  }
  return stats;
}

std::pair<double, double> p_delta_terms(const Posteriors& post) {
  double mean_max = 0.0;
  for (int i : post.query_indices) mean_max += post.probs.row(i).maxCoeff();
  mean_max /= static_cast<double>(post.query_indices.size());
  const double empirical = 1.0 - mean_max;
  const double h = conditional_entropy(post);
  const double middle = 1.0 - std::exp(-h);
  if (empirical > middle + 1e-9 || middle > h + 1e-9)
    throw TimError("internal_error", "soft/hard disagreement chain violated");
  return {empirical, h};
}

double marginal_kl(const Posteriors& post, const Vector& prior) {
  if (prior.size() != post.query_marginal.size())
    throw TimError("dimension_mismatch", "prior size != number of classes");
  double kl = 0.0;
  for (Eigen::Index k = 0; k < prior.size(); ++k) {
    const double p = post.query_marginal(k);
    if (p == 0.0) continue;
    if (prior(k) <= 0.0)
      throw TimError("domain_error",
                     "zero prior entry with positive marginal mass at class " +
                         std::to_string(k));
    kl += p * std::log(p / prior(k));
  }
  // Gibbs: KL >= 0; summation roundoff can land at -1e-16, which would turn
  // sqrt(kl/2) into NaN downstream.
  return std::max(kl, 0.0);
}

ContinuityBound entropy_continuity_bound(const Vector& pa, const Vector& pb, int k) {
  if (k < 2) throw TimError("domain_error", "entropy_continuity_bound requires k >= 2");
  if (pa.size() != pb.size() || pa.size() != k)
    throw TimError("dimension_mismatch", "distribution sizes differ from k");
  for (const Vector* v : {&pa, &pb}) {
    if (v->minCoeff() < -1e-12 || std::abs(v->sum() - 1.0) > 1e-6)
      throw TimError("domain_error", "input is not a probability vector");
  }
  const double half_l1 = 0.5 * (pa - pb).array().abs().sum();
  ContinuityBound out;
  out.domain_valid = half_l1 <= static_cast<double>(k - 1) / k + 1e-15;
  if (out.domain_valid)
    out.bound = half_l1 * std::log(static_cast<double>(k - 1 > 0 ? k - 1 : 1)) +
                binary_entropy(std::min(half_l1, 1.0));
  else
    out.bound = kNan;
  return out;
}

bool kovalevsky_check(double cond_entropy_nats, double p_e) {
  if (p_e < 0.0 || p_e > 0.5)
    throw TimError("regime_error", "kovalevsky check requires p_e in [0, 0.5]");
  return p_e <= cond_entropy_nats / 2.0;
}

BoundReport proposition1_bound(const Posteriors& post, const std::vector<int>& truth,
                               const Vector& prior) {
  const int k = static_cast<int>(post.query_marginal.size());
  if (truth.size() != post.query_indices.size())
    throw TimError("length_mismatch", "truth labels != query rows");

  BoundReport report;
  const auto pred = query_predictions(post);
  int hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == truth[i]) ++hits;
  report.p_e = 1.0 - static_cast<double>(hits) / static_cast<double>(pred.size());

  const ConfusionStats conf = confusion_stats(pred, truth, k);
  report.epsilon = conf.epsilon;
  report.diagonally_dominant = conf.diagonally_dominant;
  report.kl_marginal = marginal_kl(post, prior);
  report.cond_entropy = conditional_entropy(post);
  std::tie(report.p_delta_empirical, report.p_delta_bound) = p_delta_terms(post);

  const double upper = static_cast<double>(k - 1) / k;
  const double arg_kl = std::sqrt(report.kl_marginal / 2.0);
  const double arg_cond = report.cond_entropy;
  report.domain_valid = arg_kl <= upper && arg_cond <= upper;

  if (report.domain_valid && report.epsilon < 1.0) {
    report.delta_term_kl = delta_fn(arg_kl, k);
    report.delta_term_cond = delta_fn(arg_cond, k);
    report.g_eps = g_epsilon(report.epsilon, k);
    report.total_bound =
        report.delta_term_kl + report.delta_term_cond + report.g_eps;
  } else {
    report.delta_term_kl = report.delta_term_cond = kNan;
    report.g_eps = report.epsilon < 1.0 ? g_epsilon(report.epsilon, k) : kNan;
    report.total_bound = kNan;
  }

  if (!report.diagonally_dominant) {
    report.verdict = "assumption_violated";
  } else if (!report.domain_valid) {
    report.verdict = "not_applicable";
  } else {
    report.bound_holds = report.p_e <= report.total_bound;
    report.verdict = report.bound_holds ? "holds" : "violated";
  }
  return report;
}

std::string bound_report_to_json(const BoundReport& r) {
  nlohmann::json j;
  j["p_e"] = r.p_e;
  j["kl_marginal"] = r.kl_marginal;
  j["cond_entropy"] = r.cond_entropy;
  j["p_delta_empirical"] = r.p_delta_empirical;
  j["p_delta_bound"] = r.p_delta_bound;
  j["delta_term_kl"] = r.delta_term_kl;
  j["delta_term_cond"] = r.delta_term_cond;
  j["g_eps"] = r.g_eps;
  j["total_bound"] = r.total_bound;
  j["epsilon"] = r.epsilon;
  j["domain_valid"] = r.domain_valid;
  j["diagonally_dominant"] = r.diagonally_dominant;
  j["bound_holds"] = r.bound_holds;
  j["verdict"] = r.verdict;
  return j.dump(2);
}

BoundReport bound_report_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw TimError("format_error", std::string("bad report JSON: ") + e.what());
  }
  // NaN serializes as null; map it back
  auto getd = [&j](const char* key) {
    const auto& v = j.at(key);
    return v.is_null() ? kNan : v.get<double>();
  };
  BoundReport r;
  try {
    r.p_e = getd("p_e");
    r.kl_marginal = getd("kl_marginal");
    r.cond_entropy = getd("cond_entropy");
    r.p_delta_empirical = getd("p_delta_empirical");
    r.p_delta_bound = getd("p_delta_bound");
    r.delta_term_kl = getd("delta_term_kl");
    r.delta_term_cond = getd("delta_term_cond");
    r.g_eps = getd("g_eps");
    r.total_bound = getd("total_bound");
    r.epsilon = getd("epsilon");
    r.domain_valid = j.at("domain_valid").get<bool>();
    r.diagonally_dominant = j.at("diagonally_dominant").get<bool>();
    r.bound_holds = j.at("bound_holds").get<bool>();
    r.verdict = j.at("verdict").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw TimError("format_error",
                   std::string("incomplete report JSON: ") + e.what());
  }
  return r;
}

}  // namespace tim
