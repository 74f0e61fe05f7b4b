#include "mixda/metrics_eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace mixda {

WeightedConfusion::WeightedConfusion(std::size_t class_count)
    : classes_(class_count), counts_(class_count * class_count, 0.0) {
  if (class_count == 0) throw Error(Errc::InvalidParam, "confusion matrix needs at least one class");
}

void WeightedConfusion::add(ClassIndex gt, ClassIndex pred, double weight) {
  if (gt >= classes_ || pred >= classes_) throw Error(Errc::InvalidParam, "label out of range");
  if (!(weight >= 0.0)) throw Error(Errc::InvalidParam, "weights must be nonnegative");
  counts_[gt * classes_ + pred] += weight;
}

WeightedConfusion& WeightedConfusion::operator+=(const WeightedConfusion& other) {
  if (other.classes_ != classes_) throw Error(Errc::DimensionMismatch, "confusion matrices differ in size");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

WeightedConfusion WeightedConfusion::scaled(double factor) const {
  WeightedConfusion out(*this);
  for (double& c : out.counts_) c *= factor;
  return out;
}

double WeightedConfusion::total() const noexcept {
  double t = 0.0;
  for (double c : counts_) t += c;
  return t;
}

double WeightedConfusion::row_sum(ClassIndex gt) const {
  double s = 0.0;
  for (std::size_t p = 0; p < classes_; ++p) s += at(gt, p);
  return s;
}

double WeightedConfusion::column_sum(ClassIndex pred) const {
  double s = 0.0;
  for (std::size_t g = 0; g < classes_; ++g) s += at(g, pred);
  return s;
}

WeightedConfusion WeightedConfusion::row_normalized() const {
  WeightedConfusion out(classes_);
  for (std::size_t g = 0; g < classes_; ++g) {
    const double r = row_sum(g);
    if (!(r > 0.0)) continue;
    for (std::size_t p = 0; p < classes_; ++p) out.counts_[g * classes_ + p] = at(g, p) / r;
  }
  return out;
}

WeightedConfusion weighted_confusion(std::span<const ClassIndex> gt, std::span<const ClassIndex> pred,
                                     std::span<const double> weights, std::size_t class_count) {
  if (gt.size() != pred.size() || gt.size() != weights.size())
    throw Error(Errc::LengthMismatch, "labels and weights differ in length");
  WeightedConfusion cm(class_count);
  for (std::size_t i = 0; i < gt.size(); ++i) cm.add(gt[i], pred[i], weights[i]);
  if (!(cm.total() > 0.0)) throw Error(Errc::AllZeroWeights, "all sample weights are zero");
  return cm;
}

namespace {

void require_mass(const WeightedConfusion& cm) {
  if (!(cm.total() > 0.0)) throw Error(Errc::EmptyMatrix, "confusion matrix has no mass");
}

}  // namespace

double accuracy(const WeightedConfusion& cm) {
  require_mass(cm);
  double trace = 0.0;
  for (std::size_t k = 0; k < cm.class_count(); ++k) trace += cm.at(k, k);
  return trace / cm.total();
}

double balanced_accuracy(const WeightedConfusion& cm) {
  require_mass(cm);
  double sum = 0.0;
  std::size_t classes = 0;
  for (std::size_t k = 0; k < cm.class_count(); ++k) {
    const double r = cm.row_sum(k);
    if (!(r > 0.0)) continue;
    sum += cm.at(k, k) / r;
    ++classes;
  }
  return sum / static_cast<double>(classes);
}

double mean_iou(const WeightedConfusion& cm) {
  require_mass(cm);
  double sum = 0.0;
  std::size_t classes = 0;
  for (std::size_t k = 0; k < cm.class_count(); ++k) {
    const double tp = cm.at(k, k);
    const double uni = cm.row_sum(k) + cm.column_sum(k) - tp;
    if (!(uni > 0.0)) continue;
    sum += tp / uni;
    ++classes;
  }
  return sum / static_cast<double>(classes);
}

double balanced_mean_iou(const WeightedConfusion& cm) {
  require_mass(cm);
  return mean_iou(cm.row_normalized());
}

Scores score_all(const WeightedConfusion& cm) {
  return {accuracy(cm), balanced_accuracy(cm), mean_iou(cm), balanced_mean_iou(cm)};
}

PriorConsistency posterior_prior_consistency(std::span<const ProbVec> posteriors, const ProbVec& reference_priors) {
  if (posteriors.empty()) throw Error(Errc::EmptyStream, "no posteriors given");
  const std::size_t K = reference_priors.size();
  PriorConsistency pc;
  pc.count = posteriors.size();
  pc.mean_posterior.assign(K, 0.0);
  for (const ProbVec& p : posteriors) {
    if (p.size() != K) throw Error(Errc::DimensionMismatch, "posterior has the wrong class count");
    for (std::size_t h = 0; h < K; ++h) pc.mean_posterior[h] += p[h];
  }
  pc.deltas.resize(K);
  for (std::size_t h = 0; h < K; ++h) {
    pc.mean_posterior[h] /= static_cast<double>(pc.count);
    pc.deltas[h] = pc.mean_posterior[h] - reference_priors[h];
    pc.max_abs_delta = std::max(pc.max_abs_delta, std::abs(pc.deltas[h]));
  }
  return pc;
}

bool within_multinomial_tolerance(const PriorConsistency& pc, const ProbVec& reference_priors, double sigmas) {
  for (std::size_t h = 0; h < pc.deltas.size(); ++h) {
    const double p = reference_priors[h];
    const double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(pc.count));
    if (!(std::abs(pc.deltas[h]) <= sigmas * sigma + 1e-12)) return false;
  }
  return true;
}

CalibrationCurve reliability_bins(std::span<const ProbVec> posteriors, std::span<const ClassIndex> gt,
                                  ClassIndex cls, std::size_t bin_count, std::span<const double> weights) {
  if (bin_count < 2) throw Error(Errc::InvalidParam, "at least two bins required");
  if (posteriors.empty()) throw Error(Errc::EmptyStream, "no posteriors given");
  if (gt.size() != posteriors.size() || (!weights.empty() && weights.size() != posteriors.size()))
    throw Error(Errc::LengthMismatch, "posteriors, labels and weights differ in length");

  CalibrationCurve curve{cls, bin_count, std::vector<CalibrationBin>(bin_count)};
  const double width = 1.0 / static_cast<double>(bin_count);
  for (std::size_t b = 0; b < bin_count; ++b) {
    curve.bins[b].lower = b * width;
    curve.bins[b].upper = b + 1 == bin_count ? 1.0 : (b + 1) * width;
    curve.bins[b].midpoint = (b + 0.5) * width;
  }

  // Accumulate weighted sums first, then turn them into means.
  std::vector<double> hits(bin_count, 0.0), pred_sum(bin_count, 0.0), var_sum(bin_count, 0.0);
  for (std::size_t i = 0; i < posteriors.size(); ++i) {
    if (cls >= posteriors[i].size()) throw Error(Errc::InvalidParam, "class index out of range");
    const double p = posteriors[i][cls];
    const double w = weights.empty() ? 1.0 : weights[i];
    std::size_t b = static_cast<std::size_t>(p * static_cast<double>(bin_count));
    if (b >= bin_count) b = bin_count - 1;
    CalibrationBin& bin = curve.bins[b];
    bin.weight += w;
    ++bin.count;
    pred_sum[b] += w * p;
    var_sum[b] += w * w * p * (1.0 - p);
    if (gt[i] == cls) hits[b] += w;
  }
  for (std::size_t b = 0; b < bin_count; ++b) {
    CalibrationBin& bin = curve.bins[b];
    if (!(bin.weight > 0.0)) continue;
    bin.mean_predicted = pred_sum[b] / bin.weight;
    bin.frequency = hits[b] / bin.weight;
    bin.variance = var_sum[b] / (bin.weight * bin.weight);
  }
  return curve;
}

ReliabilityCheck check_reliability(const CalibrationCurve& curve, double z) {
  ReliabilityCheck check;
  for (std::size_t b = 0; b < curve.bins.size(); ++b) {
    const CalibrationBin& bin = curve.bins[b];
    if (!(bin.weight > 0.0)) continue;
    const double deviation = std::abs(bin.mean_predicted - bin.frequency);
    const double se = std::sqrt(bin.variance);
    const double score = se > 0.0 ? deviation / se : (deviation > 1e-12 ? INFINITY : 0.0);
    if (score > check.worst_z) {
      check.worst_z = score;
      check.worst_bin = b;
    }
  }
  check.pass = check.worst_z <= z;
  return check;
}

double simultaneous_z(std::size_t tests, double confidence) {
  if (tests == 0 || !(confidence > 0.0 && confidence < 1.0))
    throw Error(Errc::InvalidParam, "need at least one test and a confidence in (0, 1)");
  const double alpha = (1.0 - confidence) / static_cast<double>(tests);
  // Two-sided tail mass is erfc(z / sqrt(2)); it is decreasing in z.
  double lo = 0.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (std::erfc(mid / std::sqrt(2.0)) > alpha ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

nlohmann::json EvaluationReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"method", r.method},
                         {"lambda", r.lambda},
                         {"accuracy", r.scores.accuracy},
                         {"balanced_accuracy", r.scores.balanced_accuracy},
                         {"mean_iou", r.scores.mean_iou},
                         {"balanced_mean_iou", r.scores.balanced_mean_iou}});
  }
  return {{"schema_version", kSchemaVersion}, {"config", config}, {"rows", rows_json}};
}

std::string EvaluationReport::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "method,lambda,accuracy,balanced_accuracy,mean_iou,balanced_mean_iou\n";
  for (const auto& r : rows) {
    os << r.method << ',';
    for (std::size_t k = 0; k < r.lambda.size(); ++k) os << (k ? ";" : "") << r.lambda[k];
    os << ',' << r.scores.accuracy << ',' << r.scores.balanced_accuracy << ',' << r.scores.mean_iou << ','
       << r.scores.balanced_mean_iou << '\n';
  }
  return os.str();
}

}  // namespace mixda
