#pragma once

// Weighted confusion matrices, the four segmentation scores, and the two
// posterior validation checks (prior consistency and reliability bins).

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mixda/prob_core.hpp"

namespace mixda {

/// K x K weight sums; row = groundtruth class, column = predicted class.
class WeightedConfusion {
 public:
  explicit WeightedConfusion(std::size_t class_count);

  std::size_t class_count() const noexcept { return classes_; }
  double at(ClassIndex gt, ClassIndex pred) const { return counts_[gt * classes_ + pred]; }
  void add(ClassIndex gt, ClassIndex pred, double weight);
  /// Partial matrices combine by addition, so accumulation can be split.
  WeightedConfusion& operator+=(const WeightedConfusion& other);
  WeightedConfusion scaled(double factor) const;

  double total() const noexcept;
  double row_sum(ClassIndex gt) const;
  double column_sum(ClassIndex pred) const;

  /// Every groundtruth row with mass rescaled to sum to one.
  WeightedConfusion row_normalized() const;

  const std::vector<double>& counts() const noexcept { return counts_; }

 private:
  std::size_t classes_;
  std::vector<double> counts_;
};

WeightedConfusion weighted_confusion(std::span<const ClassIndex> gt, std::span<const ClassIndex> pred,
                                     std::span<const double> weights, std::size_t class_count);

// Class means skip classes absent from both groundtruth and predictions.
double accuracy(const WeightedConfusion& cm);
double balanced_accuracy(const WeightedConfusion& cm);
double mean_iou(const WeightedConfusion& cm);
/// mean_iou of the row-normalized matrix, where every groundtruth class
/// carries equal weight.
double balanced_mean_iou(const WeightedConfusion& cm);

struct Scores {
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  double mean_iou = 0.0;
  double balanced_mean_iou = 0.0;
};

Scores score_all(const WeightedConfusion& cm);

struct PriorConsistency {
  std::size_t count = 0;
  std::vector<double> mean_posterior;
  /// mean_posterior - reference prior, per class.
  std::vector<double> deltas;
  double max_abs_delta = 0.0;
};

PriorConsistency posterior_prior_consistency(std::span<const ProbVec> posteriors, const ProbVec& reference_priors);

/// |delta_h| <= sigmas * sqrt(p_h (1 - p_h) / n) for every class.
bool within_multinomial_tolerance(const PriorConsistency& pc, const ProbVec& reference_priors, double sigmas);

struct CalibrationBin {
  double lower = 0.0;
  double upper = 0.0;
  double midpoint = 0.0;
  /// Weighted mean of the predicted probabilities that fell in the bin.
  double mean_predicted = 0.0;
  /// Weighted fraction of samples whose groundtruth is the class.
  double frequency = 0.0;
  double weight = 0.0;
  std::size_t count = 0;
  /// Variance of `frequency` if the predictions were calibrated.
  double variance = 0.0;
};

struct CalibrationCurve {
  ClassIndex cls = 0;
  std::size_t bin_count = 0;
  std::vector<CalibrationBin> bins;
};

/// Equal-width bins over [0, 1], half-open except the last. `weights` may be
/// empty for unit weights.
CalibrationCurve reliability_bins(std::span<const ProbVec> posteriors, std::span<const ClassIndex> gt,
                                  ClassIndex cls, std::size_t bin_count, std::span<const double> weights = {});

inline constexpr double kZ99 = 2.5758293035489004;

struct ReliabilityCheck {
  bool pass = true;
  std::size_t worst_bin = 0;
  /// Largest |mean_predicted - frequency| / binomial standard error.
  double worst_z = 0.0;
};

/// Every occupied bin's frequency lies within z standard errors of its
/// mean predicted probability.
ReliabilityCheck check_reliability(const CalibrationCurve& curve, double z = kZ99);

/// Two-sided normal quantile that keeps family-wise coverage at `confidence`
/// over `tests` comparisons (Bonferroni). simultaneous_z(1) == kZ99.
double simultaneous_z(std::size_t tests, double confidence = 0.99);

struct ReportRow {
  std::string method;
  std::vector<double> lambda;
  Scores scores;
};

struct EvaluationReport {
  static constexpr int kSchemaVersion = 1;

  std::vector<ReportRow> rows;
  nlohmann::json config = nlohmann::json::object();

  nlohmann::json to_json() const;
  /// Columns: method, lambda, accuracy, balanced_accuracy, mean_iou,
  /// balanced_mean_iou. Lambda entries are joined with ';'.
  std::string to_csv() const;
};

}  // namespace mixda
