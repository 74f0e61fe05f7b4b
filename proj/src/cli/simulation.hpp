#pragma once

// In-memory experiments on synthetic discrete domains: method comparison
// under exact models, bound verification, and calibration runs.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mixda/metrics_eval.hpp"
#include "mixda/mixture_adapt.hpp"
#include "mixda/synthetic_oracle.hpp"

namespace mixda::cli {

/// Equal-weight mixtures over every nonempty subset of the sources, ordered
/// by subset size and then lexicographically. 15 for four sources.
std::vector<ProbVec> equal_weight_mixtures(std::size_t sources);

/// Two-source sweep (1 - t, t) with t on an evenly spaced grid over [0, 1].
std::vector<ProbVec> lambda_sweep(std::size_t points);

using MethodConfusion = std::pair<std::string, WeightedConfusion>;

/// Method names in report order: ours, ours_mle, source_model_k...,
/// random_selection, linear_combination.
std::vector<std::string> method_names(std::size_t sources);

/// Expected confusion matrices under the target mixture, computed exactly
/// by enumerating classes and evidence symbols. Random selection contributes
/// its expectation over the source draw.
std::vector<MethodConfusion> population_confusions(std::span<const DiscreteDomain> domains,
                                                   const SourceBundle& bundle, const ReferenceWeights& kappa,
                                                   const MixtureWeights& lambda);

/// Confusion matrices over `count` samples drawn from the target mixture.
std::vector<MethodConfusion> sampled_confusions(std::span<const DiscreteDomain> domains,
                                                const SourceBundle& bundle, const ReferenceWeights& kappa,
                                                const MixtureWeights& lambda, std::size_t count,
                                                std::uint64_t seed);

/// Target evidence mass on which the MAP decisions of the sources with
/// lambda_k > 0 are not all equal.
double disagreement_mass(std::span<const DiscreteDomain> domains, const SourceBundle& bundle,
                         const MixtureWeights& lambda);

enum class Scenario { Random, Conflict };

struct SimulationConfig {
  Scenario scenario = Scenario::Random;
  std::size_t domains = 4;
  std::size_t classes = 4;
  std::size_t evidence = 32;
  double concentration = 1.0;
  std::uint64_t seed = 0;
  /// Empty means equal_weight_mixtures(domains).
  std::vector<ProbVec> lambdas;
  std::optional<ProbVec> kappa;
  std::vector<double> epsilon_grid{0.0, 0.05, 0.1, 0.2, 0.5};
  /// Bound trials per grid cell; 0 skips bound verification.
  std::size_t trials = 1000;
  /// 0 scores the exact population; otherwise this many samples per mixture.
  std::size_t samples = 0;

  nlohmann::json to_json() const;
};

struct SimulationResult {
  EvaluationReport report;
  std::vector<BoundReport> bounds;

  nlohmann::json to_json() const;
  std::string bounds_csv() const;
};

std::vector<DiscreteDomain> make_domains(const SimulationConfig& config);

/// Bound verification uses the uniform mixture over all domains.
SimulationResult run_simulation(const SimulationConfig& config);

nlohmann::json bound_to_json(const BoundReport& bound);

// ---- calibration -------------------------------------------------------------

struct CalibrationResult {
  std::vector<CalibrationCurve> curves;
  std::vector<ReliabilityCheck> checks;
  ProbVec reference_priors;
  PriorConsistency consistency;
  bool priors_consistent = false;
  /// Per-bin threshold; Bonferroni over every occupied bin of every curve.
  double z = 0.0;

  bool reliable() const;
  std::string curves_csv() const;
  std::string consistency_csv() const;
  nlohmann::json summary() const;
};

inline constexpr double kPriorSigmas = 4.0;

/// Scores posteriors against labels: one reliability curve per requested
/// class and the class-average prior check against `reference_priors`.
CalibrationResult calibrate(std::span<const ProbVec> posteriors, std::span<const ClassIndex> labels,
                            const ProbVec& reference_priors, std::span<const ClassIndex> classes,
                            std::size_t bins);

struct CalibrationSpec {
  std::size_t domains = 2;
  std::size_t classes = 3;
  std::size_t evidence = 24;
  double concentration = 1.0;
  std::uint64_t seed = 0;
  std::optional<ProbVec> lambda;
  std::size_t samples = 100000;
  /// Negative control: fuse the raw model outputs without the class shift.
  bool skip_shift = false;

  nlohmann::json to_json() const;
};

/// Samples the target mixture and collects the fused posterior per sample.
std::pair<std::vector<ProbVec>, std::vector<ClassIndex>> simulated_posteriors(const CalibrationSpec& spec,
                                                                             ProbVec& reference_priors);

}  // namespace mixda::cli
