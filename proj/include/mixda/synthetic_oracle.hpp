#pragma once

// Finite discrete domains with exactly computable posteriors. They stand in
// for image datasets: an evidence symbol plays the role of a pixel's
// observation. Everything here is deterministic in its seed.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mixda/mixture_adapt.hpp"
#include "mixda/prob_core.hpp"

namespace mixda {

/// Class priors plus one likelihood row over the evidence alphabet per class.
class DiscreteDomain {
 public:
  DiscreteDomain(ProbVec priors, std::vector<ProbVec> likelihoods);

  std::size_t class_count() const noexcept { return priors_.size(); }
  std::size_t evidence_count() const noexcept { return likelihoods_.front().size(); }
  const ProbVec& priors() const noexcept { return priors_; }
  const ProbVec& likelihood(std::size_t cls) const { return likelihoods_.at(cls); }

  /// P(E = e, H = h).
  double joint(std::size_t cls, std::size_t evidence) const {
    return priors_[cls] * likelihoods_[cls][evidence];
  }
  /// P(E = e).
  double evidence_density(std::size_t evidence) const;

  friend bool operator==(const DiscreteDomain&, const DiscreteDomain&) = default;

 private:
  ProbVec priors_;
  std::vector<ProbVec> likelihoods_;
};

/// Priors and likelihood rows drawn from a symmetric Dirichlet.
DiscreteDomain generate_domain(std::size_t class_count, std::size_t evidence_count,
                               double concentration, std::uint64_t seed);

/// n independent domains sharing class and evidence alphabets.
std::vector<DiscreteDomain> generate_domains(std::size_t domain_count, std::size_t class_count,
                                             std::size_t evidence_count, double concentration,
                                             std::uint64_t seed);

/// Exact P_d(H | E = e). Throws ImpossibleEvidence if P_d(e) = 0.
ProbVec exact_posterior(const DiscreteDomain& domain, std::size_t evidence);

/// Output of a model that is exact up to a target shift: the posterior the
/// domain's likelihoods imply under `train_priors` instead of its own priors.
ProbVec exact_model_output(const DiscreteDomain& domain, const ProbVec& train_priors,
                           std::size_t evidence);

/// exact_model_output for every source; sources for which the evidence is
/// impossible get a uniform placeholder (the pipeline gives them weight 0).
std::vector<ProbVec> exact_model_outputs(std::span<const DiscreteDomain> domains,
                                         const SourceBundle& bundle, std::size_t evidence);

/// Per-source evidence densities P_k(e).
std::vector<double> evidence_densities(std::span<const DiscreteDomain> domains, std::size_t evidence);

/// What a perfectly trained discriminator outputs: kappa_k P_k(e), normalized.
ProbVec exact_discriminator(std::span<const DiscreteDomain> domains, const ReferenceWeights& kappa,
                            std::size_t evidence);

/// Bayes directly on the mixture measure: sum_k lambda_k P_k(h, e), normalized
/// over h. Independent of the fusion pipeline; this is the certifying oracle.
ProbVec brute_force_target_posterior(std::span<const DiscreteDomain> domains,
                                     const MixtureWeights& lambda, std::size_t evidence);

/// Bundle of the domains' true priors with models trained under uniform priors.
SourceBundle oracle_bundle(std::span<const DiscreteDomain> domains);

struct LabeledSample {
  std::size_t evidence = 0;
  ClassIndex cls = 0;
  std::size_t domain = 0;

  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

/// i.i.d. draws: domain ~ lambda, class ~ domain priors, evidence ~ likelihood.
std::vector<LabeledSample> sample_mixture_dataset(std::span<const DiscreteDomain> domains,
                                                  const MixtureWeights& lambda, std::size_t count,
                                                  std::uint64_t seed);

// ---- noise injection -------------------------------------------------------

/// Returns a distribution within L1 distance `epsilon` of `exact`: the logits
/// of the positive entries are jittered, then the result is pulled back along
/// the segment towards `exact` until it lies inside the L1 ball. Zero entries
/// stay zero. Deterministic in `key`.
ProbVec perturb(const ProbVec& exact, double epsilon, std::uint64_t key);

using ProbProvider = std::function<ProbVec(std::uint64_t query)>;

/// Wraps a provider so every answer is perturb()ed with key (seed, query).
ProbProvider perturb_model(ProbProvider exact, double epsilon, std::uint64_t seed);

struct NoisySpec {
  double epsilon_source = 0.0;
  double epsilon_omega = 0.0;
  std::uint64_t seed = 0;
};

struct BoundReport {
  double epsilon_source = 0.0;
  double epsilon_omega = 0.0;
  std::size_t trials = 0;
  double max_error = 0.0;
  double mean_error = 0.0;
  /// epsilon_source + epsilon_omega.
  double bound = 0.0;
  std::size_t violations = 0;

  /// Every trial stayed within bound + 1e-9.
  bool holds() const noexcept { return violations == 0; }
};

inline constexpr double kBoundSlack = 1e-9;

/// Injects epsilon_source noise on each exact source posterior and
/// epsilon_omega noise on the exact conditional weights, fuses, and measures
/// the L1 error against brute_force_target_posterior. Evidence for each trial
/// is drawn from the target mixture.
BoundReport verify_error_bound(std::span<const DiscreteDomain> domains, const MixtureWeights& lambda,
                               const ReferenceWeights& kappa, const NoisySpec& spec, std::size_t trials);

struct TightnessProbe {
  double max_error = 0.0;
  double bound = 0.0;
  /// max_error / bound (1 when the bound is attained).
  double ratio = 0.0;
};

/// Grid search over two-class, two-source fusion inputs and adversarial
/// perturbation directions for the largest fused error. Diagnostic only.
TightnessProbe probe_bound_tightness(double epsilon_source, double epsilon_omega, std::size_t grid = 20);

// ---- frames and mosaics -------------------------------------------------------

/// A single-domain frame of evidence symbols with groundtruth classes.
struct DomainFrame {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t domain = 0;
  std::vector<std::size_t> evidence;
  std::vector<ClassIndex> classes;
};

DomainFrame sample_domain_frame(const DiscreteDomain& domain, std::size_t domain_index,
                                std::size_t height, std::size_t width, std::uint64_t seed);

struct MosaicFrame {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t split_y = 0;
  std::size_t split_x = 0;
  std::vector<std::size_t> evidence;
  std::vector<std::size_t> domain_labels;
  std::vector<ClassIndex> class_labels;

  friend bool operator==(const MosaicFrame&, const MosaicFrame&) = default;
};

/// Four equally sized frames arranged around a split point: frame 0 top-left,
/// 1 top-right, 2 bottom-left, 3 bottom-right. The split is drawn uniformly
/// over the middle half of each axis.
MosaicFrame mosaic_compose(std::span<const DomainFrame> frames, std::uint64_t seed);
MosaicFrame mosaic_compose_at(std::span<const DomainFrame> frames, std::size_t split_y, std::size_t split_x);

/// Two sources, two classes, four symbols (appearance x style). Each domain
/// prefers one style, and the appearance-to-class mapping is inverted between
/// the domains, so the source models' MAP decisions disagree on every symbol.
std::vector<DiscreteDomain> conflict_domains();

}  // namespace mixda
