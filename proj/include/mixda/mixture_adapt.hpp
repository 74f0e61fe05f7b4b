#pragma once

// On-the-fly adaptation of source posteriors to a target domain that is a
// convex mixture of the source domains.
//
// Per evidence (pixel) the pipeline is:
//   1. shift each source model's output from the priors it was trained under
//      to the true priors of its source domain,
//   2. shift the domain discriminator's output from the reference weights
//      kappa it was trained under to the mixture weights lambda; the result
//      is the conditional weight vector omega,
//   3. fuse the shifted source posteriors with weights omega.
// With exact models the result is the exact target-domain posterior.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mixda/prob_core.hpp"
#include "mixda/prob_map.hpp"

namespace mixda {

/// Convex weights lambda defining the target domain over the sources.
class MixtureWeights {
 public:
  explicit MixtureWeights(ProbVec lambda) : lambda_(std::move(lambda)) {}
  static MixtureWeights one_hot(std::size_t sources, std::size_t k) {
    return MixtureWeights(ProbVec::one_hot(sources, k));
  }
  static MixtureWeights uniform(std::size_t sources) { return MixtureWeights(ProbVec::uniform(sources)); }

  const ProbVec& values() const noexcept { return lambda_; }
  std::size_t size() const noexcept { return lambda_.size(); }
  double operator[](std::size_t k) const { return lambda_[k]; }

 private:
  ProbVec lambda_;
};

/// Strictly positive source proportions kappa under which the domain
/// discriminator was trained.
class ReferenceWeights {
 public:
  /// Throws InvariantViolation naming "kappa[j]" if an entry is not positive.
  explicit ReferenceWeights(ProbVec kappa);
  static ReferenceWeights uniform(std::size_t sources) { return ReferenceWeights(ProbVec::uniform(sources)); }

  const ProbVec& values() const noexcept { return kappa_; }
  std::size_t size() const noexcept { return kappa_.size(); }
  double operator[](std::size_t k) const { return kappa_[k]; }

 private:
  ProbVec kappa_;
};

/// Per-source class priors: the ones each model was trained under and the
/// true priors of the source domain.
class SourceBundle {
 public:
  SourceBundle(std::vector<ProbVec> train_priors, std::vector<ProbVec> true_priors);

  /// Every source trained under uniform priors (weighted cross-entropy).
  static SourceBundle with_uniform_training(std::vector<ProbVec> true_priors);

  std::size_t source_count() const noexcept { return train_.size(); }
  std::size_t class_count() const noexcept { return train_.front().size(); }
  const ProbVec& train_priors(std::size_t k) const { return train_.at(k); }
  const ProbVec& true_priors(std::size_t k) const { return true_.at(k); }

 private:
  std::vector<ProbVec> train_;
  std::vector<ProbVec> true_;
};

/// Evidence-dependent source responsibilities omega_E.
struct ConditionalWeights {
  ProbVec omega;

  std::size_t size() const noexcept { return omega.size(); }
  double operator[](std::size_t k) const { return omega[k]; }
};

/// Target-domain class priors: sum_k lambda_k * true_priors_k.
ProbVec mixture_priors(const SourceBundle& bundle, const MixtureWeights& lambda);

/// Row k, column h holds lambda_k * P_k(h) / P_T(h): the weight of source k's
/// likelihood in the target likelihood of class h. Columns of classes absent
/// from the target domain are left at zero.
std::vector<std::vector<double>> likelihood_mixture_weights(const SourceBundle& bundle,
                                                            const MixtureWeights& lambda);

/// omega_k proportional to lambda_k * density_k.
ConditionalWeights conditional_weights_exact(const MixtureWeights& lambda,
                                             std::span<const double> evidence_densities);

/// omega_k proportional to (lambda_k / kappa_k) * disc_k, i.e. a prior shift
/// of the discriminator output from kappa to lambda.
ConditionalWeights conditional_weights_from_discriminator(const MixtureWeights& lambda,
                                                          const ReferenceWeights& kappa,
                                                          const ProbVec& disc);

/// Convex combination sum_k omega_k * posterior_k.
ProbVec fuse_posteriors(const ConditionalWeights& omega, std::span<const ProbVec> source_posteriors);

/// Sources whose weight exceeds `threshold`. Throws EmptySet if none does.
std::vector<std::size_t> plausible_sources(const ConditionalWeights& omega, double threshold);

/// Full per-evidence pipeline. `star_posteriors[k]` is source model k's raw
/// output (computed under its training priors), `disc` the discriminator
/// output under kappa. Sources with omega_k = 0 are not evaluated.
ProbVec adapt_pixel(std::span<const ProbVec> star_posteriors, const SourceBundle& bundle,
                    const ProbVec& disc, const MixtureWeights& lambda, const ReferenceWeights& kappa);

struct AdaptOptions {
  /// Sources with omega_k <= threshold are dropped and the remaining weights
  /// renormalized. Zero keeps every source with positive weight.
  double plausibility_threshold = 0.0;
  std::size_t threads = 1;
};

/// The pipeline compiled for one (bundle, lambda, kappa): the per-class and
/// per-domain shift ratios are precomputed. A plan is immutable and can be
/// shared between threads; lambda changes mean building a new plan.
class AdaptPlan {
 public:
  AdaptPlan(const SourceBundle& bundle, const MixtureWeights& lambda, const ReferenceWeights& kappa,
            double plausibility_threshold = 0.0);

  std::size_t source_count() const noexcept { return sources_; }
  std::size_t class_count() const noexcept { return classes_; }

  enum class Stage { Ok, DomainWeights, ClassShiftZeroPrior, ClassShiftAllZero };

  struct Fault {
    Stage stage = Stage::Ok;
    std::size_t source = 0;
    explicit operator bool() const noexcept { return stage != Stage::Ok; }
  };

  /// Adapts one pixel. `star[k]` points at source k's class_count() raw
  /// posteriors, `disc` at source_count() discriminator outputs, `out` at
  /// class_count() writable values.
  Fault run(std::span<const double* const> star, const double* disc, double* out) const noexcept;

  static std::string describe(const Fault& fault);

 private:
  std::size_t sources_;
  std::size_t classes_;
  double threshold_;
  std::vector<double> domain_ratio_;   // lambda_k / kappa_k
  std::vector<double> class_ratio_;    // [k * classes + h] = true_k[h] / train_k[h]
  std::vector<char> forbidden_;        // train_k[h] == 0: only a zero posterior is admissible
};

/// adapt_pixel at every pixel. All maps must share height and width; the
/// output does not depend on options.threads. Fails fast on the first
/// (lowest-index) faulty pixel, reporting its coordinates.
PosteriorMap adapt_map(std::span<const PosteriorMap> star_maps, const SourceBundle& bundle,
                       const DiscriminatorMap& disc_map, const MixtureWeights& lambda,
                       const ReferenceWeights& kappa, const AdaptOptions& options = {});

LabelMap decide_map_labels(const PosteriorMap& posteriors);
LabelMap decide_mle_labels(const PosteriorMap& posteriors, const ProbVec& priors);

}  // namespace mixda
