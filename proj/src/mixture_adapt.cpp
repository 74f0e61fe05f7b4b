#include "mixda/mixture_adapt.hpp"

#include <algorithm>
#include <limits>
#include <sstream>
#include <thread>

namespace mixda {

ReferenceWeights::ReferenceWeights(ProbVec kappa) : kappa_(std::move(kappa)) {
  for (std::size_t k = 0; k < kappa_.size(); ++k)
    if (!(kappa_[k] > 0.0))
      throw Error(Errc::InvariantViolation, "kappa[" + std::to_string(k) + "] must be strictly positive");
}

SourceBundle::SourceBundle(std::vector<ProbVec> train_priors, std::vector<ProbVec> true_priors)
    : train_(std::move(train_priors)), true_(std::move(true_priors)) {
  if (train_.empty()) throw Error(Errc::DimensionMismatch, "a source bundle needs at least one source");
  if (train_.size() != true_.size())
    throw Error(Errc::DimensionMismatch, "train and true priors given for different source counts");
  const std::size_t K = train_.front().size();
  for (std::size_t k = 0; k < train_.size(); ++k)
    if (train_[k].size() != K || true_[k].size() != K)
      throw Error(Errc::DimensionMismatch, "source " + std::to_string(k) + " has a different class count");
}

SourceBundle SourceBundle::with_uniform_training(std::vector<ProbVec> true_priors) {
  if (true_priors.empty()) throw Error(Errc::DimensionMismatch, "a source bundle needs at least one source");
  std::vector<ProbVec> train(true_priors.size(), ProbVec::uniform(true_priors.front().size()));
  return SourceBundle(std::move(train), std::move(true_priors));
}

ProbVec mixture_priors(const SourceBundle& bundle, const MixtureWeights& lambda) {
  if (lambda.size() != bundle.source_count())
    throw Error(Errc::DimensionMismatch, "lambda length differs from source count");
  std::vector<double> out(bundle.class_count(), 0.0);
  for (std::size_t k = 0; k < bundle.source_count(); ++k) {
    const ProbVec& p = bundle.true_priors(k);
    for (std::size_t h = 0; h < out.size(); ++h) out[h] += lambda[k] * p[h];
  }
  return ProbVec::assume_normalized(std::move(out));
}

std::vector<std::vector<double>> likelihood_mixture_weights(const SourceBundle& bundle,
                                                            const MixtureWeights& lambda) {
  const ProbVec target = mixture_priors(bundle, lambda);
  std::vector<std::vector<double>> w(bundle.source_count(), std::vector<double>(bundle.class_count(), 0.0));
  for (std::size_t h = 0; h < bundle.class_count(); ++h) {
    if (!(target[h] > 0.0)) continue;
    for (std::size_t k = 0; k < bundle.source_count(); ++k)
      w[k][h] = lambda[k] * bundle.true_priors(k)[h] / target[h];
  }
  return w;
}

ConditionalWeights conditional_weights_exact(const MixtureWeights& lambda,
                                             std::span<const double> evidence_densities) {
  if (evidence_densities.size() != lambda.size())
    throw Error(Errc::DimensionMismatch, "one evidence density per source expected");
  std::vector<double> joint(lambda.size());
  for (std::size_t k = 0; k < joint.size(); ++k) {
    if (!(evidence_densities[k] >= 0.0))
      throw Error(Errc::NegativeMass, "evidence density " + std::to_string(k) + " is negative");
    joint[k] = lambda[k] * evidence_densities[k];
  }
  try {
    return {normalize(joint)};
  } catch (const Error& e) {
    throw e.annotated("evidence has zero density in the target domain");
  }
}

ConditionalWeights conditional_weights_from_discriminator(const MixtureWeights& lambda,
                                                          const ReferenceWeights& kappa,
                                                          const ProbVec& disc) {
  if (lambda.size() != kappa.size() || disc.size() != lambda.size())
    throw Error(Errc::DimensionMismatch, "lambda, kappa and discriminator output differ in length");
  try {
    return {reweight(disc.values(), lambda.values().values(), kappa.values().values())};
  } catch (const Error& e) {
    throw e.annotated("discriminator puts all mass on sources outside the mixture");
  }
}

ProbVec fuse_posteriors(const ConditionalWeights& omega, std::span<const ProbVec> source_posteriors) {
  if (source_posteriors.size() != omega.size())
    throw Error(Errc::DimensionMismatch, "one posterior per source expected");
  const std::size_t K = source_posteriors.front().size();
  std::vector<double> out(K, 0.0);
  for (std::size_t k = 0; k < omega.size(); ++k) {
    if (source_posteriors[k].size() != K)
      throw Error(Errc::DimensionMismatch, "source posteriors differ in class count");
    if (omega[k] == 0.0) continue;
    for (std::size_t h = 0; h < K; ++h) out[h] += omega[k] * source_posteriors[k][h];
  }
  return ProbVec::assume_normalized(std::move(out));
}

std::vector<std::size_t> plausible_sources(const ConditionalWeights& omega, double threshold) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < omega.size(); ++k)
    if (omega[k] > threshold) out.push_back(k);
  if (out.empty()) throw Error(Errc::EmptySet, "no source weight exceeds the threshold");
  return out;
}

ProbVec adapt_pixel(std::span<const ProbVec> star_posteriors, const SourceBundle& bundle,
                    const ProbVec& disc, const MixtureWeights& lambda, const ReferenceWeights& kappa) {
  const std::size_t n = bundle.source_count();
  if (star_posteriors.size() != n || lambda.size() != n || kappa.size() != n || disc.size() != n)
    throw Error(Errc::DimensionMismatch, "source count differs between pipeline inputs");
  for (const ProbVec& p : star_posteriors)
    if (p.size() != bundle.class_count())
      throw Error(Errc::DimensionMismatch, "source posterior has the wrong class count");

  ConditionalWeights omega;
  try {
    omega = conditional_weights_from_discriminator(lambda, kappa, disc);
  } catch (const Error& e) {
    throw e.annotated("domain weights");
  }

  // Sources outside the plausible set contribute nothing; their shifted
  // posteriors are not needed and may not even exist.
  std::vector<ProbVec> shifted(n, ProbVec::one_hot(bundle.class_count(), 0));
  for (std::size_t k = 0; k < n; ++k) {
    if (omega[k] == 0.0) continue;
    try {
      shifted[k] = target_shift(star_posteriors[k], bundle.train_priors(k), bundle.true_priors(k));
    } catch (const Error& e) {
      throw e.annotated("class shift (source " + std::to_string(k) + ")");
    }
  }
  return fuse_posteriors(omega, shifted);
}

AdaptPlan::AdaptPlan(const SourceBundle& bundle, const MixtureWeights& lambda,
                     const ReferenceWeights& kappa, double plausibility_threshold)
    : sources_(bundle.source_count()),
      classes_(bundle.class_count()),
      threshold_(plausibility_threshold),
      domain_ratio_(sources_),
      class_ratio_(sources_ * classes_),
      forbidden_(sources_ * classes_, 0) {
  if (lambda.size() != sources_ || kappa.size() != sources_)
    throw Error(Errc::DimensionMismatch, "lambda/kappa length differs from source count");
  if (!(plausibility_threshold >= 0.0 && plausibility_threshold < 1.0))
    throw Error(Errc::InvalidParam, "plausibility threshold must lie in [0, 1)");
  for (std::size_t k = 0; k < sources_; ++k) {
    domain_ratio_[k] = lambda[k] / kappa[k];
    const ProbVec& train = bundle.train_priors(k);
    const ProbVec& truth = bundle.true_priors(k);
    for (std::size_t h = 0; h < classes_; ++h) {
      const std::size_t i = k * classes_ + h;
      if (train[h] > 0.0) {
        class_ratio_[i] = truth[h] / train[h];
      } else {
        class_ratio_[i] = 0.0;
        // 0/0 is admissible only for a zero posterior; a positive target prior
        // over a zero training prior is admissible for none.
        forbidden_[i] = 1;
        if (truth[h] > 0.0) forbidden_[i] = 2;
      }
    }
  }
}

AdaptPlan::Fault AdaptPlan::run(std::span<const double* const> star, const double* disc,
                                double* out) const noexcept {
  // Must stay operation-for-operation identical to adapt_pixel().
  double weights[64];
  std::vector<double> heap;
  double* a = weights;
  if (sources_ > 64) {
    heap.resize(sources_);
    a = heap.data();
  }
  double total = 0.0;
  for (std::size_t k = 0; k < sources_; ++k) {
    a[k] = domain_ratio_[k] * disc[k];
    total += a[k];
  }
  if (!(total > 0.0)) return {Stage::DomainWeights, 0};
  for (std::size_t k = 0; k < sources_; ++k) a[k] /= total;

  if (threshold_ > 0.0) {
    double kept = 0.0;
    for (std::size_t k = 0; k < sources_; ++k) {
      if (!(a[k] > threshold_)) a[k] = 0.0;
      kept += a[k];
    }
    if (!(kept > 0.0)) return {Stage::DomainWeights, 0};
    for (std::size_t k = 0; k < sources_; ++k) a[k] /= kept;
  }

  for (std::size_t h = 0; h < classes_; ++h) out[h] = 0.0;
  for (std::size_t k = 0; k < sources_; ++k) {
    if (a[k] == 0.0) continue;
    const double* ratio = class_ratio_.data() + k * classes_;
    const char* forbidden = forbidden_.data() + k * classes_;
    const double* p = star[k];
    double norm = 0.0;
    for (std::size_t h = 0; h < classes_; ++h) {
      if (forbidden[h] && (forbidden[h] == 2 || p[h] != 0.0)) return {Stage::ClassShiftZeroPrior, k};
      norm += ratio[h] * p[h];
    }
    if (!(norm > 0.0)) return {Stage::ClassShiftAllZero, k};
    for (std::size_t h = 0; h < classes_; ++h) out[h] += a[k] * (ratio[h] * p[h] / norm);
  }
  return {};
}

std::string AdaptPlan::describe(const Fault& fault) {
  switch (fault.stage) {
    case Stage::Ok: return "ok";
    case Stage::DomainWeights: return "domain weights: no mass on sources in the mixture";
    case Stage::ClassShiftZeroPrior:
      return "class shift (source " + std::to_string(fault.source) + "): zero training prior";
    case Stage::ClassShiftAllZero:
      return "class shift (source " + std::to_string(fault.source) + "): shifted posterior vanishes";
  }
  return "unknown";
}

PosteriorMap adapt_map(std::span<const PosteriorMap> star_maps, const SourceBundle& bundle,
                       const DiscriminatorMap& disc_map, const MixtureWeights& lambda,
                       const ReferenceWeights& kappa, const AdaptOptions& options) {
  const std::size_t n = bundle.source_count();
  const std::size_t K = bundle.class_count();
  if (star_maps.size() != n) throw Error(Errc::DimensionMismatch, "one posterior map per source expected");
  if (disc_map.channels() != n)
    throw Error(Errc::DimensionMismatch, "discriminator map channel count differs from source count");
  const std::size_t H = disc_map.height();
  const std::size_t W = disc_map.width();
  for (std::size_t k = 0; k < n; ++k) {
    if (!star_maps[k].same_shape(H, W))
      throw Error(Errc::DimensionMismatch, "posterior map " + std::to_string(k) + " has a different size");
    if (star_maps[k].channels() != K)
      throw Error(Errc::DimensionMismatch, "posterior map " + std::to_string(k) + " has the wrong class count");
  }
  if (options.threads == 0) throw Error(Errc::InvalidParam, "thread count must be at least 1");

  const AdaptPlan plan(bundle, lambda, kappa, options.plausibility_threshold);
  PosteriorMap out(H, W, K);
  const std::size_t pixels = H * W;

  struct ChunkResult {
    std::size_t pixel = std::numeric_limits<std::size_t>::max();
    AdaptPlan::Fault fault;
  };

  auto work = [&](std::size_t begin, std::size_t end, ChunkResult& result) {
    std::vector<const double*> star(n);
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t k = 0; k < n; ++k) star[k] = star_maps[k].data().data() + i * K;
      const auto fault = plan.run(star, disc_map.data().data() + i * n, out.data().data() + i * K);
      if (fault) {
        result = {i, fault};
        return;
      }
    }
  };

  const std::size_t threads = std::min(options.threads, std::max<std::size_t>(H, 1));
  std::vector<ChunkResult> results(threads);
  if (threads == 1) {
    work(0, pixels, results[0]);
  } else {
    // Contiguous row bands; each pixel's result is independent of the band.
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t row_begin = H * t / threads;
      const std::size_t row_end = H * (t + 1) / threads;
      pool.emplace_back(work, row_begin * W, row_end * W, std::ref(results[t]));
    }
  }

  for (const ChunkResult& r : results) {
    if (!r.fault) continue;
    std::ostringstream os;
    os << "pixel (" << r.pixel / W << ", " << r.pixel % W << "), " << AdaptPlan::describe(r.fault);
    const Errc code = r.fault.stage == AdaptPlan::Stage::ClassShiftZeroPrior ? Errc::ZeroPrior : Errc::AllZero;
    throw Error(code, os.str());
  }
  return out;
}

LabelMap decide_map_labels(const PosteriorMap& posteriors) {
  LabelMap labels{posteriors.height(), posteriors.width(), std::vector<ClassIndex>(posteriors.pixel_count())};
  for (std::size_t i = 0; i < posteriors.pixel_count(); ++i) labels.labels[i] = decide_map(posteriors.pixel(i));
  return labels;
}

LabelMap decide_mle_labels(const PosteriorMap& posteriors, const ProbVec& priors) {
  if (priors.size() != posteriors.channels())
    throw Error(Errc::DimensionMismatch, "priors differ from the map's class count");
  LabelMap labels{posteriors.height(), posteriors.width(), std::vector<ClassIndex>(posteriors.pixel_count())};
  for (std::size_t i = 0; i < posteriors.pixel_count(); ++i)
    labels.labels[i] = decide_mle(posteriors.pixel(i), priors.values());
  return labels;
}

}  // namespace mixda
