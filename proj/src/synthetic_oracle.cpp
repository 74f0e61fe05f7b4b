#include "mixda/synthetic_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mixda/rng.hpp"

namespace mixda {

namespace {

ProbVec normalize_or_impossible(std::span<const double> joint, const char* what) {
  try {
    return normalize(joint);
  } catch (const Error& e) {
    if (e.code() == Errc::AllZero) throw Error(Errc::ImpossibleEvidence, what);
    throw;
  }
}

void check_evidence(std::span<const DiscreteDomain> domains, std::size_t evidence) {
  if (domains.empty()) throw Error(Errc::InvalidParam, "no domains given");
  for (const auto& d : domains) {
    if (d.evidence_count() != domains.front().evidence_count() ||
        d.class_count() != domains.front().class_count())
      throw Error(Errc::DimensionMismatch, "domains differ in class or evidence alphabet");
  }
  if (evidence >= domains.front().evidence_count())
    throw Error(Errc::InvalidParam, "evidence symbol out of range");
}

}  // namespace

DiscreteDomain::DiscreteDomain(ProbVec priors, std::vector<ProbVec> likelihoods)
    : priors_(std::move(priors)), likelihoods_(std::move(likelihoods)) {
  if (priors_.empty()) throw Error(Errc::InvalidParam, "a domain needs at least one class");
  if (likelihoods_.size() != priors_.size())
    throw Error(Errc::DimensionMismatch, "one likelihood row per class expected");
  const std::size_t M = likelihoods_.front().size();
  if (M == 0) throw Error(Errc::InvalidParam, "a domain needs at least one evidence symbol");
  for (const auto& row : likelihoods_)
    if (row.size() != M) throw Error(Errc::DimensionMismatch, "likelihood rows differ in length");
}

double DiscreteDomain::evidence_density(std::size_t evidence) const {
  double p = 0.0;
  for (std::size_t h = 0; h < class_count(); ++h) p += joint(h, evidence);
  return p;
}

DiscreteDomain generate_domain(std::size_t class_count, std::size_t evidence_count,
                               double concentration, std::uint64_t seed) {
  if (class_count == 0 || evidence_count == 0)
    throw Error(Errc::InvalidParam, "class and evidence counts must be at least 1");
  if (!(concentration > 0.0) || !std::isfinite(concentration))
    throw Error(Errc::InvalidParam, "Dirichlet concentration must be positive");
  rng::Stream stream(rng::hash_key({seed, 0x646f6d61696eULL}));
  ProbVec priors = ProbVec::assume_normalized(stream.dirichlet(class_count, concentration));
  std::vector<ProbVec> rows;
  rows.reserve(class_count);
  for (std::size_t h = 0; h < class_count; ++h)
    rows.push_back(ProbVec::assume_normalized(stream.dirichlet(evidence_count, concentration)));
  return DiscreteDomain(std::move(priors), std::move(rows));
}

std::vector<DiscreteDomain> generate_domains(std::size_t domain_count, std::size_t class_count,
                                             std::size_t evidence_count, double concentration,
                                             std::uint64_t seed) {
  if (domain_count == 0) throw Error(Errc::InvalidParam, "at least one domain required");
  std::vector<DiscreteDomain> out;
  out.reserve(domain_count);
  for (std::size_t k = 0; k < domain_count; ++k)
    out.push_back(generate_domain(class_count, evidence_count, concentration, rng::hash_key({seed, k})));
  return out;
}

ProbVec exact_posterior(const DiscreteDomain& domain, std::size_t evidence) {
  if (evidence >= domain.evidence_count()) throw Error(Errc::InvalidParam, "evidence symbol out of range");
  std::vector<double> joint(domain.class_count());
  for (std::size_t h = 0; h < joint.size(); ++h) joint[h] = domain.joint(h, evidence);
  return normalize_or_impossible(joint, "evidence has zero density in the domain");
}

ProbVec exact_model_output(const DiscreteDomain& domain, const ProbVec& train_priors,
                           std::size_t evidence) {
  if (evidence >= domain.evidence_count()) throw Error(Errc::InvalidParam, "evidence symbol out of range");
  if (train_priors.size() != domain.class_count())
    throw Error(Errc::DimensionMismatch, "training priors have the wrong class count");
  std::vector<double> joint(domain.class_count());
  for (std::size_t h = 0; h < joint.size(); ++h) joint[h] = train_priors[h] * domain.likelihood(h)[evidence];
  return normalize_or_impossible(joint, "evidence has zero density under the training priors");
}

std::vector<ProbVec> exact_model_outputs(std::span<const DiscreteDomain> domains,
                                         const SourceBundle& bundle, std::size_t evidence) {
  check_evidence(domains, evidence);
  std::vector<ProbVec> out;
  out.reserve(domains.size());
  for (std::size_t k = 0; k < domains.size(); ++k) {
    if (domains[k].evidence_density(evidence) > 0.0)
      out.push_back(exact_model_output(domains[k], bundle.train_priors(k), evidence));
    else
      out.push_back(ProbVec::uniform(bundle.class_count()));
  }
  return out;
}

std::vector<double> evidence_densities(std::span<const DiscreteDomain> domains, std::size_t evidence) {
  check_evidence(domains, evidence);
  std::vector<double> out(domains.size());
  for (std::size_t k = 0; k < domains.size(); ++k) out[k] = domains[k].evidence_density(evidence);
  return out;
}

ProbVec exact_discriminator(std::span<const DiscreteDomain> domains, const ReferenceWeights& kappa,
                            std::size_t evidence) {
  check_evidence(domains, evidence);
  if (kappa.size() != domains.size()) throw Error(Errc::DimensionMismatch, "kappa length differs from domain count");
  std::vector<double> joint(domains.size());
  for (std::size_t k = 0; k < domains.size(); ++k) joint[k] = kappa[k] * domains[k].evidence_density(evidence);
  return normalize_or_impossible(joint, "evidence has zero density in every source");
}

ProbVec brute_force_target_posterior(std::span<const DiscreteDomain> domains,
                                     const MixtureWeights& lambda, std::size_t evidence) {
  check_evidence(domains, evidence);
  if (lambda.size() != domains.size()) throw Error(Errc::DimensionMismatch, "lambda length differs from domain count");
  std::vector<double> joint(domains.front().class_count(), 0.0);
  for (std::size_t k = 0; k < domains.size(); ++k)
    for (std::size_t h = 0; h < joint.size(); ++h) joint[h] += lambda[k] * domains[k].joint(h, evidence);
  return normalize_or_impossible(joint, "evidence has zero density in the target domain");
}

SourceBundle oracle_bundle(std::span<const DiscreteDomain> domains) {
  std::vector<ProbVec> priors;
  priors.reserve(domains.size());
  for (const auto& d : domains) priors.push_back(d.priors());
  return SourceBundle::with_uniform_training(std::move(priors));
}

std::vector<LabeledSample> sample_mixture_dataset(std::span<const DiscreteDomain> domains,
                                                  const MixtureWeights& lambda, std::size_t count,
                                                  std::uint64_t seed) {
  if (count == 0) throw Error(Errc::InvalidParam, "sample count must be at least 1");
  if (domains.empty() || lambda.size() != domains.size())
    throw Error(Errc::InvalidParam, "lambda length differs from domain count");
  rng::Stream stream(rng::hash_key({seed, 0x73616d706c65ULL}));
  std::vector<LabeledSample> out(count);
  for (auto& s : out) {
    s.domain = stream.categorical(lambda.values().values());
    const DiscreteDomain& d = domains[s.domain];
    s.cls = stream.categorical(d.priors().values());
    s.evidence = stream.categorical(d.likelihood(s.cls).values());
  }
  return out;
}

ProbVec perturb(const ProbVec& exact, double epsilon, std::uint64_t key) {
  if (!(epsilon >= 0.0 && epsilon <= 2.0)) throw Error(Errc::InvalidParam, "epsilon must lie in [0, 2]");
  if (epsilon == 0.0) return exact;
  rng::Stream stream(key);
  constexpr double kJitter = 2.0;
  const std::size_t K = exact.size();
  std::vector<double> logits(K, 0.0);
  double top = -INFINITY;
  for (std::size_t h = 0; h < K; ++h) {
    const double u = stream.uniform(-kJitter, kJitter);
    if (exact[h] > 0.0) {
      logits[h] = std::log(exact[h]) + u;
      top = std::max(top, logits[h]);
    }
  }
  std::vector<double> jittered(K, 0.0);
  double sum = 0.0;
  for (std::size_t h = 0; h < K; ++h) {
    if (exact[h] > 0.0) {
      jittered[h] = std::exp(logits[h] - top);
      sum += jittered[h];
    }
  }
  for (double& v : jittered) v /= sum;

  const double dist = l1_distance(jittered, exact.values());
  if (dist <= epsilon) return ProbVec::assume_normalized(std::move(jittered));
  // Pull back towards `exact`; the slight under-shoot absorbs rounding so
  // the distance never exceeds epsilon.
  const double t = epsilon / dist * (1.0 - 1e-12);
  std::vector<double> out(K);
  for (std::size_t h = 0; h < K; ++h) out[h] = std::max(0.0, exact[h] + t * (jittered[h] - exact[h]));
  return ProbVec::assume_normalized(std::move(out));
}

ProbProvider perturb_model(ProbProvider exact, double epsilon, std::uint64_t seed) {
  if (!(epsilon >= 0.0 && epsilon <= 2.0)) throw Error(Errc::InvalidParam, "epsilon must lie in [0, 2]");
  return [exact = std::move(exact), epsilon, seed](std::uint64_t query) {
    return perturb(exact(query), epsilon, rng::hash_key({seed, query}));
  };
}

BoundReport verify_error_bound(std::span<const DiscreteDomain> domains, const MixtureWeights& lambda,
                               const ReferenceWeights& kappa, const NoisySpec& spec, std::size_t trials) {
  if (trials == 0) throw Error(Errc::InvalidParam, "at least one trial required");
  for (double eps : {spec.epsilon_source, spec.epsilon_omega})
    if (!(eps >= 0.0 && eps <= 2.0)) throw Error(Errc::InvalidParam, "epsilon must lie in [0, 2]");
  if (kappa.size() != domains.size()) throw Error(Errc::DimensionMismatch, "kappa length differs from domain count");

  const std::size_t M = domains.front().evidence_count();
  std::vector<double> evidence_mass(M, 0.0);
  for (std::size_t e = 0; e < M; ++e)
    for (std::size_t k = 0; k < domains.size(); ++k) evidence_mass[e] += lambda[k] * domains[k].evidence_density(e);

  BoundReport report;
  report.epsilon_source = spec.epsilon_source;
  report.epsilon_omega = spec.epsilon_omega;
  report.trials = trials;
  report.bound = spec.epsilon_source + spec.epsilon_omega;
  double total = 0.0;

  for (std::size_t t = 0; t < trials; ++t) {
    const std::uint64_t key = rng::hash_key({spec.seed, t});
    const std::size_t e = rng::pick(evidence_mass, rng::to_unit(rng::hash_key({key, 0})));

    const ProbVec truth = brute_force_target_posterior(domains, lambda, e);
    const auto densities = evidence_densities(domains, e);
    const ConditionalWeights omega = conditional_weights_exact(lambda, densities);

    std::vector<ProbVec> noisy_posteriors;
    noisy_posteriors.reserve(domains.size());
    for (std::size_t k = 0; k < domains.size(); ++k) {
      const ProbVec exact = densities[k] > 0.0 ? exact_posterior(domains[k], e)
                                               : ProbVec::uniform(domains[k].class_count());
      noisy_posteriors.push_back(perturb(exact, spec.epsilon_source, rng::hash_key({key, 1, k})));
    }
    const ConditionalWeights noisy_omega{perturb(omega.omega, spec.epsilon_omega, rng::hash_key({key, 2}))};

    const ProbVec fused = fuse_posteriors(noisy_omega, noisy_posteriors);
    const double err = l1_distance(fused.values(), truth.values());
    report.max_error = std::max(report.max_error, err);
    total += err;
    if (!(err <= report.bound + kBoundSlack)) ++report.violations;
  }
  report.mean_error = total / static_cast<double>(trials);
  return report;
}

TightnessProbe probe_bound_tightness(double epsilon_source, double epsilon_omega, std::size_t grid) {
  if (grid == 0) throw Error(Errc::InvalidParam, "grid must have at least one step");
  TightnessProbe probe;
  probe.bound = epsilon_source + epsilon_omega;

  // Move a two-class distribution by L1 distance eps towards class 1
  // (dir = +1) or class 0 (dir = -1), staying on the simplex.
  auto shift = [](double p0, double eps, int dir) {
    const double moved = p0 - dir * eps / 2.0;
    return std::clamp(moved, 0.0, 1.0);
  };

  const double step = 1.0 / static_cast<double>(grid);
  for (std::size_t ia = 0; ia <= grid; ++ia) {
    for (std::size_t ib = 0; ib <= grid; ++ib) {
      for (std::size_t iw = 0; iw <= grid; ++iw) {
        const double a = ia * step, b = ib * step, w = iw * step;
        const double exact0 = w * a + (1.0 - w) * b;
        for (int da : {-1, 1}) {
          for (int db : {-1, 1}) {
            for (int dw : {-1, 1}) {
              const double a2 = shift(a, epsilon_source, da);
              const double b2 = shift(b, epsilon_source, db);
              const double w2 = shift(w, epsilon_omega, dw);
              const double noisy0 = w2 * a2 + (1.0 - w2) * b2;
              probe.max_error = std::max(probe.max_error, 2.0 * std::abs(noisy0 - exact0));
            }
          }
        }
      }
    }
  }
  probe.ratio = probe.bound > 0.0 ? probe.max_error / probe.bound : 1.0;
  return probe;
}

DomainFrame sample_domain_frame(const DiscreteDomain& domain, std::size_t domain_index,
                                std::size_t height, std::size_t width, std::uint64_t seed) {
  if (height == 0 || width == 0) throw Error(Errc::InvalidParam, "frame dimensions must be positive");
  rng::Stream stream(rng::hash_key({seed, 0x6672616d65ULL}));
  DomainFrame f{height, width, domain_index, std::vector<std::size_t>(height * width),
                std::vector<ClassIndex>(height * width)};
  for (std::size_t i = 0; i < height * width; ++i) {
    f.classes[i] = stream.categorical(domain.priors().values());
    f.evidence[i] = stream.categorical(domain.likelihood(f.classes[i]).values());
  }
  return f;
}

MosaicFrame mosaic_compose_at(std::span<const DomainFrame> frames, std::size_t split_y, std::size_t split_x) {
  if (frames.size() != 4) throw Error(Errc::DimensionMismatch, "a mosaic needs exactly 4 frames");
  const std::size_t H = frames[0].height;
  const std::size_t W = frames[0].width;
  for (const auto& f : frames)
    if (f.height != H || f.width != W || f.evidence.size() != H * W || f.classes.size() != H * W)
      throw Error(Errc::DimensionMismatch, "mosaic frames differ in size");
  if (split_y > H || split_x > W) throw Error(Errc::InvalidParam, "split point outside the frame");

  MosaicFrame m{H, W, split_y, split_x, std::vector<std::size_t>(H * W), std::vector<std::size_t>(H * W),
                std::vector<ClassIndex>(H * W)};
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      const std::size_t q = (y < split_y ? 0 : 2) + (x < split_x ? 0 : 1);
      const std::size_t i = y * W + x;
      m.evidence[i] = frames[q].evidence[i];
      m.class_labels[i] = frames[q].classes[i];
      m.domain_labels[i] = frames[q].domain;
    }
  }
  return m;
}

MosaicFrame mosaic_compose(std::span<const DomainFrame> frames, std::uint64_t seed) {
  if (frames.size() != 4) throw Error(Errc::DimensionMismatch, "a mosaic needs exactly 4 frames");
  rng::Stream stream(rng::hash_key({seed, 0x6d6f73616963ULL}));
  // Uniform over [n/4, 3n/4], the middle half of the axis.
  auto draw = [&](std::size_t n) {
    const std::size_t lo = (n + 3) / 4;
    const std::size_t hi = std::max(lo, 3 * n / 4);
    return lo + stream.below(hi - lo + 1);
  };
  const std::size_t split_y = draw(frames[0].height);
  const std::size_t split_x = draw(frames[0].width);
  return mosaic_compose_at(frames, split_y, split_x);
}

std::vector<DiscreteDomain> conflict_domains() {
  // Symbol index = 2 * style + appearance.
  auto make = [](double style0, bool inverted) {
    std::vector<ProbVec> rows;
    for (int cls = 0; cls < 2; ++cls) {
      const int preferred = inverted ? 1 - cls : cls;
      std::vector<double> row(4);
      for (int style = 0; style < 2; ++style) {
        const double ps = style == 0 ? style0 : 1.0 - style0;
        for (int app = 0; app < 2; ++app) row[2 * style + app] = ps * (app == preferred ? 0.9 : 0.1);
      }
      rows.push_back(ProbVec(row));
    }
    return DiscreteDomain(ProbVec{0.5, 0.5}, std::move(rows));
  };
  return {make(0.8, false), make(0.2, true)};
}

}  // namespace mixda
