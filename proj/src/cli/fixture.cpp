#include "cli/fixture.hpp"

#include <cstdio>

#include "mixda/rng.hpp"

namespace mixda::cli {

namespace fs = std::filesystem;

std::string fixture_frame_id(std::size_t domain, std::size_t index) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "d%zu/%03zu", domain, index);
  return buf;
}

namespace {

DomainFrame fixture_frame(std::span<const DiscreteDomain> domains, std::size_t d, std::size_t i,
                          const FixtureSpec& spec) {
  return sample_domain_frame(domains[d], d, spec.height, spec.width, rng::hash_key({spec.seed, d, i}));
}

void check_spec(std::span<const DiscreteDomain> domains, const ReferenceWeights& kappa, const FixtureSpec& spec) {
  if (domains.empty()) throw Error(Errc::InvalidParam, "no domains given");
  if (kappa.size() != domains.size()) throw Error(Errc::DimensionMismatch, "kappa length differs from the domain count");
  if (spec.height == 0 || spec.width == 0 || spec.frames_per_domain == 0)
    throw Error(Errc::InvalidParam, "fixture frames must be nonempty");
}

}  // namespace

Manifest write_oracle_fixture(const fs::path& dir, std::span<const DiscreteDomain> domains,
                              const ReferenceWeights& kappa, const std::optional<ProbVec>& lambda,
                              const FixtureSpec& spec) {
  check_spec(domains, kappa, spec);
  const std::size_t n = domains.size();
  const std::size_t K = domains.front().class_count();
  const std::size_t M = domains.front().evidence_count();
  const SourceBundle bundle = oracle_bundle(domains);

  // Per-symbol model and discriminator outputs, shared by every frame.
  std::vector<std::vector<ProbVec>> star(M);
  std::vector<std::optional<ProbVec>> disc(M);
  for (std::size_t e = 0; e < M; ++e) {
    star[e] = exact_model_outputs(domains, bundle, e);
    const auto dens = evidence_densities(domains, e);
    bool possible = false;
    for (double p : dens) possible |= p > 0.0;
    if (possible) disc[e] = exact_discriminator(domains, kappa, e);
  }

  Manifest m;
  m.base_dir = dir;
  m.class_count = K;
  m.source_count = n;
  for (std::size_t k = 0; k < n; ++k)
    m.sources.push_back({"s" + std::to_string(k), bundle.train_priors(k), bundle.true_priors(k),
                         "sources/s" + std::to_string(k) + "/{frame}.mdat"});
  m.discriminator_map = "disc/{frame}.mdat";
  m.kappa = kappa.values();
  m.lambda = lambda;
  m.groundtruth = "gt/{frame}.mdat";

  for (std::size_t d = 0; d < n; ++d) {
    for (std::size_t i = 0; i < spec.frames_per_domain; ++i) {
      const std::string id = fixture_frame_id(d, i);
      m.frames.push_back(id);
      const DomainFrame f = fixture_frame(domains, d, i, spec);
      for (std::size_t k = 0; k < n; ++k) {
        PosteriorMap map(f.height, f.width, K);
        for (std::size_t p = 0; p < f.evidence.size(); ++p) {
          const ProbVec& v = star[f.evidence[p]][k];
          std::copy(v.begin(), v.end(), map.pixel(p).begin());
        }
        save_posterior_map(m.resolve(m.sources[k].posterior_map, id), map, spec.dtype);
      }
      DiscriminatorMap dmap(f.height, f.width, n);
      for (std::size_t p = 0; p < f.evidence.size(); ++p) {
        // A sampled symbol has positive density in its own domain.
        const ProbVec& v = *disc[f.evidence[p]];
        std::copy(v.begin(), v.end(), dmap.pixel(p).begin());
      }
      save_discriminator_map(m.resolve(m.discriminator_map, id), dmap, spec.dtype);
      save_label_map(m.resolve(*m.groundtruth, id), {f.height, f.width, f.classes});
    }
  }
  write_manifest(dir / "manifest.json", m);
  return m;
}

EvaluationReport fixture_scores(std::span<const DiscreteDomain> domains, const ReferenceWeights& kappa,
                                const MixtureWeights& lambda, const FixtureSpec& spec) {
  check_spec(domains, kappa, spec);
  const std::size_t n = domains.size();
  const std::size_t K = domains.front().class_count();
  const SourceBundle bundle = oracle_bundle(domains);
  const ProbVec target_priors = mixture_priors(bundle, lambda);

  WeightedConfusion map_cm(K), mle_cm(K);
  for (std::size_t d = 0; d < n; ++d) {
    if (!(lambda[d] > 0.0)) continue;
    WeightedConfusion map_d(K), mle_d(K);
    for (std::size_t i = 0; i < spec.frames_per_domain; ++i) {
      const DomainFrame f = fixture_frame(domains, d, i, spec);
      for (std::size_t p = 0; p < f.evidence.size(); ++p) {
        const std::size_t e = f.evidence[p];
        const ProbVec fused = adapt_pixel(exact_model_outputs(domains, bundle, e), bundle,
                                          exact_discriminator(domains, kappa, e), lambda, kappa);
        map_d.add(f.classes[p], decide_map(fused), 1.0);
        mle_d.add(f.classes[p], decide_mle(fused, target_priors), 1.0);
      }
    }
    const double pixels = static_cast<double>(spec.frames_per_domain * spec.height * spec.width);
    map_cm += map_d.scaled(lambda[d] / pixels);
    mle_cm += mle_d.scaled(lambda[d] / pixels);
  }
  EvaluationReport report;
  report.rows.push_back({"map", lambda.values().vector(), score_all(map_cm)});
  report.rows.push_back({"mle", lambda.values().vector(), score_all(mle_cm)});
  return report;
}

}  // namespace mixda::cli
