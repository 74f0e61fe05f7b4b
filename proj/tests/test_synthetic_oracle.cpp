#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "mixda/rng.hpp"
#include "mixda/synthetic_oracle.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

using namespace mixda;
using testutil::code_of;

namespace {

std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

// Compares `values` against the golden file, or rewrites the file when
// MIXDA_RECORD_GOLDEN is set.
void check_golden(const std::string& name, const nlohmann::json& values) {
  const std::string path = std::string(MIXDA_GOLDEN_DIR) + "/" + name;
  if (std::getenv("MIXDA_RECORD_GOLDEN")) {
    std::ofstream(path) << values.dump(2) << '\n';
    return;
  }
  std::ifstream in(path);
  REQUIRE_MESSAGE(in.good(), "missing golden file " << path);
  CHECK(nlohmann::json::parse(in) == values);
}

DiscreteDomain domain(ProbVec priors, std::vector<ProbVec> rows) { return DiscreteDomain(priors, std::move(rows)); }

}  // namespace

TEST_CASE("domain generation") {
  SUBCASE("same seed, same domain") {
    CHECK(generate_domain(4, 9, 0.5, 17) == generate_domain(4, 9, 0.5, 17));
    CHECK(!(generate_domain(4, 9, 0.5, 17) == generate_domain(4, 9, 0.5, 18)));
  }
  SUBCASE("higher concentration pulls rows towards uniform") {
    auto deviation = [](double conc) {
      double worst = 0.0;
      for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const DiscreteDomain d = generate_domain(3, 8, conc, seed);
        for (std::size_t h = 0; h < 3; ++h) {
          worst = std::max(worst, std::abs(d.priors()[h] - 1.0 / 3));
          for (double v : d.likelihood(h)) worst = std::max(worst, std::abs(v - 1.0 / 8));
        }
      }
      return worst;
    };
    const double d1 = deviation(1.0), d10 = deviation(10.0), d100 = deviation(100.0);
    CHECK(d10 < d1);
    CHECK(d100 < d10);
  }
  SUBCASE("K = 2, M = 2 golden") {
    const DiscreteDomain d = generate_domain(2, 2, 1.0, 1234);
    nlohmann::json g = {{"priors", {hex(d.priors()[0]), hex(d.priors()[1])}},
                        {"likelihoods",
                         nlohmann::json::array({nlohmann::json::array({hex(d.likelihood(0)[0]), hex(d.likelihood(0)[1])}),
                                                nlohmann::json::array({hex(d.likelihood(1)[0]), hex(d.likelihood(1)[1])})})}};
    check_golden("domain_k2_m2_seed1234.json", g);
  }
  CHECK(code_of([] { generate_domain(0, 3, 1.0, 0); }) == Errc::InvalidParam);
  CHECK(code_of([] { generate_domain(2, 3, 0.0, 0); }) == Errc::InvalidParam);
}

TEST_CASE("exact posterior") {
  const DiscreteDomain onehot = domain(ProbVec{0.5, 0.5}, {ProbVec{1.0, 0.0}, ProbVec{0.0, 1.0}});
  CHECK(exact_posterior(onehot, 1) == ProbVec{0.0, 1.0});
  const DiscreteDomain flat = domain(ProbVec{0.5, 0.5}, {ProbVec{0.2, 0.8}, ProbVec{0.2, 0.8}});
  CHECK(exact_posterior(flat, 0) == ProbVec{0.5, 0.5});
  const DiscreteDomain worked = domain(ProbVec{0.25, 0.75}, {ProbVec{0.4, 0.6}, ProbVec{0.2, 0.8}});
  const ProbVec p = exact_posterior(worked, 0);
  CHECK(std::abs(p[0] - 0.4) <= 1e-15);
  CHECK(std::abs(p[1] - 0.6) <= 1e-15);
  const DiscreteDomain gap = domain(ProbVec{0.5, 0.5}, {ProbVec{1.0, 0.0, 0.0}, ProbVec{0.0, 1.0, 0.0}});
  CHECK(code_of([&] { exact_posterior(gap, 2); }) == Errc::ImpossibleEvidence);
}

TEST_CASE("exact discriminator") {
  const DiscreteDomain d = generate_domain(3, 5, 1.0, 3);
  const std::vector<DiscreteDomain> same{d, d, d};
  const ReferenceWeights kappa(ProbVec{0.2, 0.3, 0.5});
  for (std::size_t e = 0; e < 5; ++e)
    CHECK(l1_distance(exact_discriminator(same, kappa, e).values(), kappa.values().values()) <= 1e-15);

  // P_1(E = 0) = 0.3 and P_2(E = 0) = 0.1.
  const std::vector<DiscreteDomain> two{domain(ProbVec{1.0}, {ProbVec{0.3, 0.7}}),
                                        domain(ProbVec{1.0}, {ProbVec{0.1, 0.9}})};
  const ProbVec w = exact_discriminator(two, ReferenceWeights::uniform(2), 0);
  CHECK(std::abs(w[0] - 0.75) <= 1e-15);
  CHECK(std::abs(w[1] - 0.25) <= 1e-15);

  const std::vector<DiscreteDomain> support{domain(ProbVec{1.0}, {ProbVec{1.0, 0.0}}),
                                            domain(ProbVec{1.0}, {ProbVec{0.5, 0.5}})};
  CHECK(exact_discriminator(support, ReferenceWeights::uniform(2), 1) == ProbVec{0.0, 1.0});
  const std::vector<DiscreteDomain> none{domain(ProbVec{1.0}, {ProbVec{1.0, 0.0}}),
                                         domain(ProbVec{1.0}, {ProbVec{1.0, 0.0}})};
  CHECK(code_of([&] { exact_discriminator(none, ReferenceWeights::uniform(2), 1); }) == Errc::ImpossibleEvidence);
}

TEST_CASE("brute-force mixture posterior") {
  const auto domains = generate_domains(3, 4, 20, 1.0, 99);
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t e = 0; e < 20; ++e)
      if (domains[k].evidence_density(e) > 0.0)
        CHECK(l1_distance(brute_force_target_posterior(domains, MixtureWeights::one_hot(3, k), e).values(),
                          exact_posterior(domains[k], e).values()) <= 1e-15);

  const std::vector<DiscreteDomain> same(3, domains[0]);
  for (std::size_t e = 0; e < 20; ++e)
    CHECK(l1_distance(brute_force_target_posterior(same, MixtureWeights(ProbVec{0.1, 0.5, 0.4}), e).values(),
                      exact_posterior(domains[0], e).values()) <= 1e-15);

  const MixtureWeights lambda(ProbVec{0.2, 0.3, 0.5});
  const SourceBundle b = oracle_bundle(domains);
  const ReferenceWeights kappa = ReferenceWeights::uniform(3);
  for (std::size_t e = 0; e < 20; ++e) {
    const auto want = oracle::mixture_posterior(domains, lambda.values().vector(), e);
    CHECK(oracle::l1(want, brute_force_target_posterior(domains, lambda, e).values()) <= 1e-14);
    const ProbVec got =
        adapt_pixel(exact_model_outputs(domains, b, e), b, exact_discriminator(domains, kappa, e), lambda, kappa);
    CHECK(oracle::l1(want, got.values()) <= 1e-10);
  }
}

TEST_CASE("weights from densities and from the discriminator agree") {
  rng::Stream s(6);
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 1 + s.below(5);
    const auto domains = generate_domains(n, 2 + s.below(4), 2 + s.below(30), 1.0, s.bits());
    const MixtureWeights lambda(ProbVec(s.dirichlet(n, 1.0)));
    const ReferenceWeights kappa(ProbVec(s.dirichlet(n, 5.0)));
    const std::size_t e = s.below(domains[0].evidence_count());
    const auto dens = evidence_densities(domains, e);
    double mass = 0.0;
    for (std::size_t k = 0; k < n; ++k) mass += lambda[k] * dens[k];
    if (!(mass > 0.0)) continue;
    const ProbVec a = conditional_weights_exact(lambda, dens).omega;
    const ProbVec b = conditional_weights_from_discriminator(lambda, kappa, exact_discriminator(domains, kappa, e)).omega;
    CHECK(l1_distance(a.values(), b.values()) <= 1e-12);
  }
}

TEST_CASE("sampling the mixture") {
  const auto domains = generate_domains(3, 4, 10, 1.0, 31);
  SUBCASE("one-hot lambda draws from one domain") {
    for (const auto& s : sample_mixture_dataset(domains, MixtureWeights::one_hot(3, 2), 1000, 4)) CHECK(s.domain == 2);
  }
  SUBCASE("seeded") {
    CHECK(sample_mixture_dataset(domains, MixtureWeights::uniform(3), 500, 8) ==
          sample_mixture_dataset(domains, MixtureWeights::uniform(3), 500, 8));
  }
  SUBCASE("class frequencies follow the mixture priors") {
    const MixtureWeights lambda(ProbVec{0.5, 0.3, 0.2});
    const std::size_t n = 100000;
    const auto samples = sample_mixture_dataset(domains, lambda, n, 12);
    const ProbVec priors = mixture_priors(oracle_bundle(domains), lambda);
    std::vector<double> freq(4, 0.0);
    for (const auto& s : samples) freq[s.cls] += 1.0 / n;
    for (std::size_t h = 0; h < 4; ++h) CHECK(std::abs(freq[h] - priors[h]) <= 3 * std::sqrt(priors[h] * (1 - priors[h]) / n));
  }
  CHECK(code_of([&] { sample_mixture_dataset(domains, MixtureWeights::uniform(3), 0, 1); }) == Errc::InvalidParam);
}

TEST_CASE("noise injection") {
  rng::Stream s(44);
  SUBCASE("epsilon 0 is the identity") {
    for (int i = 0; i < 100; ++i) {
      const ProbVec p(s.dirichlet(4, 1.0));
      CHECK(perturb(p, 0.0, s.bits()) == p);
    }
  }
  SUBCASE("deviation never exceeds epsilon and zeros stay zero") {
    for (int i = 0; i < 10000; ++i) {
      std::vector<double> v = s.dirichlet(2 + s.below(6), 0.5);
      v[0] = 0.0;
      if (v[1] == 0.0) v[1] = 1.0;
      const ProbVec p = normalize(v);
      const double eps = s.uniform(0.0, 2.0);
      const ProbVec q = perturb(p, eps, s.bits());
      CHECK(l1_distance(p.values(), q.values()) <= eps);
      CHECK(q[0] == 0.0);
      double sum = 0.0;
      for (double x : q) sum += x;
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
  SUBCASE("perturbed providers are deterministic per query") {
    const ProbProvider exact = [](std::uint64_t q) { return ProbVec::uniform(2 + q % 3); };
    const ProbProvider noisy = perturb_model(exact, 0.3, 5);
    CHECK(noisy(7) == noisy(7));
    CHECK(l1_distance(noisy(7).values(), exact(7).values()) <= 0.3);
  }
  SUBCASE("epsilon 0.1 deviation statistics golden") {
    const ProbProvider exact = [](std::uint64_t q) {
      rng::Stream local(rng::hash_key({q, 77}));
      return ProbVec(local.dirichlet(4, 1.0));
    };
    const ProbProvider noisy = perturb_model(exact, 0.1, 2024);
    double sum = 0.0, sum2 = 0.0, worst = 0.0;
    const int n = 1000;
    for (int q = 0; q < n; ++q) {
      const double d = l1_distance(noisy(q).values(), exact(q).values());
      sum += d;
      sum2 += d * d;
      worst = std::max(worst, d);
    }
    check_golden("perturb_eps0.1_seed2024.json",
                 {{"queries", n}, {"mean", hex(sum / n)}, {"mean_square", hex(sum2 / n)}, {"max", hex(worst)}});
  }
  CHECK(code_of([] { perturb(ProbVec{1.0}, 2.5, 0); }) == Errc::InvalidParam);
}

TEST_CASE("error bound") {
  const auto domains = generate_domains(3, 4, 16, 1.0, 8);
  const MixtureWeights lambda(ProbVec{0.3, 0.3, 0.4});
  const ReferenceWeights kappa = ReferenceWeights::uniform(3);
  SUBCASE("exact inputs") {
    const BoundReport r = verify_error_bound(domains, lambda, kappa, {0.0, 0.0, 1}, 500);
    CHECK(r.max_error <= 1e-10);
    CHECK(r.holds());
  }
  SUBCASE("source noise only") {
    const BoundReport r = verify_error_bound(domains, lambda, kappa, {0.2, 0.0, 2}, 1000);
    CHECK(r.max_error <= 0.2 + 1e-9);
    CHECK(r.holds());
    CHECK(r.max_error > 0.05);
  }
  SUBCASE("both") {
    const BoundReport r = verify_error_bound(domains, lambda, kappa, {0.1, 0.5, 3}, 1000);
    CHECK(r.holds());
    CHECK(r.bound == 0.6);
  }
  SUBCASE("tightness probe") {
    // Small epsilons come within 5% of the bound.
    for (auto [es, ew] : {std::pair{0.05, 0.05}, std::pair{0.02, 0.08}, std::pair{0.1, 0.0}}) {
      const TightnessProbe p = probe_bound_tightness(es, ew, 20);
      CHECK(p.max_error <= p.bound + 1e-12);
      CHECK(p.ratio >= 0.95);
    }
    const TightnessProbe wide = probe_bound_tightness(0.5, 0.5, 20);
    CHECK(wide.max_error <= wide.bound + 1e-12);
  }
  CHECK(code_of([&] { verify_error_bound(domains, lambda, kappa, {0.0, 0.0, 1}, 0); }) == Errc::InvalidParam);
  CHECK(code_of([&] { verify_error_bound(domains, lambda, kappa, {3.0, 0.0, 1}, 1); }) == Errc::InvalidParam);
}

TEST_CASE("mosaics") {
  const auto domains = generate_domains(4, 3, 10, 1.0, 3);
  std::vector<DomainFrame> frames;
  for (std::size_t d = 0; d < 4; ++d) frames.push_back(sample_domain_frame(domains[d], d, 8, 12, 100 + d));

  SUBCASE("center split puts one source per quadrant") {
    const MosaicFrame m = mosaic_compose_at(frames, 4, 6);
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 12; ++x) {
        const std::size_t q = (y < 4 ? 0 : 2) + (x < 6 ? 0 : 1);
        CHECK(m.domain_labels[y * 12 + x] == q);
        CHECK(m.evidence[y * 12 + x] == frames[q].evidence[y * 12 + x]);
        CHECK(m.class_labels[y * 12 + x] == frames[q].classes[y * 12 + x]);
      }
  }
  SUBCASE("frames from one domain give a constant label map") {
    std::vector<DomainFrame> same(4, frames[2]);
    const MosaicFrame m = mosaic_compose(same, 9);
    for (std::size_t l : m.domain_labels) CHECK(l == 2);
  }
  SUBCASE("seeded, with the split in the middle half") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const MosaicFrame a = mosaic_compose(frames, seed);
      CHECK(a == mosaic_compose(frames, seed));
      CHECK(a.split_y >= 2);
      CHECK(a.split_y <= 6);
      CHECK(a.split_x >= 3);
      CHECK(a.split_x <= 9);
    }
  }
  CHECK(code_of([&] { mosaic_compose(std::span(frames).first(3), 0); }) == Errc::DimensionMismatch);
  std::vector<DomainFrame> uneven = frames;
  uneven[3] = sample_domain_frame(domains[3], 3, 8, 10, 1);
  CHECK(code_of([&] { mosaic_compose(uneven, 0); }) == Errc::DimensionMismatch);
}

TEST_CASE("conflict instance") {
  const auto domains = conflict_domains();
  const SourceBundle b = oracle_bundle(domains);
  for (std::size_t e = 0; e < 4; ++e) {
    const auto star = exact_model_outputs(domains, b, e);
    CHECK(decide_map(star[0]) != decide_map(star[1]));
    CHECK(decide_map(exact_posterior(domains[0], e)) != decide_map(exact_posterior(domains[1], e)));
  }
}
