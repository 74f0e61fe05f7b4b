// Acceptance suite: one PASS/FAIL line per criterion. Tolerances, sizes and
// time limits are fixed here. Exits non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "cli/commands.hpp"
#include "cli/fixture.hpp"
#include "cli/simulation.hpp"
#include "manifest_cases.hpp"
#include "mixda/baselines.hpp"
#include "mixda/rng.hpp"
#include "mixda/tensor_io.hpp"
#include "temp_dir.hpp"

using namespace mixda;
using namespace mixda::cli;
namespace fs = std::filesystem;

namespace {

// Oracle exactness.
constexpr std::size_t kOracleInstances = 200;
constexpr double kOracleTol = 1e-10;
constexpr double kOracleSeconds = 30.0;
// Error bound.
const std::vector<double> kEpsGrid{0.0, 0.05, 0.1, 0.2, 0.5};
constexpr std::size_t kBoundTrials = 1000;
constexpr double kBoundSeconds = 120.0;
// Superiority.
constexpr double kOrderingSlack = 1e-12;
constexpr double kConflictMargin = 0.01;
constexpr double kConflictDisagreement = 0.3;
constexpr std::size_t kSweepPoints = 11;
// Decision identities.
constexpr std::size_t kMleChecks = 10000;
constexpr double kDecisionSlack = 1e-12;
// Calibration.
constexpr std::size_t kCalibrationSamples = 100000;
// Weight routes.
constexpr std::size_t kWeightQueries = 10000;
constexpr double kWeightTol = 1e-12;
// Throughput.
constexpr std::size_t kFrameHeight = 720, kFrameWidth = 1280, kClasses = 4, kSources = 4;
constexpr std::size_t kTimedFrames = 10;
constexpr double kFrameMs = 100.0;
// I/O.
constexpr std::size_t kRoundTrips = 100;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

Outcome oracle_exactness() {
  const auto t0 = std::chrono::steady_clock::now();
  rng::Stream s(101);
  double worst = 0.0;
  std::size_t symbols = 0;
  for (std::size_t i = 0; i < kOracleInstances; ++i) {
    const std::size_t n = 1 + s.below(5), K = 2 + s.below(5), M = 2 + s.below(99);
    const auto domains = generate_domains(n, K, M, 0.2 + s.uniform(0.0, 2.0), s.bits());
    const MixtureWeights lambda(ProbVec(s.dirichlet(n, 1.0)));
    const ReferenceWeights kappa(ProbVec(s.dirichlet(n, 4.0)));
    const SourceBundle bundle = oracle_bundle(domains);
    for (std::size_t e = 0; e < M; ++e) {
      double mass = 0.0;
      for (std::size_t k = 0; k < n; ++k) mass += lambda[k] * domains[k].evidence_density(e);
      if (!(mass > 0.0)) continue;
      const ProbVec got = adapt_pixel(exact_model_outputs(domains, bundle, e), bundle,
                                      exact_discriminator(domains, kappa, e), lambda, kappa);
      const ProbVec want = brute_force_target_posterior(domains, lambda, e);
      worst = std::max(worst, l1_distance(got.values(), want.values()));
      ++symbols;
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= kOracleTol && secs < kOracleSeconds,
          fmt("%zu instances, %zu symbols, max L1 %.3g (tol %.0e), %.2f s (limit %.0f s)", kOracleInstances, symbols,
              worst, kOracleTol, secs, kOracleSeconds)};
}

Outcome error_bound() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto domains = generate_domains(4, 4, 32, 1.0, 202);
  const MixtureWeights lambda = MixtureWeights::uniform(4);
  const ReferenceWeights kappa = ReferenceWeights::uniform(4);
  std::size_t violations = 0, trials = 0;
  double worst_ratio = 0.0;
  for (std::size_t i = 0; i < kEpsGrid.size(); ++i)
    for (std::size_t j = 0; j < kEpsGrid.size(); ++j) {
      const BoundReport r =
          verify_error_bound(domains, lambda, kappa, {kEpsGrid[i], kEpsGrid[j], rng::hash_key({202, i, j})}, kBoundTrials);
      violations += r.violations;
      trials += r.trials;
      if (r.bound > 0.0) worst_ratio = std::max(worst_ratio, r.max_error / r.bound);
    }
  const double secs = seconds_since(t0);
  return {violations == 0 && secs < kBoundSeconds,
          fmt("%zu cells x %zu trials, %zu violations of eps_S + eps_w + %.0e, max error/bound %.3f, %.2f s (limit %.0f s)",
              kEpsGrid.size() * kEpsGrid.size(), kBoundTrials, violations, kBoundSlack, worst_ratio, secs,
              kBoundSeconds)};
}

Outcome endpoint_degeneracy() {
  std::size_t compared = 0, mismatches = 0;
  for (std::uint64_t seed : {301, 302, 303}) {
    const auto domains = generate_domains(4, 4, 32, 1.0, seed);
    const SourceBundle b = oracle_bundle(domains);
    const ReferenceWeights kappa = ReferenceWeights::uniform(4);
    for (std::size_t k = 0; k < 4; ++k) {
      const MixtureWeights lambda = MixtureWeights::one_hot(4, k);
      const ProbVec target = mixture_priors(b, lambda);
      const auto samples = sample_mixture_dataset(domains, lambda, 2000, rng::hash_key({seed, k}));
      for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::size_t e = samples[i].evidence;
        const auto star = exact_model_outputs(domains, b, e);
        std::vector<ProbVec> shifted;
        std::vector<ClassIndex> decisions;
        for (std::size_t j = 0; j < 4; ++j) {
          shifted.push_back(target_shift(star[j], b.train_priors(j), b.true_priors(j)));
          decisions.push_back(decide_map(shifted.back()));
        }
        const ClassIndex ours = decide_map(adapt_pixel(star, b, exact_discriminator(domains, kappa, e), lambda, kappa));
        mismatches += decide_map(heuristic_source_model(k, star[k], b, target)) != ours;
        mismatches += heuristic_random_selection(lambda, decisions, {seed, k, i}) != ours;
        mismatches += decide_map(heuristic_linear_combination(lambda, shifted)) != ours;
        ++compared;
      }
    }
  }
  return {mismatches == 0, fmt("%zu samples over 12 one-hot mixtures, %zu decision mismatches", compared, mismatches)};
}

double accuracy_of(const std::vector<MethodConfusion>& cms, const std::string& method) {
  for (const auto& [name, cm] : cms)
    if (name == method) return accuracy(cm);
  throw Error(Errc::InvalidParam, "no method " + method);
}

Outcome superiority() {
  std::size_t mixtures = 0, losses = 0;
  double worst_gap = 1.0;
  auto check = [&](const std::vector<DiscreteDomain>& domains, const ProbVec& l) {
    const auto cms =
        population_confusions(domains, oracle_bundle(domains), ReferenceWeights::uniform(domains.size()), MixtureWeights(l));
    const double ours = accuracy_of(cms, "ours");
    for (const auto& [name, cm] : cms) {
      if (name == "ours" || name == "ours_mle") continue;
      worst_gap = std::min(worst_gap, ours - accuracy(cm));
      losses += ours + kOrderingSlack < accuracy(cm);
    }
    ++mixtures;
  };
  const auto four = generate_domains(4, 4, 32, 1.0, 401);
  for (const ProbVec& l : equal_weight_mixtures(4)) check(four, l);
  const auto two = generate_domains(2, 4, 32, 1.0, 402);
  for (const ProbVec& l : lambda_sweep(kSweepPoints)) check(two, l);

  const auto conflict = conflict_domains();
  const MixtureWeights half = MixtureWeights::uniform(2);
  const double disagreement = disagreement_mass(conflict, oracle_bundle(conflict), half);
  const auto cms = population_confusions(conflict, oracle_bundle(conflict), ReferenceWeights::uniform(2), half);
  double margin = 1.0;
  for (const auto& [name, cm] : cms)
    if (name != "ours" && name != "ours_mle") margin = std::min(margin, accuracy_of(cms, "ours") - accuracy(cm));

  return {losses == 0 && margin >= kConflictMargin && disagreement >= kConflictDisagreement,
          fmt("%zu mixtures, %zu losses (slack %.0e), min gap %.3g; conflict margin %.4f (need %.2f) at "
              "disagreement %.3f (need %.1f)",
              mixtures, losses, kOrderingSlack, worst_gap, margin, kConflictMargin, disagreement,
              kConflictDisagreement)};
}

Outcome decision_identities() {
  rng::Stream s(501);
  std::size_t mle_mismatch = 0;
  for (std::size_t i = 0; i < kMleChecks; ++i) {
    const std::size_t K = 2 + s.below(7);
    const ProbVec p(s.dirichlet(K, 0.5 + s.uniform()));
    const ProbVec priors(s.dirichlet(K, 0.5 + s.uniform()));
    mle_mismatch += decide_mle(p, priors) != decide_map(target_shift(p, priors, ProbVec::uniform(K)));
  }

  std::size_t runs = 0, violations = 0;
  auto check = [&](const std::vector<DiscreteDomain>& domains, const ProbVec& l) {
    const auto cms =
        population_confusions(domains, oracle_bundle(domains), ReferenceWeights::uniform(domains.size()), MixtureWeights(l));
    const WeightedConfusion* map = nullptr;
    const WeightedConfusion* mle = nullptr;
    for (const auto& [name, cm] : cms) {
      if (name == "ours") map = &cm;
      if (name == "ours_mle") mle = &cm;
    }
    violations += accuracy(*map) + kDecisionSlack < accuracy(*mle);
    violations += balanced_accuracy(*mle) + kDecisionSlack < balanced_accuracy(*map);
    ++runs;
  };
  for (std::uint64_t seed : {511, 512, 513}) {
    const auto four = generate_domains(4, 4, 32, 1.0, seed);
    for (const ProbVec& l : equal_weight_mixtures(4)) check(four, l);
    const auto two = generate_domains(2, 5, 40, 0.5, seed);
    for (const ProbVec& l : lambda_sweep(kSweepPoints)) check(two, l);
  }
  check(conflict_domains(), ProbVec::uniform(2));
  return {mle_mismatch == 0 && violations == 0,
          fmt("%zu MLE/shifted-MAP index mismatches in %zu; %zu ordering violations over %zu runs", mle_mismatch,
              kMleChecks, violations, runs)};
}

Outcome calibration() {
  CalibrateConfig config;
  config.simulation.samples = kCalibrationSamples;
  const CalibrationResult good = cmd_calibrate(config);
  config.simulation.skip_shift = true;
  const CalibrationResult control = cmd_calibrate(config);
  double worst = 0.0, control_worst = 0.0;
  for (const auto& c : good.checks) worst = std::max(worst, c.worst_z);
  for (const auto& c : control.checks) control_worst = std::max(control_worst, c.worst_z);
  return {good.priors_consistent && good.reliable() && !control.reliable(),
          fmt("%zu samples: priors within %.0f sigma %s (max delta %.2g), reliability %s (worst z %.2f, limit %.2f); "
              "control reliability %s (worst z %.1f)",
              kCalibrationSamples, kPriorSigmas, good.priors_consistent ? "yes" : "no", good.consistency.max_abs_delta,
              good.reliable() ? "pass" : "fail", worst, good.z, control.reliable() ? "pass" : "fail", control_worst)};
}

Outcome weight_routes() {
  rng::Stream s(701);
  double worst = 0.0;
  std::size_t queries = 0;
  while (queries < kWeightQueries) {
    const std::size_t n = 1 + s.below(6);
    const auto domains = generate_domains(n, 2 + s.below(5), 2 + s.below(60), 0.3 + s.uniform(0.0, 2.0), s.bits());
    const MixtureWeights lambda(ProbVec(s.dirichlet(n, 1.0)));
    const ReferenceWeights kappa(ProbVec(s.dirichlet(n, 3.0)));
    for (int q = 0; q < 10 && queries < kWeightQueries; ++q) {
      const std::size_t e = s.below(domains[0].evidence_count());
      const auto dens = evidence_densities(domains, e);
      double mass = 0.0;
      for (std::size_t k = 0; k < n; ++k) mass += lambda[k] * dens[k];
      if (!(mass > 0.0)) continue;
      const ProbVec a = conditional_weights_exact(lambda, dens).omega;
      const ProbVec b =
          conditional_weights_from_discriminator(lambda, kappa, exact_discriminator(domains, kappa, e)).omega;
      worst = std::max(worst, l1_distance(a.values(), b.values()));
      ++queries;
    }
  }
  return {worst <= kWeightTol, fmt("%zu queries, max L1 %.3g (tol %.0e)", queries, worst, kWeightTol)};
}

Outcome throughput() {
  BenchConfig config{kFrameHeight, kFrameWidth, kClasses, kSources, kTimedFrames, 1, 801};
  const BenchReport single = cmd_bench(config);
  std::vector<double> sorted = single.latencies_ms;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[sorted.size() / 2];

  // Bit identity, compared map to map as well as by digest.
  const BenchInputs in = make_bench_inputs(config);
  AdaptOptions one;
  const PosteriorMap reference = adapt_map(in.star, in.bundle, in.disc, in.lambda, in.kappa, one);
  bool identical = true;
  for (std::size_t threads : {2, 3, 4, 8}) {
    AdaptOptions many;
    many.threads = threads;
    identical &= adapt_map(in.star, in.bundle, in.disc, in.lambda, in.kappa, many) == reference;
  }
  config.threads = 4;
  identical &= cmd_bench(config).output_digest == single.output_digest;

  return {median < kFrameMs && identical,
          fmt("%zux%zu, %zu sources, %zu classes: median %.1f ms, mean %.1f ms, p95 %.1f ms (limit %.0f ms); "
              "2/3/4/8 threads %s",
              kFrameWidth, kFrameHeight, kSources, kClasses, median, single.mean_ms, single.p95_ms, kFrameMs,
              identical ? "bit-identical" : "DIFFER")};
}

std::vector<std::byte> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> out(raw.size());
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

Outcome io() {
  testutil::TempDir dir("acceptance_io");
  rng::Stream s(901);
  std::size_t byte_mismatches = 0;
  for (std::size_t t = 0; t < kRoundTrips; ++t) {
    const std::size_t rank = 1 + s.below(4);
    std::vector<std::uint32_t> dims;
    std::size_t count = 1;
    for (std::size_t r = 0; r < rank; ++r) {
      dims.push_back(static_cast<std::uint32_t>(1 + s.below(rank == 1 ? 5000 : 24)));
      count *= dims.back();
    }
    const DType dtype = s.below(2) ? DType::Float32 : DType::Float64;
    std::vector<std::byte> payload(count * dtype_size(dtype));
    for (auto& b : payload) b = static_cast<std::byte>(s.bits() & 0xFF);
    const TensorHeader header{kMdatVersion, dtype, dims};
    const auto bytes = encode_tensor(header, payload);
    const Tensor back = decode_tensor(bytes);
    byte_mismatches += !(back.header == header) || back.payload != payload || encode_tensor(back.header, back.payload) != bytes;
    const fs::path path = dir / ("t" + std::to_string(t) + ".mdat");
    write_tensor(path, header, payload);
    const Tensor read = read_tensor(path);
    byte_mismatches += file_bytes(path) != bytes || read.payload != payload;
  }

  std::size_t missed = 0, cases = 0;
  for (const auto& c : manifest_cases::negative_cases()) {
    nlohmann::json doc = manifest_cases::valid_doc();
    c.mutate(doc);
    ++cases;
    try {
      parse_manifest(doc, ".");
      ++missed;
    } catch (const Error& e) {
      missed += e.code() != c.code || std::string(e.what()).find(c.field) == std::string::npos;
    }
  }

  // Violations only visible in the tensors.
  const auto domains = generate_domains(2, 3, 8, 1.0, 902);
  FixtureSpec spec;
  spec.height = 4;
  spec.width = 4;
  spec.frames_per_domain = 1;
  const std::vector<std::function<void(const Manifest&)>> corruptions{
      [](const Manifest& m) { fs::remove(m.resolve(m.discriminator_map, m.frames[0])); },
      [](const Manifest& m) {
        save_posterior_map(m.resolve(m.sources[0].posterior_map, m.frames[1]), PosteriorMap::filled(4, 4, ProbVec::uniform(2)));
      },
      [](const Manifest& m) {
        save_discriminator_map(m.resolve(m.discriminator_map, m.frames[1]), DiscriminatorMap::filled(4, 3, ProbVec::uniform(2)));
      },
      [](const Manifest& m) {
        const Tensor t = make_tensor({4, 4, 3}, std::vector<double>(48, 0.5), DType::Float32);
        write_tensor(m.resolve(m.sources[1].posterior_map, m.frames[0]), t.header, t.payload);
      },
      [](const Manifest& m) {
        save_label_map(m.resolve(*m.groundtruth, m.frames[0]), LabelMap{4, 4, std::vector<ClassIndex>(16, 7)});
      },
      [](const Manifest& m) {
        std::ofstream(m.resolve(m.sources[0].posterior_map, m.frames[0]), std::ios::binary) << "MDAT";
      },
  };
  for (std::size_t i = 0; i < corruptions.size(); ++i) {
    const fs::path root = dir / ("fx" + std::to_string(i));
    const Manifest m = write_oracle_fixture(root, domains, ReferenceWeights::uniform(2), std::nullopt, spec);
    missed += !validate_manifest(m).empty();  // clean fixture must validate
    corruptions[i](m);
    missed += validate_manifest(m).empty();
    ++cases;
  }

  return {byte_mismatches == 0 && missed == 0,
          fmt("%zu round trips, %zu byte mismatches; %zu manifest violations, %zu missed", kRoundTrips, byte_mismatches,
              cases, missed)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"oracle exactness", oracle_exactness},
      {"error bound", error_bound},
      {"endpoint degeneracy", endpoint_degeneracy},
      {"superiority over heuristics", superiority},
      {"decision identities", decision_identities},
      {"calibration harness", calibration},
      {"weights from densities vs discriminator", weight_routes},
      {"throughput", throughput},
      {"MDAT and manifest I/O", io},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
