#include "cli/simulation.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "mixda/baselines.hpp"
#include "mixda/rng.hpp"

namespace mixda::cli {

using nlohmann::json;

std::vector<ProbVec> equal_weight_mixtures(std::size_t sources) {
  if (sources == 0 || sources > 20) throw Error(Errc::InvalidParam, "source count must lie in [1, 20]");
  std::vector<ProbVec> out;
  for (std::size_t size = 1; size <= sources; ++size) {
    // Lexicographic combinations of `size` indices.
    std::vector<std::size_t> idx(size);
    for (std::size_t i = 0; i < size; ++i) idx[i] = i;
    for (;;) {
      std::vector<double> w(sources, 0.0);
      for (std::size_t i : idx) w[i] = 1.0 / static_cast<double>(size);
      out.push_back(ProbVec::assume_normalized(std::move(w)));
      std::size_t i = size;
      while (i > 0 && idx[i - 1] == sources - size + (i - 1)) --i;
      if (i == 0) break;
      ++idx[i - 1];
      for (std::size_t j = i; j < size; ++j) idx[j] = idx[j - 1] + 1;
    }
  }
  return out;
}

std::vector<ProbVec> lambda_sweep(std::size_t points) {
  if (points < 2) throw Error(Errc::InvalidParam, "a sweep needs at least two points");
  std::vector<ProbVec> out;
  for (std::size_t i = 0; i < points; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(points - 1);
    out.push_back(ProbVec::assume_normalized({1.0 - t, t}));
  }
  return out;
}

std::vector<std::string> method_names(std::size_t sources) {
  std::vector<std::string> names{"ours", "ours_mle"};
  for (std::size_t k = 0; k < sources; ++k) names.push_back(heuristic_name(SourceModelHeuristic{k}));
  names.push_back(heuristic_name(RandomSelectionHeuristic{}));
  names.push_back(heuristic_name(LinearCombinationHeuristic{}));
  return names;
}

namespace {

struct EvidenceDecisions {
  bool reachable = false;
  ClassIndex ours = 0;
  ClassIndex ours_mle = 0;
  std::vector<ClassIndex> source_model;
  std::vector<ClassIndex> source_map;  // MAP of each source's own shifted posterior
  ClassIndex linear = 0;
};

std::vector<EvidenceDecisions> decide_all(std::span<const DiscreteDomain> domains, const SourceBundle& bundle,
                                          const ReferenceWeights& kappa, const MixtureWeights& lambda) {
  const std::size_t n = domains.size();
  const std::size_t M = domains.front().evidence_count();
  const ProbVec target_priors = mixture_priors(bundle, lambda);
  std::vector<EvidenceDecisions> out(M);
  for (std::size_t e = 0; e < M; ++e) {
    const auto densities = evidence_densities(domains, e);
    double target_mass = 0.0;
    for (std::size_t k = 0; k < n; ++k) target_mass += lambda[k] * densities[k];
    if (!(target_mass > 0.0)) continue;

    EvidenceDecisions& d = out[e];
    d.reachable = true;
    const auto star = exact_model_outputs(domains, bundle, e);
    const ProbVec disc = exact_discriminator(domains, kappa, e);
    const ProbVec ours = adapt_pixel(star, bundle, disc, lambda, kappa);
    d.ours = decide_map(ours);
    d.ours_mle = decide_mle(ours, target_priors);

    std::vector<ProbVec> shifted;
    for (std::size_t k = 0; k < n; ++k) {
      d.source_model.push_back(decide_map(heuristic_source_model(k, star[k], bundle, target_priors)));
      shifted.push_back(target_shift(star[k], bundle.train_priors(k), bundle.true_priors(k)));
      d.source_map.push_back(decide_map(shifted.back()));
    }
    d.linear = decide_map(heuristic_linear_combination(lambda, shifted));
  }
  return out;
}

std::vector<MethodConfusion> empty_confusions(std::size_t sources, std::size_t classes) {
  std::vector<MethodConfusion> out;
  for (auto& name : method_names(sources)) out.emplace_back(std::move(name), WeightedConfusion(classes));
  return out;
}

void check_inputs(std::span<const DiscreteDomain> domains, const SourceBundle& bundle,
                  const ReferenceWeights& kappa, const MixtureWeights& lambda) {
  if (domains.empty()) throw Error(Errc::InvalidParam, "no domains given");
  if (bundle.source_count() != domains.size() || lambda.size() != domains.size() ||
      kappa.size() != domains.size())
    throw Error(Errc::DimensionMismatch, "domains, bundle, lambda and kappa disagree on the source count");
}

}  // namespace

std::vector<MethodConfusion> population_confusions(std::span<const DiscreteDomain> domains,
                                                   const SourceBundle& bundle, const ReferenceWeights& kappa,
                                                   const MixtureWeights& lambda) {
  check_inputs(domains, bundle, kappa, lambda);
  const std::size_t n = domains.size();
  const std::size_t K = domains.front().class_count();
  const auto decisions = decide_all(domains, bundle, kappa, lambda);
  auto out = empty_confusions(n, K);
  for (std::size_t e = 0; e < decisions.size(); ++e) {
    const EvidenceDecisions& d = decisions[e];
    if (!d.reachable) continue;
    for (std::size_t h = 0; h < K; ++h) {
      double w = 0.0;
      for (std::size_t k = 0; k < n; ++k) w += lambda[k] * domains[k].joint(h, e);
      if (!(w > 0.0)) continue;
      out[0].second.add(h, d.ours, w);
      out[1].second.add(h, d.ours_mle, w);
      for (std::size_t k = 0; k < n; ++k) out[2 + k].second.add(h, d.source_model[k], w);
      for (std::size_t k = 0; k < n; ++k)
        if (lambda[k] > 0.0) out[2 + n].second.add(h, d.source_map[k], w * lambda[k]);
      out[3 + n].second.add(h, d.linear, w);
    }
  }
  return out;
}

std::vector<MethodConfusion> sampled_confusions(std::span<const DiscreteDomain> domains,
                                                const SourceBundle& bundle, const ReferenceWeights& kappa,
                                                const MixtureWeights& lambda, std::size_t count,
                                                std::uint64_t seed) {
  check_inputs(domains, bundle, kappa, lambda);
  const std::size_t n = domains.size();
  const auto decisions = decide_all(domains, bundle, kappa, lambda);
  const auto samples = sample_mixture_dataset(domains, lambda, count, seed);
  auto out = empty_confusions(n, domains.front().class_count());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const LabeledSample& s = samples[i];
    const EvidenceDecisions& d = decisions[s.evidence];
    out[0].second.add(s.cls, d.ours, 1.0);
    out[1].second.add(s.cls, d.ours_mle, 1.0);
    for (std::size_t k = 0; k < n; ++k) out[2 + k].second.add(s.cls, d.source_model[k], 1.0);
    out[2 + n].second.add(s.cls, heuristic_random_selection(lambda, d.source_map, {seed, 0, i}), 1.0);
    out[3 + n].second.add(s.cls, d.linear, 1.0);
  }
  return out;
}

double disagreement_mass(std::span<const DiscreteDomain> domains, const SourceBundle& bundle,
                         const MixtureWeights& lambda) {
  const std::size_t n = domains.size();
  double mass = 0.0;
  for (std::size_t e = 0; e < domains.front().evidence_count(); ++e) {
    const auto densities = evidence_densities(domains, e);
    double target = 0.0;
    for (std::size_t k = 0; k < n; ++k) target += lambda[k] * densities[k];
    if (!(target > 0.0)) continue;
    const auto star = exact_model_outputs(domains, bundle, e);
    std::optional<ClassIndex> first;
    bool disagree = false;
    for (std::size_t k = 0; k < n; ++k) {
      if (!(lambda[k] > 0.0)) continue;
      const ClassIndex c = decide_map(target_shift(star[k], bundle.train_priors(k), bundle.true_priors(k)));
      if (first && *first != c) disagree = true;
      first = c;
    }
    if (disagree) mass += target;
  }
  return mass;
}

json SimulationConfig::to_json() const {
  json lam = json::array();
  for (const auto& l : lambdas) lam.push_back(l.vector());
  return {{"scenario", scenario == Scenario::Conflict ? "conflict" : "random"},
          {"domains", domains},
          {"classes", classes},
          {"evidence", evidence},
          {"concentration", concentration},
          {"seed", seed},
          {"lambdas", lam},
          {"kappa", kappa ? json(kappa->vector()) : json(nullptr)},
          {"epsilon_grid", epsilon_grid},
          {"trials", trials},
          {"samples", samples}};
}

json bound_to_json(const BoundReport& b) {
  return {{"epsilon_source", b.epsilon_source}, {"epsilon_omega", b.epsilon_omega}, {"trials", b.trials},
          {"max_error", b.max_error},           {"mean_error", b.mean_error},       {"bound", b.bound},
          {"violations", b.violations},         {"holds", b.holds()}};
}

json SimulationResult::to_json() const {
  json doc = report.to_json();
  json b = json::array();
  for (const auto& r : bounds) b.push_back(bound_to_json(r));
  doc["bounds"] = b;
  return doc;
}

std::string SimulationResult::bounds_csv() const {
  std::ostringstream os;
  os << std::setprecision(17) << "epsilon_source,epsilon_omega,trials,max_error,mean_error,bound,violations\n";
  for (const auto& b : bounds)
    os << b.epsilon_source << ',' << b.epsilon_omega << ',' << b.trials << ',' << b.max_error << ','
       << b.mean_error << ',' << b.bound << ',' << b.violations << '\n';
  return os.str();
}

std::vector<DiscreteDomain> make_domains(const SimulationConfig& config) {
  if (config.scenario == Scenario::Conflict) return conflict_domains();
  return generate_domains(config.domains, config.classes, config.evidence, config.concentration, config.seed);
}

SimulationResult run_simulation(const SimulationConfig& config) {
  const auto domains = make_domains(config);
  const std::size_t n = domains.size();
  const SourceBundle bundle = oracle_bundle(domains);
  const ReferenceWeights kappa = config.kappa ? ReferenceWeights(*config.kappa) : ReferenceWeights::uniform(n);
  if (kappa.size() != n) throw Error(Errc::InvalidParam, "kappa length differs from the domain count");

  SimulationConfig echo = config;
  if (echo.scenario == Scenario::Conflict) {
    echo.domains = n;
    echo.classes = domains.front().class_count();
    echo.evidence = domains.front().evidence_count();
  }
  if (echo.lambdas.empty()) echo.lambdas = equal_weight_mixtures(n);

  SimulationResult result;
  result.report.config = echo.to_json();
  for (const ProbVec& l : echo.lambdas) {
    if (l.size() != n) throw Error(Errc::InvalidParam, "lambda length differs from the domain count");
    const MixtureWeights lambda(l);
    const auto confusions = config.samples == 0
                                ? population_confusions(domains, bundle, kappa, lambda)
                                : sampled_confusions(domains, bundle, kappa, lambda, config.samples, config.seed);
    for (const auto& [name, cm] : confusions) result.report.rows.push_back({name, l.vector(), score_all(cm)});
  }

  if (config.trials > 0) {
    const MixtureWeights uniform = MixtureWeights::uniform(n);
    for (std::size_t i = 0; i < config.epsilon_grid.size(); ++i)
      for (std::size_t j = 0; j < config.epsilon_grid.size(); ++j) {
        const NoisySpec spec{config.epsilon_grid[i], config.epsilon_grid[j], rng::hash_key({config.seed, i, j})};
        result.bounds.push_back(verify_error_bound(domains, uniform, kappa, spec, config.trials));
      }
  }
  return result;
}

// ---- calibration -------------------------------------------------------------

bool CalibrationResult::reliable() const {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

std::string CalibrationResult::curves_csv() const {
  std::ostringstream os;
  os << std::setprecision(17)
     << "class,bin,lower,upper,midpoint,mean_predicted,frequency,weight,count,ci_low,ci_high\n";
  for (const auto& curve : curves)
    for (std::size_t b = 0; b < curve.bins.size(); ++b) {
      const auto& bin = curve.bins[b];
      const double half = z * std::sqrt(bin.variance);
      os << curve.cls << ',' << b << ',' << bin.lower << ',' << bin.upper << ',' << bin.midpoint << ','
         << bin.mean_predicted << ',' << bin.frequency << ',' << bin.weight << ',' << bin.count << ','
         << bin.mean_predicted - half << ',' << bin.mean_predicted + half << '\n';
    }
  return os.str();
}

std::string CalibrationResult::consistency_csv() const {
  std::ostringstream os;
  os << std::setprecision(17) << "class,reference_prior,mean_posterior,delta,sigma\n";
  for (std::size_t h = 0; h < reference_priors.size(); ++h) {
    const double p = reference_priors[h];
    os << h << ',' << p << ',' << consistency.mean_posterior[h] << ',' << consistency.deltas[h] << ','
       << std::sqrt(p * (1.0 - p) / static_cast<double>(consistency.count)) << '\n';
  }
  return os.str();
}

json CalibrationResult::summary() const {
  json per_class = json::array();
  for (std::size_t i = 0; i < curves.size(); ++i)
    per_class.push_back({{"class", curves[i].cls},
                         {"pass", checks[i].pass},
                         {"worst_bin", checks[i].worst_bin},
                         {"worst_z", checks[i].worst_z}});
  return {{"z", z},
          {"reliable", reliable()},
          {"priors_consistent", priors_consistent},
          {"prior_sigmas", kPriorSigmas},
          {"max_abs_prior_delta", consistency.max_abs_delta},
          {"samples", consistency.count},
          {"classes", per_class}};
}

CalibrationResult calibrate(std::span<const ProbVec> posteriors, std::span<const ClassIndex> labels,
                            const ProbVec& reference_priors, std::span<const ClassIndex> classes,
                            std::size_t bins) {
  CalibrationResult r;
  r.reference_priors = reference_priors;
  std::size_t occupied = 0;
  for (ClassIndex c : classes) {
    r.curves.push_back(reliability_bins(posteriors, labels, c, bins));
    for (const auto& bin : r.curves.back().bins) occupied += bin.weight > 0.0;
  }
  r.z = simultaneous_z(std::max<std::size_t>(occupied, 1));
  for (const auto& curve : r.curves) r.checks.push_back(check_reliability(curve, r.z));
  r.consistency = posterior_prior_consistency(posteriors, reference_priors);
  r.priors_consistent = within_multinomial_tolerance(r.consistency, reference_priors, kPriorSigmas);
  return r;
}

json CalibrationSpec::to_json() const {
  return {{"domains", domains},
          {"classes", classes},
          {"evidence", evidence},
          {"concentration", concentration},
          {"seed", seed},
          {"lambda", lambda ? json(lambda->vector()) : json(nullptr)},
          {"samples", samples},
          {"skip_shift", skip_shift}};
}

std::pair<std::vector<ProbVec>, std::vector<ClassIndex>> simulated_posteriors(const CalibrationSpec& spec,
                                                                             ProbVec& reference_priors) {
  const auto domains = generate_domains(spec.domains, spec.classes, spec.evidence, spec.concentration, spec.seed);
  const SourceBundle bundle = oracle_bundle(domains);
  const MixtureWeights lambda(spec.lambda ? *spec.lambda : ProbVec::uniform(spec.domains));
  if (lambda.size() != spec.domains) throw Error(Errc::InvalidParam, "lambda length differs from the domain count");
  const ReferenceWeights kappa = ReferenceWeights::uniform(spec.domains);
  reference_priors = mixture_priors(bundle, lambda);

  std::vector<std::optional<ProbVec>> cache(spec.evidence);
  auto posterior_for = [&](std::size_t e) -> const ProbVec& {
    if (!cache[e]) {
      const auto star = exact_model_outputs(domains, bundle, e);
      const ProbVec disc = exact_discriminator(domains, kappa, e);
      if (spec.skip_shift)
        cache[e] = fuse_posteriors(conditional_weights_from_discriminator(lambda, kappa, disc), star);
      else
        cache[e] = adapt_pixel(star, bundle, disc, lambda, kappa);
    }
    return *cache[e];
  };

  const auto samples = sample_mixture_dataset(domains, lambda, spec.samples, rng::hash_key({spec.seed, 1}));
  std::pair<std::vector<ProbVec>, std::vector<ClassIndex>> out;
  out.first.reserve(samples.size());
  out.second.reserve(samples.size());
  for (const auto& s : samples) {
    out.first.push_back(posterior_for(s.evidence));
    out.second.push_back(s.cls);
  }
  return out;
}

}  // namespace mixda::cli
