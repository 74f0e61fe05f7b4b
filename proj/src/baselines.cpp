#include "mixda/baselines.hpp"

#include "mixda/rng.hpp"

namespace mixda {

std::string heuristic_name(const HeuristicKind& kind) {
  struct Namer {
    std::string operator()(const SourceModelHeuristic& h) const {
      return "source_model_" + std::to_string(h.source);
    }
    std::string operator()(const RandomSelectionHeuristic&) const { return "random_selection"; }
    std::string operator()(const LinearCombinationHeuristic&) const { return "linear_combination"; }
  };
  return std::visit(Namer{}, kind);
}

ProbVec heuristic_source_model(std::size_t k, const ProbVec& star_posterior, const SourceBundle& bundle,
                               const ProbVec& target_priors) {
  if (k >= bundle.source_count()) throw Error(Errc::InvalidParam, "source index out of range");
  return target_shift(star_posterior, bundle.train_priors(k), target_priors);
}

std::size_t random_source(const MixtureWeights& lambda, const DrawKey& key) {
  const double u = rng::to_unit(rng::hash_key({key.seed, key.image, key.pixel}));
  return rng::pick(lambda.values().values(), u);
}

ClassIndex heuristic_random_selection(const MixtureWeights& lambda, std::span<const ClassIndex> decisions,
                                      const DrawKey& key) {
  if (decisions.size() != lambda.size())
    throw Error(Errc::DimensionMismatch, "one decision per source expected");
  return decisions[random_source(lambda, key)];
}

ProbVec heuristic_linear_combination(const MixtureWeights& lambda, std::span<const ProbVec> posteriors) {
  return fuse_posteriors(ConditionalWeights{lambda.values()}, posteriors);
}

}  // namespace mixda
