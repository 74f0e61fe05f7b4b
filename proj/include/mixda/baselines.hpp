#pragma once

// The three comparison heuristics: each source model on its own, random
// selection of a source's decision, and a lambda-weighted linear pool.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>

#include "mixda/mixture_adapt.hpp"
#include "mixda/prob_core.hpp"

namespace mixda {

struct SourceModelHeuristic {
  std::size_t source = 0;
};
struct RandomSelectionHeuristic {
  std::uint64_t seed = 0;
};
struct LinearCombinationHeuristic {};

using HeuristicKind = std::variant<SourceModelHeuristic, RandomSelectionHeuristic, LinearCombinationHeuristic>;

std::string heuristic_name(const HeuristicKind& kind);

/// Source model k used alone, shifted from its training priors to the
/// target-domain priors.
ProbVec heuristic_source_model(std::size_t k, const ProbVec& star_posterior, const SourceBundle& bundle,
                               const ProbVec& target_priors);

/// Identifies one random draw. Draws with equal keys are equal, whatever the
/// order in which pixels are evaluated.
struct DrawKey {
  std::uint64_t seed = 0;
  std::uint64_t image = 0;
  std::uint64_t pixel = 0;
};

/// decisions[k] with probability lambda_k.
ClassIndex heuristic_random_selection(const MixtureWeights& lambda, std::span<const ClassIndex> decisions,
                                      const DrawKey& key);

/// Index of the source picked for `key`, the draw behind heuristic_random_selection.
std::size_t random_source(const MixtureWeights& lambda, const DrawKey& key);

/// sum_k lambda_k * posterior_k. Note the weights are lambda, not omega_E.
ProbVec heuristic_linear_combination(const MixtureWeights& lambda, std::span<const ProbVec> posteriors);

}  // namespace mixda
