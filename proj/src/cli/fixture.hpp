#pragma once

// On-disk oracle fixtures: per-domain frames of exact model outputs, exact
// discriminator outputs and groundtruth, plus the manifest wiring them up.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mixda/metrics_eval.hpp"
#include "mixda/synthetic_oracle.hpp"
#include "mixda/tensor_io.hpp"

namespace mixda::cli {

struct FixtureSpec {
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t frames_per_domain = 2;
  DType dtype = DType::Float64;
  std::uint64_t seed = 0;
};

/// Frame id of frame i sampled from domain d: "d<d>/<iii>".
std::string fixture_frame_id(std::size_t domain, std::size_t index);

/// Writes the fixture under `dir` and returns its manifest (also saved as
/// dir/manifest.json). Maps live at sources/s<k>/<frame>.mdat,
/// disc/<frame>.mdat and gt/<frame>.mdat.
Manifest write_oracle_fixture(const std::filesystem::path& dir, std::span<const DiscreteDomain> domains,
                              const ReferenceWeights& kappa, const std::optional<ProbVec>& lambda,
                              const FixtureSpec& spec);

/// In-memory MAP and MLE scores of the fixture frames, weighted like
/// evaluate_directories does: each domain d contributes lambda_d spread
/// evenly over its pixels. Rows are named "map" and "mle".
EvaluationReport fixture_scores(std::span<const DiscreteDomain> domains, const ReferenceWeights& kappa,
                                const MixtureWeights& lambda, const FixtureSpec& spec);

}  // namespace mixda::cli
