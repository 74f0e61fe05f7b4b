#pragma once

// The five subcommands as library calls. Each returns its report; writing
// files and choosing the output format is left to the caller except where
// the command's product is files (adapt).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cli/simulation.hpp"
#include "json.hpp"
#include "mixda/error.hpp"
#include "mixda/metrics_eval.hpp"
#include "mixda/tensor_io.hpp"

namespace mixda::cli {

enum class ReportFormat { Json, Csv };

/// Comma-separated reals as a distribution; renormalized within the usual
/// tolerance, otherwise an error naming `field`.
ProbVec parse_prob_list(std::string_view text, std::string_view field);

/// Comma-separated finite reals.
std::vector<double> parse_real_list(std::string_view text, std::string_view field);

/// 2 for validation errors, 3 for numerical failures at run time.
int exit_code(const Error& error);

// ---- adapt --------------------------------------------------------------------

struct AdaptConfig {
  std::filesystem::path manifest;
  std::filesystem::path out;
  /// Overrides the manifest's lambda.
  std::optional<ProbVec> lambda;
  std::optional<ProbVec> kappa;
  /// Rows "frame,l_0,...,l_{n-1}" replacing lambda for the named frames.
  std::optional<std::filesystem::path> lambda_csv;
  std::size_t threads = 1;
  double plausibility_threshold = 0.0;
  DType dtype = DType::Float32;

  nlohmann::json to_json() const;
};

std::map<std::string, ProbVec> read_lambda_csv(const std::filesystem::path& path, std::size_t sources);

/// Writes out/fused/<frame>.mdat (posteriors), out/map/<frame>.mdat and
/// out/mle/<frame>.mdat (labels) and out/adapt.json; returns the latter.
nlohmann::json cmd_adapt(const AdaptConfig& config);

// ---- evaluate -------------------------------------------------------------------

struct EvaluateConfig {
  /// One subdirectory per method, mirroring the groundtruth tree.
  std::filesystem::path predictions;
  /// Either d0/, d1/, ... per domain, or label maps directly.
  std::filesystem::path groundtruth;
  std::optional<ProbVec> lambda;
  std::optional<std::size_t> classes;

  nlohmann::json to_json() const;
};

/// Each domain d contributes weight lambda_d spread evenly over its pixels.
/// Rank-3 predictions are reduced to their per-pixel argmax.
EvaluationReport cmd_evaluate(const EvaluateConfig& config);

// ---- calibrate ------------------------------------------------------------------

struct CalibrateConfig {
  /// When set, posteriors come from adapting the manifest's frames;
  /// otherwise from `simulation`.
  std::optional<std::filesystem::path> manifest;
  std::optional<ProbVec> lambda;
  CalibrationSpec simulation;
  /// Empty means every class.
  std::optional<ClassIndex> cls;
  std::size_t bins = 10;
  std::size_t threads = 1;

  nlohmann::json to_json() const;
};

CalibrationResult cmd_calibrate(const CalibrateConfig& config);

// ---- bench --------------------------------------------------------------------

struct BenchConfig {
  std::size_t height = 720;
  std::size_t width = 1280;
  std::size_t classes = 4;
  std::size_t sources = 4;
  std::size_t frames = 10;
  std::size_t threads = 1;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

struct BenchReport {
  BenchConfig config;
  std::vector<double> latencies_ms;
  double mean_ms = 0.0;
  double p95_ms = 0.0;
  /// FNV-1a over the fused output; equal digests mean bit-identical maps.
  std::uint64_t output_digest = 0;

  nlohmann::json to_json() const;
};

/// Synthetic, seed-determined inputs shared by every timed frame.
struct BenchInputs {
  std::vector<PosteriorMap> star;
  DiscriminatorMap disc;
  SourceBundle bundle;
  MixtureWeights lambda;
  ReferenceWeights kappa;
};

BenchInputs make_bench_inputs(const BenchConfig& config);
std::uint64_t digest(const PosteriorMap& map);
BenchReport cmd_bench(const BenchConfig& config);

}  // namespace mixda::cli
