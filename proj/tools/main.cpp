// mixda: adapt posterior maps to mixture target domains, and the synthetic
// experiments around it.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cli/commands.hpp"
#include "cli/fixture.hpp"
#include "cli/simulation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mixda;
using namespace mixda::cli;

namespace {

// Writes <out>/<stem>.<ext>, or stdout when no directory is given. CSV
// output starts with a "# config:" comment line echoing the run's settings.
void emit(const std::optional<fs::path>& out, const std::string& stem, ReportFormat format, const json& config,
          const json& doc, const std::string& csv) {
  const std::string body =
      format == ReportFormat::Json ? doc.dump(2) + "\n" : "# config: " + config.dump() + "\n" + csv;
  if (!out) {
    std::cout << body;
    return;
  }
  fs::create_directories(*out);
  const fs::path path = *out / (stem + (format == ReportFormat::Json ? ".json" : ".csv"));
  std::ofstream file(path);
  if (!file) throw Error(Errc::IoError, "cannot open " + path.string() + " for writing");
  file << body;
}

std::optional<ProbVec> optional_prob(const std::string& text, const char* field) {
  if (text.empty()) return std::nullopt;
  return parse_prob_list(text, field);
}

const std::map<std::string, ReportFormat> kFormats{{"json", ReportFormat::Json}, {"csv", ReportFormat::Csv}};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adapt per-pixel posteriors to a target domain mixing several source domains"};
  app.require_subcommand(1);

  // adapt
  AdaptConfig adapt;
  std::string adapt_lambda, adapt_kappa, adapt_lambda_csv, adapt_dtype = "f32";
  auto* adapt_cmd = app.add_subcommand("adapt", "fuse the source posterior maps listed in a manifest");
  adapt_cmd->add_option("--manifest", adapt.manifest, "manifest JSON")->required()->check(CLI::ExistingFile);
  adapt_cmd->add_option("--out", adapt.out, "output directory")->required();
  adapt_cmd->add_option("--lambda", adapt_lambda, "mixture weights, comma separated (overrides the manifest)");
  adapt_cmd->add_option("--kappa", adapt_kappa, "discriminator reference weights (overrides the manifest)");
  adapt_cmd->add_option("--lambda-csv", adapt_lambda_csv, "per-frame mixture weights: frame,l0,l1,...");
  adapt_cmd->add_option("--threads", adapt.threads, "worker threads")->check(CLI::PositiveNumber);
  adapt_cmd->add_option("--threshold", adapt.plausibility_threshold, "drop sources with omega <= threshold")
      ->check(CLI::Range(0.0, 1.0));
  adapt_cmd->add_option("--dtype", adapt_dtype, "fused map dtype")->check(CLI::IsMember({"f32", "f64"}));

  // simulate
  SimulationConfig sim;
  std::string sim_scenario = "random", sim_eps, sim_kappa, sim_format = "json", sim_out, fixture_out;
  std::vector<std::string> sim_lambdas;
  std::size_t sim_sweep = 0;
  FixtureSpec fixture;
  auto* sim_cmd = app.add_subcommand("simulate", "compare methods and check the error bound on synthetic domains");
  sim_cmd->add_option("--scenario", sim_scenario, "random domains or the two-domain conflict instance")
      ->check(CLI::IsMember({"random", "conflict"}));
  sim_cmd->add_option("--domains", sim.domains, "number of source domains")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--classes", sim.classes, "number of classes")->check(CLI::Range(2, 1000));
  sim_cmd->add_option("--evidence", sim.evidence, "evidence alphabet size")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--concentration", sim.concentration, "Dirichlet concentration")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--seed", sim.seed, "random seed");
  sim_cmd->add_option("--lambda", sim_lambdas, "mixture to evaluate (repeatable); default: all equal-weight subsets");
  sim_cmd->add_option("--sweep", sim_sweep, "evaluate a two-domain sweep with this many points");
  sim_cmd->add_option("--eps", sim_eps, "noise grid for the bound check, comma separated");
  sim_cmd->add_option("--kappa", sim_kappa, "discriminator reference weights");
  sim_cmd->add_option("--trials", sim.trials, "bound trials per grid cell (0 skips the check)");
  sim_cmd->add_option("--samples", sim.samples, "score this many samples instead of the exact population");
  sim_cmd->add_option("--format", sim_format, "report format")->check(CLI::IsMember({"json", "csv"}));
  sim_cmd->add_option("--out", sim_out, "report directory (default: stdout)");
  sim_cmd->add_option("--fixture-out", fixture_out, "also write an on-disk oracle fixture here");
  sim_cmd->add_option("--fixture-height", fixture.height, "fixture frame height")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--fixture-width", fixture.width, "fixture frame width")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--fixture-frames", fixture.frames_per_domain, "fixture frames per domain")
      ->check(CLI::PositiveNumber);

  // evaluate
  EvaluateConfig eval;
  std::string eval_lambda, eval_format = "json", eval_out;
  std::size_t eval_classes = 0;
  auto* eval_cmd = app.add_subcommand("evaluate", "score label maps against groundtruth");
  eval_cmd->add_option("--pred", eval.predictions, "predictions: one directory per method")
      ->required()
      ->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--gt", eval.groundtruth, "groundtruth: d0/, d1/, ... or label maps")
      ->required()
      ->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--lambda", eval_lambda, "per-domain weights (default uniform)");
  eval_cmd->add_option("--classes", eval_classes, "class count (default: largest label + 1)");
  eval_cmd->add_option("--format", eval_format, "report format")->check(CLI::IsMember({"json", "csv"}));
  eval_cmd->add_option("--out", eval_out, "report directory (default: stdout)");

  // calibrate
  CalibrateConfig cal;
  std::string cal_manifest, cal_lambda, cal_out;
  long long cal_class = -1;
  auto* cal_cmd = app.add_subcommand("calibrate", "reliability bins and prior consistency of fused posteriors");
  cal_cmd->add_option("--manifest", cal_manifest, "adapt this manifest's frames instead of simulating");
  cal_cmd->add_option("--lambda", cal_lambda, "mixture weights");
  cal_cmd->add_option("--domains", cal.simulation.domains, "simulated domains")->check(CLI::PositiveNumber);
  cal_cmd->add_option("--classes", cal.simulation.classes, "simulated classes")->check(CLI::Range(2, 1000));
  cal_cmd->add_option("--evidence", cal.simulation.evidence, "simulated evidence symbols")->check(CLI::PositiveNumber);
  cal_cmd->add_option("--concentration", cal.simulation.concentration, "Dirichlet concentration")
      ->check(CLI::PositiveNumber);
  cal_cmd->add_option("--seed", cal.simulation.seed, "random seed");
  cal_cmd->add_option("--samples", cal.simulation.samples, "simulated samples")->check(CLI::PositiveNumber);
  cal_cmd->add_flag("--skip-shift", cal.simulation.skip_shift, "fuse raw model outputs (miscalibrated control)");
  cal_cmd->add_option("--class", cal_class, "only this class (default: all)");
  cal_cmd->add_option("--bins", cal.bins, "reliability bins")->check(CLI::Range(2, 10000));
  cal_cmd->add_option("--threads", cal.threads, "worker threads")->check(CLI::PositiveNumber);
  cal_cmd->add_option("--out", cal_out, "output directory (default: stdout)");

  // bench
  BenchConfig bench;
  std::string bench_out;
  auto* bench_cmd = app.add_subcommand("bench", "time adapt_map on synthetic maps");
  bench_cmd->add_option("--height", bench.height)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--width", bench.width)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--classes", bench.classes)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--sources", bench.sources)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--frames", bench.frames)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--threads", bench.threads)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--seed", bench.seed);
  bench_cmd->add_option("--out", bench_out, "report directory (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*adapt_cmd) {
      adapt.lambda = optional_prob(adapt_lambda, "lambda");
      adapt.kappa = optional_prob(adapt_kappa, "kappa");
      if (!adapt_lambda_csv.empty()) adapt.lambda_csv = adapt_lambda_csv;
      adapt.dtype = adapt_dtype == "f64" ? DType::Float64 : DType::Float32;
      const json summary = cmd_adapt(adapt);
      std::cout << summary.dump(2) << '\n';
    } else if (*sim_cmd) {
      sim.scenario = sim_scenario == "conflict" ? Scenario::Conflict : Scenario::Random;
      for (const auto& l : sim_lambdas) sim.lambdas.push_back(parse_prob_list(l, "lambda"));
      if (sim_sweep > 0)
        for (auto& l : lambda_sweep(sim_sweep)) sim.lambdas.push_back(std::move(l));
      if (!sim_eps.empty()) sim.epsilon_grid = parse_real_list(sim_eps, "eps");
      sim.kappa = optional_prob(sim_kappa, "kappa");
      const ReportFormat format = kFormats.at(sim_format);
      const SimulationResult result = run_simulation(sim);
      const std::optional<fs::path> out = sim_out.empty() ? std::nullopt : std::optional<fs::path>(sim_out);
      if (out) {
        emit(out, "report", format, result.report.config, result.to_json(), result.report.to_csv());
        if (!result.bounds.empty()) emit(out, "bounds", ReportFormat::Csv, result.report.config, {}, result.bounds_csv());
      } else {
        emit(out, "report", format, result.report.config, result.to_json(),
             result.report.to_csv() + (result.bounds.empty() ? "" : "\n" + result.bounds_csv()));
      }
      if (!fixture_out.empty()) {
        const auto domains = make_domains(sim);
        const std::size_t n = domains.size();
        const ReferenceWeights kappa = sim.kappa ? ReferenceWeights(*sim.kappa) : ReferenceWeights::uniform(n);
        const ProbVec lambda = sim.lambdas.empty() ? ProbVec::uniform(n) : sim.lambdas.front();
        fixture.seed = sim.seed;
        write_oracle_fixture(fixture_out, domains, kappa, lambda, fixture);
        EvaluationReport expected = fixture_scores(domains, kappa, MixtureWeights(lambda), fixture);
        expected.config = result.report.config;
        std::ofstream(fs::path(fixture_out) / "expected_scores.json") << expected.to_json().dump(2) << '\n';
      }
    } else if (*eval_cmd) {
      eval.lambda = optional_prob(eval_lambda, "lambda");
      if (eval_classes > 0) eval.classes = eval_classes;
      const EvaluationReport report = cmd_evaluate(eval);
      emit(eval_out.empty() ? std::nullopt : std::optional<fs::path>(eval_out), "evaluation",
           kFormats.at(eval_format), report.config, report.to_json(), report.to_csv());
    } else if (*cal_cmd) {
      if (!cal_manifest.empty()) cal.manifest = cal_manifest;
      cal.lambda = optional_prob(cal_lambda, "lambda");
      if (cal_class >= 0) cal.cls = static_cast<ClassIndex>(cal_class);
      const CalibrationResult r = cmd_calibrate(cal);
      const json config = cal.to_json();
      json summary = r.summary();
      summary["config"] = config;
      const std::optional<fs::path> out = cal_out.empty() ? std::nullopt : std::optional<fs::path>(cal_out);
      emit(out, "calibration", ReportFormat::Csv, config, {}, r.curves_csv());
      if (out) {
        emit(out, "prior_consistency", ReportFormat::Csv, config, {}, r.consistency_csv());
        emit(out, "summary", ReportFormat::Json, config, summary, {});
      } else {
        std::cout << '\n' << r.consistency_csv();
        std::cerr << summary.dump() << '\n';
      }
    } else if (*bench_cmd) {
      const BenchReport report = cmd_bench(bench);
      emit(bench_out.empty() ? std::nullopt : std::optional<fs::path>(bench_out), "bench", ReportFormat::Json,
           bench.to_json(), report.to_json(), {});
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
