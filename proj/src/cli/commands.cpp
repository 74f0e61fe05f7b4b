#include "cli/commands.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <tuple>
#include <utility>

#include "mixda/rng.hpp"

namespace mixda::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_real(const std::string& token, std::string_view field) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (token.empty() || ec != std::errc() || ptr != token.data() + token.size())
    throw Error(Errc::InvalidParam, std::string(field) + ": '" + token + "' is not a number");
  return v;
}

json optional_vec(const std::optional<ProbVec>& v) { return v ? json(v->vector()) : json(nullptr); }

std::string output_name(const std::string& frame) { return frame.empty() ? "frame" : frame; }

}  // namespace

ProbVec parse_prob_list(std::string_view text, std::string_view field) {
  std::vector<double> values;
  for (const auto& token : split(text, ',')) values.push_back(parse_real(token, field));
  try {
    return ProbVec::from_probabilities(values);
  } catch (const Error& e) {
    throw e.annotated(field);
  }
}

std::vector<double> parse_real_list(std::string_view text, std::string_view field) {
  std::vector<double> values;
  for (const auto& token : split(text, ',')) {
    values.push_back(parse_real(token, field));
    if (!std::isfinite(values.back())) throw Error(Errc::InvalidParam, std::string(field) + ": values must be finite");
  }
  return values;
}

int exit_code(const Error& error) { return is_validation_error(error.code()) ? 2 : 3; }

// ---- adapt --------------------------------------------------------------------

json AdaptConfig::to_json() const {
  return {{"command", "adapt"},
          {"manifest", manifest.string()},
          {"out", out.string()},
          {"lambda", optional_vec(lambda)},
          {"kappa", optional_vec(kappa)},
          {"lambda_csv", lambda_csv ? json(lambda_csv->string()) : json(nullptr)},
          {"threads", threads},
          {"plausibility_threshold", plausibility_threshold},
          {"dtype", dtype == DType::Float32 ? "f32" : "f64"}};
}

std::map<std::string, ProbVec> read_lambda_csv(const fs::path& path, std::size_t sources) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::MissingFile, path.string());
  std::map<std::string, ProbVec> out;
  std::string line;
  std::size_t lineno = 0;
  bool first_row = true;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto pos = t.find(',');
    const std::string frame = trim(t.substr(0, pos));
    if (std::exchange(first_row, false) && frame == "frame") continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (pos == std::string::npos) throw Error(Errc::SchemaError, where + ": expected frame,lambda...");
    ProbVec l = parse_prob_list(std::string_view(t).substr(pos + 1), where);
    if (l.size() != sources)
      throw Error(Errc::DimensionMismatch, where + ": expected " + std::to_string(sources) + " weights");
    out.insert_or_assign(frame, std::move(l));
  }
  return out;
}

json cmd_adapt(const AdaptConfig& config) {
  if (config.threads == 0) throw Error(Errc::InvalidParam, "threads must be at least 1");
  Manifest m = read_manifest(config.manifest);
  if (config.kappa) {
    if (config.kappa->size() != m.source_count)
      throw Error(Errc::DimensionMismatch, "kappa: expected " + std::to_string(m.source_count) + " weights");
    m.kappa = *config.kappa;
  }
  const ReferenceWeights kappa = m.reference_weights();
  std::optional<ProbVec> base = config.lambda ? config.lambda : m.lambda;
  if (base && base->size() != m.source_count)
    throw Error(Errc::DimensionMismatch, "lambda: expected " + std::to_string(m.source_count) + " weights");
  const auto per_frame =
      config.lambda_csv ? read_lambda_csv(*config.lambda_csv, m.source_count) : std::map<std::string, ProbVec>{};

  if (const auto diags = validate_manifest(m); !diags.empty())
    throw Error(diags.front().code, diags.front().where + ": " + diags.front().message);

  const SourceBundle bundle = m.bundle();
  AdaptOptions options;
  options.threads = config.threads;
  options.plausibility_threshold = config.plausibility_threshold;

  json frames = json::array();
  for (const std::string& frame : m.frames) {
    const auto it = per_frame.find(frame);
    if (it == per_frame.end() && !base)
      throw Error(Errc::InvalidParam, "no lambda for frame '" + frame + "' (pass --lambda or set it in the manifest)");
    const MixtureWeights lambda(it != per_frame.end() ? it->second : *base);
    const std::string name = output_name(frame);
    try {
      std::vector<PosteriorMap> star;
      for (const auto& s : m.sources) star.push_back(load_posterior_map(m.resolve(s.posterior_map, frame)));
      const DiscriminatorMap disc = load_discriminator_map(m.resolve(m.discriminator_map, frame));
      const PosteriorMap fused = adapt_map(star, bundle, disc, lambda, kappa, options);
      const ProbVec target_priors = mixture_priors(bundle, lambda);
      save_posterior_map(config.out / "fused" / (name + ".mdat"), fused, config.dtype);
      save_label_map(config.out / "map" / (name + ".mdat"), decide_map_labels(fused));
      save_label_map(config.out / "mle" / (name + ".mdat"), decide_mle_labels(fused, target_priors));
    } catch (const Error& e) {
      throw e.annotated("frame '" + frame + "'");
    }
    frames.push_back({{"frame", frame}, {"output", name}, {"lambda", lambda.values().vector()}});
  }

  json summary = {{"schema_version", EvaluationReport::kSchemaVersion},
                  {"config", config.to_json()},
                  {"class_count", m.class_count},
                  {"source_count", m.source_count},
                  {"kappa", m.kappa.vector()},
                  {"frames", frames}};
  fs::create_directories(config.out);
  std::ofstream(config.out / "adapt.json") << summary.dump(2) << '\n';
  return summary;
}

// ---- evaluate -------------------------------------------------------------------

json EvaluateConfig::to_json() const {
  return {{"command", "evaluate"},
          {"predictions", predictions.string()},
          {"groundtruth", groundtruth.string()},
          {"lambda", optional_vec(lambda)},
          {"classes", classes ? json(*classes) : json(nullptr)}};
}

namespace {

// Subdirectories named d0, d1, ... in numeric order, each with its index.
std::vector<std::pair<std::size_t, std::string>> domain_dirs(const fs::path& root) {
  std::vector<std::pair<std::size_t, std::string>> out;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    if (name.size() < 2 || name[0] != 'd') continue;
    std::size_t idx = 0;
    const auto [ptr, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), idx);
    if (ec == std::errc() && ptr == name.data() + name.size()) out.emplace_back(idx, name);
  }
  std::sort(out.begin(), out.end());
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out[i].first != i) throw Error(Errc::MissingFile, (root / ("d" + std::to_string(i))).string());
  return out;
}

std::vector<fs::path> mdat_files(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file() && entry.path().extension() == ".mdat")
      out.push_back(fs::relative(entry.path(), root));
  std::sort(out.begin(), out.end());
  return out;
}

LabelMap load_prediction(const fs::path& path) {
  if (!fs::exists(path)) throw Error(Errc::MissingFile, path.string());
  const Tensor t = read_tensor(path);
  if (t.header.dims.size() == 3) return decide_map_labels(load_posterior_map(path));
  return load_label_map(path);
}

}  // namespace

EvaluationReport cmd_evaluate(const EvaluateConfig& config) {
  for (const fs::path& p : {config.predictions, config.groundtruth})
    if (!fs::is_directory(p)) throw Error(Errc::MissingFile, p.string() + " is not a directory");

  auto domains = domain_dirs(config.groundtruth);
  const bool split_by_domain = !domains.empty();
  if (!split_by_domain) domains.emplace_back(0, "");
  const std::size_t n = domains.size();
  const ProbVec lambda = config.lambda ? *config.lambda : ProbVec::uniform(n);
  if (lambda.size() != n)
    throw Error(Errc::DimensionMismatch, "lambda: expected " + std::to_string(n) + " weights, one per domain directory");

  std::vector<std::string> methods;
  for (const auto& entry : fs::directory_iterator(config.predictions))
    if (entry.is_directory()) methods.push_back(entry.path().filename().string());
  std::sort(methods.begin(), methods.end());
  if (methods.empty()) throw Error(Errc::MissingFile, config.predictions.string() + " holds no method directories");

  // Groundtruth per domain, loaded once.
  std::vector<std::vector<std::pair<fs::path, LabelMap>>> gt(n);
  std::size_t max_label = 0;
  for (std::size_t d = 0; d < n; ++d) {
    const fs::path dir = config.groundtruth / domains[d].second;
    for (const fs::path& rel : mdat_files(dir)) {
      LabelMap labels = load_label_map(dir / rel);
      for (ClassIndex c : labels.labels) max_label = std::max(max_label, c);
      gt[d].emplace_back(rel, std::move(labels));
    }
    if (gt[d].empty()) throw Error(Errc::MissingFile, dir.string() + " holds no label maps");
  }

  std::vector<std::vector<LabelMap>> pred_maps(methods.size());
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    for (std::size_t d = 0; d < n; ++d) {
      for (const auto& [rel, labels] : gt[d]) {
        const fs::path path = config.predictions / methods[mi] / domains[d].second / rel;
        LabelMap p = load_prediction(path);
        if (p.height != labels.height || p.width != labels.width)
          throw Error(Errc::DimensionMismatch, path.string() + " differs in size from its groundtruth");
        for (ClassIndex c : p.labels) max_label = std::max(max_label, c);
        pred_maps[mi].push_back(std::move(p));
      }
    }
  }

  const std::size_t K = config.classes ? *config.classes : max_label + 1;
  if (max_label >= K) throw Error(Errc::InvalidParam, "a label exceeds the given class count");

  EvaluationReport report;
  json domain_names = json::array();
  for (const auto& [idx, name] : domains) domain_names.push_back(name);
  report.config = config.to_json();
  report.config["domains"] = domain_names;
  report.config["class_count"] = K;

  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    WeightedConfusion total(K);
    std::size_t map_index = 0;
    for (std::size_t d = 0; d < n; ++d) {
      WeightedConfusion cm(K);
      std::size_t pixels = 0;
      for (const auto& [rel, labels] : gt[d]) {
        const LabelMap& p = pred_maps[mi][map_index++];
        for (std::size_t i = 0; i < labels.labels.size(); ++i) cm.add(labels.labels[i], p.labels[i], 1.0);
        pixels += labels.labels.size();
      }
      if (lambda[d] > 0.0) total += cm.scaled(lambda[d] / static_cast<double>(pixels));
    }
    report.rows.push_back({methods[mi], lambda.vector(), score_all(total)});
  }
  return report;
}

// ---- calibrate ------------------------------------------------------------------

json CalibrateConfig::to_json() const {
  return {{"command", "calibrate"},
          {"manifest", manifest ? json(manifest->string()) : json(nullptr)},
          {"lambda", optional_vec(lambda)},
          {"simulation", manifest ? json(nullptr) : simulation.to_json()},
          {"class", cls ? json(*cls) : json(nullptr)},
          {"bins", bins},
          {"threads", threads}};
}

CalibrationResult cmd_calibrate(const CalibrateConfig& config) {
  std::vector<ProbVec> posteriors;
  std::vector<ClassIndex> labels;
  ProbVec reference;
  std::size_t K = 0;

  if (config.manifest) {
    const Manifest m = read_manifest(*config.manifest);
    if (!m.groundtruth) throw Error(Errc::SchemaError, "calibration needs a groundtruth template in the manifest");
    const auto l = config.lambda ? config.lambda : m.lambda;
    if (!l) throw Error(Errc::InvalidParam, "no lambda given");
    const MixtureWeights lambda(*l);
    const SourceBundle bundle = m.bundle();
    reference = mixture_priors(bundle, lambda);
    K = m.class_count;
    for (const std::string& frame : m.frames) {
      try {
        std::vector<PosteriorMap> star;
        for (const auto& s : m.sources) star.push_back(load_posterior_map(m.resolve(s.posterior_map, frame)));
        const PosteriorMap fused = adapt_map(star, bundle, load_discriminator_map(m.resolve(m.discriminator_map, frame)),
                                             lambda, m.reference_weights(), {0.0, config.threads});
        const LabelMap gt = load_label_map(m.resolve(*m.groundtruth, frame));
        if (gt.height != fused.height() || gt.width != fused.width())
          throw Error(Errc::DimensionMismatch, "groundtruth differs in size from the posterior maps");
        for (std::size_t i = 0; i < fused.pixel_count(); ++i) {
          const auto p = fused.pixel(i);
          posteriors.push_back(ProbVec::assume_normalized({p.begin(), p.end()}));
          labels.push_back(gt.labels[i]);
        }
      } catch (const Error& e) {
        throw e.annotated("frame '" + frame + "'");
      }
    }
  } else {
    CalibrationSpec spec = config.simulation;
    if (config.lambda) spec.lambda = config.lambda;
    std::tie(posteriors, labels) = simulated_posteriors(spec, reference);
    K = spec.classes;
  }

  std::vector<ClassIndex> classes;
  if (config.cls) {
    if (*config.cls >= K) throw Error(Errc::InvalidParam, "class index out of range");
    classes.push_back(*config.cls);
  } else {
    for (ClassIndex c = 0; c < K; ++c) classes.push_back(c);
  }
  return calibrate(posteriors, labels, reference, classes, config.bins);
}

// ---- bench --------------------------------------------------------------------

json BenchConfig::to_json() const {
  return {{"command", "bench"}, {"height", height},   {"width", width},   {"classes", classes},
          {"sources", sources}, {"frames", frames},   {"threads", threads}, {"seed", seed}};
}

json BenchReport::to_json() const {
  std::ostringstream hex;
  hex << std::hex << output_digest;
  return {{"schema_version", EvaluationReport::kSchemaVersion},
          {"config", config.to_json()},
          {"latencies_ms", latencies_ms},
          {"mean_ms", mean_ms},
          {"p95_ms", p95_ms},
          {"output_digest", hex.str()}};
}

BenchInputs make_bench_inputs(const BenchConfig& c) {
  if (c.height == 0 || c.width == 0 || c.classes == 0 || c.sources == 0 || c.frames == 0 || c.threads == 0)
    throw Error(Errc::InvalidParam, "bench dimensions, frames and threads must be positive");
  rng::Stream stream(rng::hash_key({c.seed, 0x62656e6368ULL}));

  auto random_map = [&](std::size_t channels) {
    std::vector<double> data(c.height * c.width * channels);
    for (std::size_t i = 0; i < c.height * c.width; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < channels; ++j) sum += data[i * channels + j] = 0.05 + stream.uniform();
      for (std::size_t j = 0; j < channels; ++j) data[i * channels + j] /= sum;
    }
    return data;
  };

  std::vector<PosteriorMap> star;
  for (std::size_t k = 0; k < c.sources; ++k) star.emplace_back(c.height, c.width, c.classes, random_map(c.classes));
  DiscriminatorMap disc(c.height, c.width, c.sources, random_map(c.sources));
  std::vector<ProbVec> truth;
  for (std::size_t k = 0; k < c.sources; ++k) truth.push_back(ProbVec(stream.dirichlet(c.classes, 2.0)));
  return {std::move(star), std::move(disc), SourceBundle::with_uniform_training(std::move(truth)),
          MixtureWeights(ProbVec(stream.dirichlet(c.sources, 2.0))), ReferenceWeights::uniform(c.sources)};
}

std::uint64_t digest(const PosteriorMap& map) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : map.data()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

BenchReport cmd_bench(const BenchConfig& config) {
  const BenchInputs in = make_bench_inputs(config);
  const AdaptOptions options{0.0, config.threads};
  BenchReport report;
  report.config = config;

  // One untimed warm-up run so page faults on the output are not measured.
  PosteriorMap out = adapt_map(in.star, in.bundle, in.disc, in.lambda, in.kappa, options);
  for (std::size_t f = 0; f < config.frames; ++f) {
    const auto t0 = std::chrono::steady_clock::now();
    out = adapt_map(in.star, in.bundle, in.disc, in.lambda, in.kappa, options);
    const auto t1 = std::chrono::steady_clock::now();
    report.latencies_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  double sum = 0.0;
  for (double l : report.latencies_ms) sum += l;
  report.mean_ms = sum / static_cast<double>(report.latencies_ms.size());
  std::vector<double> sorted = report.latencies_ms;
  std::sort(sorted.begin(), sorted.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(sorted.size())));
  report.p95_ms = sorted[std::max<std::size_t>(rank, 1) - 1];
  report.output_digest = digest(out);
  return report;
}

}  // namespace mixda::cli
