#include "mixda/tensor_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "mixda/rng.hpp"

namespace mixda {

namespace fs = std::filesystem;
using nlohmann::json;

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::Float32: return 4;
    case DType::Float64: return 8;
  }
  return 0;
}

std::uint64_t TensorHeader::element_count() const noexcept {
  std::uint64_t n = 1;
  for (std::uint32_t d : dims) n *= d;
  return n;
}

void check_header(const TensorHeader& header) {
  if (header.version != kMdatVersion)
    throw Error(Errc::UnsupportedVersion, "MDAT version " + std::to_string(header.version));
  if (header.dtype != DType::Float32 && header.dtype != DType::Float64)
    throw Error(Errc::BadHeader, "unknown dtype code " + std::to_string(static_cast<int>(header.dtype)));
  if (header.dims.empty() || header.dims.size() > 4)
    throw Error(Errc::BadHeader, "rank " + std::to_string(header.dims.size()) + " outside [1, 4]");
  std::uint64_t n = 1;
  for (std::uint32_t d : header.dims) {
    n *= d;
    if (n >= (std::uint64_t{1} << 32)) throw Error(Errc::DimOverflow, "element count reaches 2^32");
  }
}

namespace {

void put_le(std::vector<std::byte>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(std::span<const std::byte> in, std::size_t offset, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= std::uint64_t(std::to_integer<std::uint8_t>(in[offset + i])) << (8 * i);
  return v;
}

constexpr char kMagic[4] = {'M', 'D', 'A', 'T'};

}  // namespace

std::vector<std::byte> encode_tensor(const TensorHeader& header, std::span<const std::byte> payload) {
  check_header(header);
  if (payload.size() != header.payload_bytes())
    throw Error(Errc::TruncatedPayload, "payload holds " + std::to_string(payload.size()) + " bytes, header implies " +
                                            std::to_string(header.payload_bytes()));
  std::vector<std::byte> out;
  out.reserve(header.encoded_size() + payload.size());
  for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
  put_le(out, header.version, 2);
  put_le(out, static_cast<std::uint8_t>(header.dtype), 1);
  put_le(out, header.dims.size(), 1);
  for (std::uint32_t d : header.dims) put_le(out, d, 4);
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Tensor decode_tensor(std::span<const std::byte> bytes) {
  if (bytes.size() < 4) throw Error(Errc::TruncatedPayload, "file shorter than the magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw Error(Errc::BadMagic, "not an MDAT file");
  if (bytes.size() < 8) throw Error(Errc::TruncatedPayload, "header cut short");

  Tensor t;
  t.header.version = static_cast<std::uint16_t>(get_le(bytes, 4, 2));
  if (t.header.version != kMdatVersion)
    throw Error(Errc::UnsupportedVersion, "MDAT version " + std::to_string(t.header.version));
  t.header.dtype = static_cast<DType>(get_le(bytes, 6, 1));
  const std::size_t rank = static_cast<std::size_t>(get_le(bytes, 7, 1));
  if (rank == 0 || rank > 4) throw Error(Errc::BadHeader, "rank " + std::to_string(rank) + " outside [1, 4]");
  if (bytes.size() < 8 + 4 * rank) throw Error(Errc::TruncatedPayload, "dims cut short");
  for (std::size_t i = 0; i < rank; ++i) t.header.dims.push_back(static_cast<std::uint32_t>(get_le(bytes, 8 + 4 * i, 4)));
  check_header(t.header);

  const std::size_t offset = t.header.encoded_size();
  const std::uint64_t expected = t.header.payload_bytes();
  const std::uint64_t actual = bytes.size() - offset;
  if (actual < expected)
    throw Error(Errc::TruncatedPayload,
                "payload has " + std::to_string(actual) + " bytes, header implies " + std::to_string(expected));
  if (actual > expected)
    throw Error(Errc::BadHeader, std::to_string(actual - expected) + " trailing bytes after the payload");
  t.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end());
  return t;
}

void write_tensor(const fs::path& path, const TensorHeader& header, std::span<const std::byte> payload) {
  const auto bytes = encode_tensor(header, payload);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::IoError, "write to " + path.string() + " failed");
}

Tensor read_tensor(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::MissingFile, path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_tensor(std::as_bytes(std::span<const char>(raw)));
  } catch (const Error& e) {
    throw e.annotated(path.string());
  }
}

Tensor make_tensor(std::vector<std::uint32_t> dims, std::span<const double> values, DType dtype) {
  Tensor t;
  t.header.dtype = dtype;
  t.header.dims = std::move(dims);
  check_header(t.header);
  if (values.size() != t.header.element_count())
    throw Error(Errc::DimensionMismatch, "value count does not match dims");
  t.payload.reserve(t.header.payload_bytes());
  for (double v : values) {
    if (dtype == DType::Float32)
      put_le(t.payload, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
    else
      put_le(t.payload, std::bit_cast<std::uint64_t>(v), 8);
  }
  return t;
}

std::vector<double> tensor_values(const Tensor& tensor) {
  const std::size_t n = tensor.header.element_count();
  const std::size_t width = dtype_size(tensor.header.dtype);
  if (tensor.payload.size() != n * width) throw Error(Errc::TruncatedPayload, "payload does not match header");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (tensor.header.dtype == DType::Float32)
      out[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(tensor.payload, i * 4, 4)));
    else
      out[i] = std::bit_cast<double>(get_le(tensor.payload, i * 8, 8));
  }
  return out;
}

namespace {

template <class Axis>
ProbMap<Axis> load_prob_map(const fs::path& path) {
  const Tensor t = read_tensor(path);
  if (t.header.dims.size() != 3)
    throw Error(Errc::DimensionMismatch, path.string() + ": expected a rank-3 H x W x C tensor");
  const std::size_t H = t.header.dims[0], W = t.header.dims[1], C = t.header.dims[2];
  std::vector<double> values = tensor_values(t);
  for (std::size_t i = 0; i < H * W; ++i) {
    const std::span<double> px(values.data() + i * C, C);
    try {
      const ProbVec p = ProbVec::from_probabilities(px);
      std::copy(p.begin(), p.end(), px.begin());
    } catch (const Error& e) {
      std::ostringstream os;
      os << path.string() << ": pixel (" << i / W << ", " << i % W << ")";
      throw e.annotated(os.str());
    }
  }
  return ProbMap<Axis>(H, W, C, std::move(values));
}

template <class Axis>
void save_prob_map(const fs::path& path, const ProbMap<Axis>& map, DType dtype) {
  const Tensor t = make_tensor({static_cast<std::uint32_t>(map.height()), static_cast<std::uint32_t>(map.width()),
                                static_cast<std::uint32_t>(map.channels())},
                               map.data(), dtype);
  write_tensor(path, t.header, t.payload);
}

}  // namespace

PosteriorMap load_posterior_map(const fs::path& path) { return load_prob_map<ClassAxis>(path); }
DiscriminatorMap load_discriminator_map(const fs::path& path) { return load_prob_map<DomainAxis>(path); }

void save_posterior_map(const fs::path& path, const PosteriorMap& map, DType dtype) { save_prob_map(path, map, dtype); }
void save_discriminator_map(const fs::path& path, const DiscriminatorMap& map, DType dtype) {
  save_prob_map(path, map, dtype);
}

LabelMap load_label_map(const fs::path& path) {
  const Tensor t = read_tensor(path);
  if (t.header.dims.size() != 2) throw Error(Errc::DimensionMismatch, path.string() + ": expected a rank-2 label map");
  LabelMap m{t.header.dims[0], t.header.dims[1], {}};
  const auto values = tensor_values(t);
  m.labels.reserve(values.size());
  for (double v : values) {
    if (!(v >= 0.0) || v != std::floor(v))
      throw Error(Errc::InvariantViolation, path.string() + ": label is not a nonnegative integer");
    m.labels.push_back(static_cast<ClassIndex>(v));
  }
  return m;
}

void save_label_map(const fs::path& path, const LabelMap& labels) {
  std::vector<double> values(labels.labels.begin(), labels.labels.end());
  const Tensor t = make_tensor({static_cast<std::uint32_t>(labels.height), static_cast<std::uint32_t>(labels.width)},
                               values, DType::Float32);
  write_tensor(path, t.header, t.payload);
}

// ---- manifest -----------------------------------------------------------------

SourceBundle Manifest::bundle() const {
  std::vector<ProbVec> train, truth;
  for (const auto& s : sources) {
    train.push_back(s.train_priors);
    truth.push_back(s.true_priors);
  }
  return SourceBundle(std::move(train), std::move(truth));
}

fs::path Manifest::resolve(const std::string& path_template, const std::string& frame) const {
  std::string p = path_template;
  const std::string token = "{frame}";
  for (std::size_t pos = p.find(token); pos != std::string::npos; pos = p.find(token, pos + frame.size()))
    p.replace(pos, token.size(), frame);
  const fs::path path(p);
  return path.is_absolute() ? path : base_dir / path;
}

namespace {

const json& require(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) throw Error(Errc::SchemaError, where + key + " is missing");
  return obj.at(key);
}

std::size_t require_count(const json& obj, const std::string& key) {
  const json& v = require(obj, key, "");
  if (!v.is_number_integer() || v.get<std::int64_t>() <= 0)
    throw Error(Errc::SchemaError, key + " must be a positive integer");
  return v.get<std::size_t>();
}

std::string require_string(const json& obj, const std::string& key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_string()) throw Error(Errc::SchemaError, where + key + " must be a string");
  return v.get<std::string>();
}

ProbVec require_prob(const json& v, const std::string& path, std::size_t expected_size) {
  if (!v.is_array()) throw Error(Errc::SchemaError, path + " must be an array of numbers");
  std::vector<double> values;
  for (const json& x : v) {
    if (!x.is_number()) throw Error(Errc::SchemaError, path + " must be an array of numbers");
    values.push_back(x.get<double>());
  }
  if (values.size() != expected_size)
    throw Error(Errc::InvariantViolation, path + ": expected " + std::to_string(expected_size) + " entries, got " +
                                              std::to_string(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!(values[i] >= 0.0))
      throw Error(Errc::InvariantViolation, path + "[" + std::to_string(i) + "] is negative");
  try {
    return ProbVec::from_probabilities(values);
  } catch (const Error& e) {
    throw Error(Errc::InvariantViolation, path + ": " + e.what());
  }
}

}  // namespace

Manifest parse_manifest(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw Error(Errc::SchemaError, "manifest must be a JSON object");
  Manifest m;
  m.base_dir = base_dir;
  m.class_count = require_count(doc, "class_count");
  m.source_count = require_count(doc, "source_count");

  const json& sources = require(doc, "sources", "");
  if (!sources.is_array()) throw Error(Errc::SchemaError, "sources must be an array");
  if (sources.size() != m.source_count)
    throw Error(Errc::InvariantViolation, "sources: expected " + std::to_string(m.source_count) + " entries, got " +
                                              std::to_string(sources.size()));
  for (std::size_t k = 0; k < sources.size(); ++k) {
    const std::string where = "sources[" + std::to_string(k) + "].";
    const json& s = sources[k];
    if (!s.is_object()) throw Error(Errc::SchemaError, where + " must be an object");
    SourceEntry e;
    e.id = require_string(s, "id", where);
    e.train_priors = require_prob(require(s, "train_priors", where), where + "train_priors", m.class_count);
    e.true_priors = require_prob(require(s, "true_priors", where), where + "true_priors", m.class_count);
    e.posterior_map = require_string(s, "posterior_map", where);
    for (std::size_t h = 0; h < m.class_count; ++h)
      if (!(e.train_priors[h] > 0.0) && e.true_priors[h] > 0.0)
        throw Error(Errc::InvariantViolation, where + "train_priors[" + std::to_string(h) +
                                                  "] is zero where the true prior is not");
    m.sources.push_back(std::move(e));
  }

  m.discriminator_map = require_string(doc, "discriminator_map", "");
  if (doc.contains("kappa")) {
    m.kappa = require_prob(doc.at("kappa"), "kappa", m.source_count);
    for (std::size_t k = 0; k < m.source_count; ++k)
      if (!(m.kappa[k] > 0.0))
        throw Error(Errc::InvariantViolation, "kappa[" + std::to_string(k) + "] must be strictly positive");
  } else {
    m.kappa = ProbVec::uniform(m.source_count);
  }
  if (doc.contains("lambda") && !doc.at("lambda").is_null())
    m.lambda = require_prob(doc.at("lambda"), "lambda", m.source_count);
  if (doc.contains("groundtruth") && !doc.at("groundtruth").is_null())
    m.groundtruth = require_string(doc, "groundtruth", "");

  bool templated = m.discriminator_map.find("{frame}") != std::string::npos;
  for (const auto& s : m.sources) templated |= s.posterior_map.find("{frame}") != std::string::npos;
  if (doc.contains("frames")) {
    const json& frames = doc.at("frames");
    if (!frames.is_array() || frames.empty()) throw Error(Errc::SchemaError, "frames must be a non-empty array");
    for (const json& f : frames) {
      if (!f.is_string()) throw Error(Errc::SchemaError, "frames must hold strings");
      m.frames.push_back(f.get<std::string>());
    }
  } else if (templated) {
    throw Error(Errc::SchemaError, "frames is missing but paths use {frame}");
  } else {
    m.frames.push_back("");
  }
  return m;
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::MissingFile, path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::SchemaError, path.string() + ": " + e.what());
  }
  return parse_manifest(doc, path.parent_path());
}

json manifest_to_json(const Manifest& m) {
  json sources = json::array();
  for (const auto& s : m.sources)
    sources.push_back({{"id", s.id},
                       {"train_priors", s.train_priors.vector()},
                       {"true_priors", s.true_priors.vector()},
                       {"posterior_map", s.posterior_map}});
  json doc = {{"class_count", m.class_count},
              {"source_count", m.source_count},
              {"sources", sources},
              {"discriminator_map", m.discriminator_map},
              {"kappa", m.kappa.vector()},
              {"frames", m.frames}};
  if (m.lambda) doc["lambda"] = m.lambda->vector();
  if (m.groundtruth) doc["groundtruth"] = *m.groundtruth;
  return doc;
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot open " + path.string() + " for writing");
  out << manifest_to_json(manifest).dump(2) << '\n';
}

std::vector<Diagnostic> validate_manifest(const Manifest& m, std::size_t spot_check_pixels) {
  std::vector<Diagnostic> out;

  struct Expected {
    std::string where;
    std::string path_template;
    std::size_t channels;
  };
  std::vector<Expected> maps;
  for (std::size_t k = 0; k < m.sources.size(); ++k)
    maps.push_back({"sources[" + std::to_string(k) + "].posterior_map", m.sources[k].posterior_map, m.class_count});
  maps.push_back({"discriminator_map", m.discriminator_map, m.source_count});

  for (const std::string& frame : m.frames) {
    std::optional<std::pair<std::uint32_t, std::uint32_t>> frame_size;
    auto check_size = [&](const std::string& where, std::uint32_t h, std::uint32_t w) {
      if (!frame_size) {
        frame_size = {h, w};
      } else if (frame_size->first != h || frame_size->second != w) {
        out.push_back({Errc::DimensionMismatch, where, "frame '" + frame + "' is " + std::to_string(h) + "x" +
                                                         std::to_string(w) + ", other maps are " +
                                                         std::to_string(frame_size->first) + "x" +
                                                         std::to_string(frame_size->second)});
      }
    };

    for (const Expected& e : maps) {
      const fs::path path = m.resolve(e.path_template, frame);
      Tensor t;
      try {
        t = read_tensor(path);
      } catch (const Error& err) {
        out.push_back({err.code(), e.where, err.what()});
        continue;
      }
      if (t.header.dims.size() != 3) {
        out.push_back({Errc::DimensionMismatch, e.where, path.string() + " is not a rank-3 map"});
        continue;
      }
      if (t.header.dims[2] != e.channels) {
        out.push_back({Errc::DimensionMismatch, e.where,
                       path.string() + " has " + std::to_string(t.header.dims[2]) + " channels, expected " +
                           std::to_string(e.channels)});
        continue;
      }
      check_size(e.where, t.header.dims[0], t.header.dims[1]);

      const auto values = tensor_values(t);
      const std::size_t pixels = std::size_t{t.header.dims[0]} * t.header.dims[1];
      const std::size_t C = e.channels;
      const std::size_t samples = std::min(pixels, spot_check_pixels);
      for (std::size_t s = 0; s < samples; ++s) {
        const std::size_t i = samples == pixels ? s : rng::hash_key({0x73706f74ULL, s}) % pixels;
        double sum = 0.0;
        bool negative = false;
        for (std::size_t c = 0; c < C; ++c) {
          sum += values[i * C + c];
          negative |= !(values[i * C + c] >= 0.0);
        }
        if (negative || !(std::abs(sum - 1.0) <= 1e-4)) {
          std::ostringstream os;
          os << path.string() << ": pixel (" << i / t.header.dims[1] << ", " << i % t.header.dims[1]
             << ") is not a distribution (sum " << sum << ")";
          out.push_back({Errc::InvariantViolation, e.where, os.str()});
          break;
        }
      }
    }

    if (m.groundtruth) {
      const fs::path path = m.resolve(*m.groundtruth, frame);
      try {
        const LabelMap gt = load_label_map(path);
        check_size("groundtruth", static_cast<std::uint32_t>(gt.height), static_cast<std::uint32_t>(gt.width));
        for (ClassIndex c : gt.labels) {
          if (c >= m.class_count) {
            out.push_back({Errc::InvariantViolation, "groundtruth", path.string() + " has a label out of range"});
            break;
          }
        }
      } catch (const Error& err) {
        out.push_back({err.code(), "groundtruth", err.what()});
      }
    }
  }
  return out;
}

}  // namespace mixda
