#pragma once

// MDAT: a dense little-endian tensor file, and the JSON manifest that wires
// per-source posterior maps, the discriminator map and priors together.
//
// MDAT byte layout (all integers little-endian):
//
//   offset   size     field
//   0        4        magic "MDAT"
//   4        2        version (u16, currently 1)
//   6        1        dtype (u8: 1 = float32, 2 = float64)
//   7        1        rank (u8, 1..4)
//   8        4*rank   dims (u32 each, outermost first)
//   8+4*rank ...      payload, row-major, IEEE-754 little-endian,
//                     exactly prod(dims) * sizeof(dtype) bytes

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mixda/mixture_adapt.hpp"
#include "mixda/prob_map.hpp"

namespace mixda {

inline constexpr std::uint16_t kMdatVersion = 1;

enum class DType : std::uint8_t { Float32 = 1, Float64 = 2 };

std::size_t dtype_size(DType dtype);

struct TensorHeader {
  std::uint16_t version = kMdatVersion;
  DType dtype = DType::Float32;
  std::vector<std::uint32_t> dims;

  std::uint64_t element_count() const noexcept;
  std::uint64_t payload_bytes() const noexcept { return element_count() * dtype_size(dtype); }
  std::size_t encoded_size() const noexcept { return 8 + 4 * dims.size(); }

  friend bool operator==(const TensorHeader&, const TensorHeader&) = default;
};

struct Tensor {
  TensorHeader header;
  std::vector<std::byte> payload;
};

/// Checks rank, dtype and that prod(dims) stays below 2^32 (DimOverflow).
void check_header(const TensorHeader& header);

std::vector<std::byte> encode_tensor(const TensorHeader& header, std::span<const std::byte> payload);
Tensor decode_tensor(std::span<const std::byte> bytes);

void write_tensor(const std::filesystem::path& path, const TensorHeader& header,
                  std::span<const std::byte> payload);
Tensor read_tensor(const std::filesystem::path& path);

/// Encodes `values` as `dtype` in little-endian order.
Tensor make_tensor(std::vector<std::uint32_t> dims, std::span<const double> values, DType dtype);
std::vector<double> tensor_values(const Tensor& tensor);

/// Rank-3 H x W x C map. Each pixel must be normalized within
/// kNormalizationTolerance and is renormalized in 64-bit.
PosteriorMap load_posterior_map(const std::filesystem::path& path);
DiscriminatorMap load_discriminator_map(const std::filesystem::path& path);
void save_posterior_map(const std::filesystem::path& path, const PosteriorMap& map, DType dtype = DType::Float32);
void save_discriminator_map(const std::filesystem::path& path, const DiscriminatorMap& map,
                            DType dtype = DType::Float32);

/// Rank-2 H x W map of class indices stored as floats.
LabelMap load_label_map(const std::filesystem::path& path);
void save_label_map(const std::filesystem::path& path, const LabelMap& labels);

// ---- manifest -----------------------------------------------------------------

struct SourceEntry {
  std::string id;
  ProbVec train_priors;
  ProbVec true_priors;
  /// Path template; "{frame}" is replaced by the frame id.
  std::string posterior_map;
};

struct Manifest {
  std::filesystem::path base_dir;
  std::size_t class_count = 0;
  std::size_t source_count = 0;
  std::vector<SourceEntry> sources;
  std::string discriminator_map;
  ProbVec kappa;
  std::optional<ProbVec> lambda;
  std::optional<std::string> groundtruth;
  std::vector<std::string> frames;

  SourceBundle bundle() const;
  ReferenceWeights reference_weights() const { return ReferenceWeights(kappa); }
  /// Substitutes the frame id and resolves relative to the manifest.
  std::filesystem::path resolve(const std::string& path_template, const std::string& frame) const;
};

/// Throws SchemaError for missing or mistyped fields and
/// InvariantViolation (message starts with the field path) for values that
/// break simplex invariants.
Manifest parse_manifest(const nlohmann::json& doc, const std::filesystem::path& base_dir);
Manifest read_manifest(const std::filesystem::path& path);

nlohmann::json manifest_to_json(const Manifest& manifest);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

struct Diagnostic {
  Errc code;
  /// Field path or file the problem was found in.
  std::string where;
  std::string message;
};

/// Cross-checks the tensors a manifest refers to: presence, rank, sizes
/// against class/source counts and each other, and per-pixel normalization
/// within 1e-4 on up to `spot_check_pixels` deterministically sampled pixels.
std::vector<Diagnostic> validate_manifest(const Manifest& manifest, std::size_t spot_check_pixels = 1024);

}  // namespace mixda
