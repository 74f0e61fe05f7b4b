#pragma once

// Arithmetic on probability simplices: normalization, target (prior) shift,
// MAP/MLE decisions, and a Euclidean embedding of the simplex for plotting.
//
// Everything here is a pure function of its arguments and is safe to call
// concurrently.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "mixda/error.hpp"

namespace mixda {

/// Tolerance on |sum - 1| for vectors that claim to already be normalized.
/// Float32 tensors coming from external models accumulate this much.
inline constexpr double kNormalizationTolerance = 1e-6;

/// Entries in [-kNegativeSlack, 0) are treated as rounding noise and clamped.
inline constexpr double kNegativeSlack = 1e-12;

using ClassIndex = std::size_t;

/// A point on the probability simplex: nonnegative entries summing to one.
class ProbVec {
 public:
  ProbVec() = default;

  /// Validates and renormalizes; see from_probabilities().
  ProbVec(std::initializer_list<double> values);
  explicit ProbVec(std::vector<double> values);

  /// Accepts `values` if every entry is nonnegative (up to kNegativeSlack)
  /// and the sum is within `tolerance` of one, then renormalizes exactly.
  static ProbVec from_probabilities(std::span<const double> values,
                                    double tolerance = kNormalizationTolerance);

  /// Wraps values the caller guarantees are already a valid distribution.
  /// No checks; used on hot paths whose arithmetic preserves the invariant.
  static ProbVec assume_normalized(std::vector<double> values);

  static ProbVec uniform(std::size_t size);
  static ProbVec one_hot(std::size_t size, std::size_t index);

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<double>& vector() const noexcept { return values_; }

  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  /// True when every entry is strictly positive.
  bool strictly_positive() const noexcept;

  friend bool operator==(const ProbVec&, const ProbVec&) = default;

 private:
  std::vector<double> values_;
};

/// Scales a nonnegative vector so it sums to one.
/// Throws NegativeMass if an entry is below -kNegativeSlack, AllZero if no
/// entry is positive.
ProbVec normalize(std::span<const double> raw);

/// Returns normalize(numer[k] / denom[k] * p[k]). Zero numerators are fine;
/// a zero denominator is tolerated only where numer[k] and p[k] are both
/// zero (0/0 is taken as 0), otherwise ZeroPrior. This is the one shift
/// kernel used for both class priors and domain priors.
ProbVec reweight(std::span<const double> p, std::span<const double> numer,
                 std::span<const double> denom);

/// Re-expresses `posterior`, computed under `from_priors`, under `to_priors`
/// with the likelihoods held fixed.
ProbVec target_shift(const ProbVec& posterior, const ProbVec& from_priors,
                     const ProbVec& to_priors);

/// Index of the largest entry; ties go to the lowest index.
ClassIndex decide_map(std::span<const double> posterior);
inline ClassIndex decide_map(const ProbVec& posterior) { return decide_map(posterior.values()); }

/// Index of the largest posterior/prior ratio; ties go to the lowest index.
ClassIndex decide_mle(std::span<const double> posterior, std::span<const double> priors);
inline ClassIndex decide_mle(const ProbVec& posterior, const ProbVec& priors) {
  return decide_mle(posterior.values(), priors.values());
}

/// Coordinates of a distribution inside a regular (K-1)-simplex centred at
/// the origin. Vertex k of the simplex stands for class k.
struct SimplexPoint {
  std::vector<double> coords;
};

SimplexPoint simplex_embed(const ProbVec& p);
ProbVec simplex_project(const SimplexPoint& s, std::size_t class_count);

/// Projection of `s` onto the axis through vertex `k` orthogonal to the
/// opposite face, scaled so the face maps to 0 and the vertex to 1.
double axis_projection(const SimplexPoint& s, std::size_t class_count, std::size_t k);

/// Position of vertex k in the embedding (i.e. simplex_embed(one_hot(k))).
SimplexPoint simplex_vertex(std::size_t class_count, std::size_t k);

double l1_distance(std::span<const double> a, std::span<const double> b);

}  // namespace mixda
