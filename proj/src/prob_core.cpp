#include "mixda/prob_core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

namespace mixda {

namespace {

std::string entry_text(std::size_t i, double v) {
  std::ostringstream os;
  os << "entry " << i << " = " << v;
  return os.str();
}

// Helmert contrast coefficient: row j in [1, K) of an orthonormal basis of
// the sum-zero hyperplane, evaluated at column i.
double helmert(std::size_t j, std::size_t i) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(j) * static_cast<double>(j + 1));
  if (i < j) return scale;
  if (i == j) return -static_cast<double>(j) * scale;
  return 0.0;
}

}  // namespace

ProbVec::ProbVec(std::initializer_list<double> values)
    : ProbVec(from_probabilities(std::vector<double>(values))) {}

ProbVec::ProbVec(std::vector<double> values) : ProbVec(from_probabilities(values)) {}

ProbVec ProbVec::from_probabilities(std::span<const double> values, double tolerance) {
  if (values.empty()) throw Error(Errc::DimensionMismatch, "empty probability vector");
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] >= -kNegativeSlack)) throw Error(Errc::NegativeMass, entry_text(i, values[i]));
    if (values[i] > 0.0) sum += values[i];
  }
  if (!(std::abs(sum - 1.0) <= tolerance)) {
    std::ostringstream os;
    os << "entries sum to " << sum << ", tolerance " << tolerance;
    throw Error(Errc::NotNormalized, os.str());
  }
  return normalize(values);
}

ProbVec ProbVec::assume_normalized(std::vector<double> values) {
  ProbVec p;
  p.values_ = std::move(values);
  return p;
}

ProbVec ProbVec::uniform(std::size_t size) {
  if (size == 0) throw Error(Errc::DimensionMismatch, "uniform distribution over zero entries");
  return assume_normalized(std::vector<double>(size, 1.0 / static_cast<double>(size)));
}

ProbVec ProbVec::one_hot(std::size_t size, std::size_t index) {
  if (index >= size) throw Error(Errc::DimensionMismatch, "one-hot index out of range");
  std::vector<double> v(size, 0.0);
  v[index] = 1.0;
  return assume_normalized(std::move(v));
}

bool ProbVec::strictly_positive() const noexcept {
  for (double v : values_)
    if (!(v > 0.0)) return false;
  return true;
}

ProbVec normalize(std::span<const double> raw) {
  if (raw.empty()) throw Error(Errc::DimensionMismatch, "cannot normalize an empty vector");
  std::vector<double> out(raw.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double v = raw[i];
    if (!(v >= -kNegativeSlack)) throw Error(Errc::NegativeMass, entry_text(i, v));
    out[i] = v > 0.0 ? v : 0.0;
    sum += out[i];
  }
  if (!(sum > 0.0) || !std::isfinite(sum)) throw Error(Errc::AllZero, "no positive mass to normalize");
  for (double& v : out) v /= sum;
  return ProbVec::assume_normalized(std::move(out));
}

ProbVec reweight(std::span<const double> p, std::span<const double> numer,
                 std::span<const double> denom) {
  if (p.size() != numer.size() || p.size() != denom.size())
    throw Error(Errc::DimensionMismatch, "shift operands differ in length");
  std::vector<double> out(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (denom[k] > 0.0) {
      out[k] = numer[k] / denom[k] * p[k];
    } else if (numer[k] == 0.0 && p[k] == 0.0) {
      out[k] = 0.0;
    } else {
      throw Error(Errc::ZeroPrior, "reference prior " + std::to_string(k) + " is zero");
    }
  }
  return normalize(out);
}

ProbVec target_shift(const ProbVec& posterior, const ProbVec& from_priors,
                     const ProbVec& to_priors) {
  return reweight(posterior.values(), to_priors.values(), from_priors.values());
}

ClassIndex decide_map(std::span<const double> posterior) {
  ClassIndex best = 0;
  for (std::size_t k = 1; k < posterior.size(); ++k)
    if (posterior[k] > posterior[best]) best = k;
  return best;
}

ClassIndex decide_mle(std::span<const double> posterior, std::span<const double> priors) {
  if (posterior.size() != priors.size())
    throw Error(Errc::DimensionMismatch, "posterior and priors differ in length");
  ClassIndex best = 0;
  double best_ratio = -1.0;
  for (std::size_t k = 0; k < posterior.size(); ++k) {
    double ratio = 0.0;
    if (priors[k] > 0.0) {
      ratio = posterior[k] / priors[k];
    } else if (posterior[k] > 0.0) {
      throw Error(Errc::ZeroPrior, "prior " + std::to_string(k) + " is zero");
    }
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best = k;
    }
  }
  return best;
}

SimplexPoint simplex_embed(const ProbVec& p) {
  const std::size_t K = p.size();
  if (K < 2) throw Error(Errc::DimensionMismatch, "simplex embedding needs at least 2 classes");
  SimplexPoint s{std::vector<double>(K - 1, 0.0)};
  for (std::size_t j = 1; j < K; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i <= j; ++i) acc += helmert(j, i) * p[i];
    s.coords[j - 1] = acc;
  }
  return s;
}

ProbVec simplex_project(const SimplexPoint& s, std::size_t class_count) {
  if (class_count < 2 || s.coords.size() != class_count - 1)
    throw Error(Errc::DimensionMismatch, "simplex point has wrong dimension");
  std::vector<double> p(class_count);
  for (std::size_t k = 0; k < class_count; ++k) p[k] = axis_projection(s, class_count, k);
  return ProbVec::from_probabilities(p);
}

double axis_projection(const SimplexPoint& s, std::size_t class_count, std::size_t k) {
  if (class_count < 2 || s.coords.size() != class_count - 1 || k >= class_count)
    throw Error(Errc::DimensionMismatch, "simplex point has wrong dimension");
  double v = 1.0 / static_cast<double>(class_count);
  for (std::size_t j = std::max<std::size_t>(k, 1); j < class_count; ++j)
    v += helmert(j, k) * s.coords[j - 1];
  return v;
}

SimplexPoint simplex_vertex(std::size_t class_count, std::size_t k) {
  return simplex_embed(ProbVec::one_hot(class_count, k));
}

double l1_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(Errc::DimensionMismatch, "L1 distance of unequal lengths");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
  return d;
}

}  // namespace mixda
