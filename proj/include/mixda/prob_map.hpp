#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "mixda/error.hpp"
#include "mixda/prob_core.hpp"

namespace mixda {

struct ClassAxis {};
struct DomainAxis {};

/// Dense height x width grid of distributions, row-major with the channel
/// axis innermost (H x W x C). The tag distinguishes class posteriors from
/// domain posteriors at the type level.
template <class Axis>
class ProbMap {
 public:
  ProbMap() = default;
  ProbMap(std::size_t height, std::size_t width, std::size_t channels)
      : height_(height), width_(width), channels_(channels), data_(height * width * channels, 0.0) {
    if (height == 0 || width == 0 || channels == 0)
      throw Error(Errc::DimensionMismatch, "map dimensions must be positive");
  }
  ProbMap(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> data)
      : ProbMap(height, width, channels) {
    if (data.size() != data_.size())
      throw Error(Errc::DimensionMismatch, "map payload does not match its dimensions");
    data_ = std::move(data);
  }

  /// A map whose every pixel is `value`.
  static ProbMap filled(std::size_t height, std::size_t width, const ProbVec& value) {
    ProbMap m(height, width, value.size());
    for (std::size_t i = 0; i < m.pixel_count(); ++i)
      std::copy(value.begin(), value.end(), m.data_.begin() + static_cast<std::ptrdiff_t>(i * m.channels_));
    return m;
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept { return height_ * width_; }

  std::span<const double> pixel(std::size_t index) const {
    return {data_.data() + index * channels_, channels_};
  }
  std::span<double> pixel(std::size_t index) { return {data_.data() + index * channels_, channels_}; }
  std::span<const double> pixel(std::size_t y, std::size_t x) const { return pixel(y * width_ + x); }
  std::span<double> pixel(std::size_t y, std::size_t x) { return pixel(y * width_ + x); }

  ProbVec at(std::size_t y, std::size_t x) const {
    auto p = pixel(y, x);
    return ProbVec::assume_normalized({p.begin(), p.end()});
  }

  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

  bool same_shape(std::size_t height, std::size_t width) const noexcept {
    return height_ == height && width_ == width;
  }

  friend bool operator==(const ProbMap&, const ProbMap&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<double> data_;
};

using PosteriorMap = ProbMap<ClassAxis>;
using DiscriminatorMap = ProbMap<DomainAxis>;

/// Per-pixel class decisions, row-major.
struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<ClassIndex> labels;

  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

}  // namespace mixda
