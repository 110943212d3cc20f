#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pfdm/error.hpp"

namespace pfdm {

enum class Boundary { wrap, clip };

inline const char* to_string(Boundary b) { return b == Boundary::wrap ? "wrap" : "clip"; }

inline Boundary boundary_from_string(const std::string& s) {
  if (s == "wrap") return Boundary::wrap;
  if (s == "clip") return Boundary::clip;
  throw InvalidInput("unknown boundary policy '" + s + "'");
}

// One dimension of a uniform rectangular discretization. Bin k covers
// [lower + k*width, lower + (k+1)*width); the last bin of a clip axis also
// owns the upper edge.
struct Axis {
  double lower = 0.0;
  double upper = 1.0;
  std::size_t bins = 1;
  Boundary boundary = Boundary::clip;

  double width() const { return (upper - lower) / static_cast<double>(bins); }
  double center(std::size_t k) const {
    return lower + (static_cast<double>(k) + 0.5) * width();
  }

  // Applies the boundary policy; wrap maps into [lower, upper).
  double map(double x) const {
    if (boundary == Boundary::wrap) {
      const double range = upper - lower;
      double y = std::fmod(x - lower, range);
      if (y < 0.0) y += range;
      if (y >= range) y = 0.0;
      return lower + y;
    }
    if (x < lower) return lower;
    if (x > upper) return upper;
    return x;
  }

  bool contains(double x) const {
    return boundary == Boundary::wrap || (x >= lower && x <= upper);
  }

  std::size_t bin_of(double x) const {
    const double y = map(x);
    const double pos = (y - lower) * static_cast<double>(bins) / (upper - lower);
    if (pos <= 0.0) return 0;
    const auto k = static_cast<std::size_t>(std::floor(pos));
    return k >= bins ? bins - 1 : k;
  }

  bool operator==(const Axis&) const = default;
};

// Uniform grid over a box, flattened row-major (last axis fastest).
class Grid {
 public:
  Grid() = default;

  Grid(std::string name, std::vector<Axis> axes) : name_(std::move(name)), axes_(std::move(axes)) {
    if (axes_.empty()) throw InvalidInput("grid '" + name_ + "' has no dimensions");
    for (const auto& a : axes_) {
      if (!std::isfinite(a.lower) || !std::isfinite(a.upper) || !(a.lower < a.upper))
        throw InvalidInput("grid '" + name_ + "': lower bound must be below upper bound");
      if (a.bins < 1) throw InvalidInput("grid '" + name_ + "': bin count must be >= 1");
    }
    size_ = 1;
    for (const auto& a : axes_) size_ *= a.bins;
  }

  // n cells over [0, n), used to index finite state/action sets.
  static Grid indexed(std::string name, std::size_t n) {
    return Grid(std::move(name), {Axis{0.0, static_cast<double>(n), n, Boundary::clip}});
  }

  // Cartesian product; the flat index of (a, b) is a * b.size() + b.
  static Grid product(std::string name, const Grid& a, const Grid& b) {
    std::vector<Axis> axes = a.axes_;
    axes.insert(axes.end(), b.axes_.begin(), b.axes_.end());
    return Grid(std::move(name), std::move(axes));
  }

  const std::string& name() const { return name_; }
  std::size_t dims() const { return axes_.size(); }
  std::size_t size() const { return size_; }
  const Axis& axis(std::size_t d) const { return axes_.at(d); }
  const std::vector<Axis>& axes() const { return axes_; }

  std::size_t flatten(std::span<const std::size_t> idx) const {
    if (idx.size() != axes_.size()) throw InvalidInput("index dimension mismatch on grid '" + name_ + "'");
    std::size_t flat = 0;
    for (std::size_t d = 0; d < axes_.size(); ++d) {
      if (idx[d] >= axes_[d].bins) throw InvalidInput("bin index out of range on grid '" + name_ + "'");
      flat = flat * axes_[d].bins + idx[d];
    }
    return flat;
  }

  std::vector<std::size_t> unflatten(std::size_t flat) const {
    if (flat >= size_) throw InvalidInput("cell index out of range on grid '" + name_ + "'");
    std::vector<std::size_t> idx(axes_.size());
    for (std::size_t d = axes_.size(); d-- > 0;) {
      idx[d] = flat % axes_[d].bins;
      flat /= axes_[d].bins;
    }
    return idx;
  }

  std::size_t quantize(std::span<const double> point) const {
    if (point.size() != axes_.size())
      throw InvalidInput("point dimension " + std::to_string(point.size()) + " does not match grid '" + name_ +
                         "' of dimension " + std::to_string(axes_.size()));
    std::size_t flat = 0;
    for (std::size_t d = 0; d < axes_.size(); ++d) {
      if (!std::isfinite(point[d])) throw InvalidInput("non-finite coordinate passed to quantize");
      flat = flat * axes_[d].bins + axes_[d].bin_of(point[d]);
    }
    return flat;
  }

  std::size_t quantize(std::initializer_list<double> point) const {
    return quantize(std::span<const double>(point.begin(), point.size()));
  }

  std::vector<double> center_of(std::size_t flat) const {
    const auto idx = unflatten(flat);
    std::vector<double> c(axes_.size());
    for (std::size_t d = 0; d < axes_.size(); ++d) c[d] = axes_[d].center(idx[d]);
    return c;
  }

  // True when every clip coordinate lies inside its axis box.
  bool contains(std::span<const double> point) const {
    if (point.size() != axes_.size()) return false;
    for (std::size_t d = 0; d < axes_.size(); ++d)
      if (!axes_[d].contains(point[d])) return false;
    return true;
  }

  // Same axes; names are labels only.
  bool same_shape(const Grid& other) const { return axes_ == other.axes_; }

 private:
  std::string name_;
  std::vector<Axis> axes_;
  std::size_t size_ = 0;
};

inline void require_same_shape(const Grid& a, const Grid& b, const char* what) {
  if (!a.same_shape(b))
    throw GridMismatch(std::string(what) + ": grid '" + a.name() + "' does not match grid '" + b.name() + "'");
}

}  // namespace pfdm
