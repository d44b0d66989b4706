#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "emot/common.hpp"

namespace emot {

struct Piece1D {
  double lo = 0.0;
  double hi = 0.0;
  double level = 0.0;

  double length() const { return hi - lo; }
  double mass() const { return level * (hi - lo); }
};

// Piecewise-constant probability density on the line; pieces kept sorted by
// their left endpoint.
class PiecewiseConstantDensity1D {
 public:
  PiecewiseConstantDensity1D() = default;
  explicit PiecewiseConstantDensity1D(std::vector<Piece1D> pieces) : pieces_(std::move(pieces)) {
    std::sort(pieces_.begin(), pieces_.end(),
              [](const Piece1D& a, const Piece1D& b) { return a.lo < b.lo; });
  }

  const std::vector<Piece1D>& pieces() const { return pieces_; }
  bool empty() const { return pieces_.empty(); }

  double mass() const {
    double m = 0.0;
    for (const auto& p : pieces_) m += p.mass();
    return m;
  }

  double support_min() const { return pieces_.empty() ? 0.0 : pieces_.front().lo; }
  double support_max() const {
    double m = -kInf;
    for (const auto& p : pieces_) m = std::max(m, p.hi);
    return m;
  }

  double cdf(double t) const {
    double acc = 0.0;
    for (const auto& p : pieces_) {
      if (t <= p.lo) continue;
      acc += p.level * (std::min(t, p.hi) - p.lo);
    }
    return acc;
  }

  // First moment, exact for piecewise-constant levels.
  double mean() const {
    double acc = 0.0;
    for (const auto& p : pieces_) acc += p.mass() * 0.5 * (p.lo + p.hi);
    return acc;
  }

  std::vector<double> breakpoints() const {
    std::vector<double> out;
    out.reserve(2 * pieces_.size());
    for (const auto& p : pieces_) {
      out.push_back(p.lo);
      out.push_back(p.hi);
    }
    return out;
  }

  // Index of the piece containing t (half-open), or -1.
  int piece_of(double t) const {
    for (std::size_t k = 0; k < pieces_.size(); ++k) {
      if (t >= pieces_[k].lo && t < pieces_[k].hi) return static_cast<int>(k);
    }
    return -1;
  }

  PiecewiseConstantDensity1D shifted(double s) const {
    auto out = pieces_;
    for (auto& p : out) {
      p.lo += s;
      p.hi += s;
    }
    return PiecewiseConstantDensity1D(std::move(out));
  }

  std::vector<std::string> violations(double mass_tol = 1e-12) const {
    std::vector<std::string> out;
    if (pieces_.empty()) out.push_back("density has no pieces");
    for (std::size_t k = 0; k < pieces_.size(); ++k) {
      const auto& p = pieces_[k];
      if (!(p.lo < p.hi)) out.push_back("piece " + std::to_string(k) + " has lo >= hi");
      if (!(p.level > 0.0)) out.push_back("piece " + std::to_string(k) + " has nonpositive level");
      if (k > 0 && pieces_[k - 1].hi > p.lo) {
        out.push_back("pieces " + std::to_string(k - 1) + " and " + std::to_string(k) + " overlap");
      }
    }
    if (!pieces_.empty() && std::abs(mass() - 1.0) > mass_tol) {
      out.push_back("total mass " + format_double(mass()) + " differs from 1");
    }
    return out;
  }

 private:
  std::vector<Piece1D> pieces_;
};

struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  std::size_t dim() const { return lo.size(); }
  double volume() const {
    double v = 1.0;
    for (std::size_t k = 0; k < lo.size(); ++k) v *= hi[k] - lo[k];
    return v;
  }
  bool overlaps(const Box& other) const {
    for (std::size_t k = 0; k < lo.size(); ++k) {
      if (hi[k] <= other.lo[k] || other.hi[k] <= lo[k]) return false;
    }
    return true;
  }
};

struct BoxPiece {
  Box box;
  double level = 0.0;

  double mass() const { return level * box.volume(); }
};

// Piecewise-constant density over pairwise disjoint axis-aligned boxes.
class BoxDensity {
 public:
  BoxDensity() = default;
  BoxDensity(std::size_t dim, std::vector<BoxPiece> pieces) : dim_(dim), pieces_(std::move(pieces)) {}

  static BoxDensity unit_cube(std::size_t dim) {
    Box b{std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
    return BoxDensity(dim, {BoxPiece{std::move(b), 1.0}});
  }

  std::size_t dim() const { return dim_; }
  const std::vector<BoxPiece>& pieces() const { return pieces_; }

  double mass() const {
    double m = 0.0;
    for (const auto& p : pieces_) m += p.mass();
    return m;
  }

  std::vector<std::string> violations(double mass_tol = 1e-12) const {
    std::vector<std::string> out;
    if (pieces_.empty()) out.push_back("box density has no pieces");
    for (std::size_t k = 0; k < pieces_.size(); ++k) {
      const auto& b = pieces_[k].box;
      if (b.lo.size() != dim_ || b.hi.size() != dim_) {
        out.push_back("box " + std::to_string(k) + " has wrong dimension");
        continue;
      }
      for (std::size_t a = 0; a < dim_; ++a) {
        if (!(b.lo[a] < b.hi[a])) out.push_back("box " + std::to_string(k) + " is degenerate");
      }
      if (!(pieces_[k].level > 0.0)) out.push_back("box " + std::to_string(k) + " has nonpositive level");
      for (std::size_t l = 0; l < k; ++l) {
        if (pieces_[l].box.dim() == dim_ && pieces_[l].box.overlaps(b)) {
          out.push_back("boxes " + std::to_string(l) + " and " + std::to_string(k) + " overlap");
        }
      }
    }
    if (!pieces_.empty() && std::abs(mass() - 1.0) > mass_tol) {
      out.push_back("total mass " + format_double(mass()) + " differs from 1");
    }
    return out;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<BoxPiece> pieces_;
};

// Marginal pair with product structure f = f1(x_axis) rho(x_perp),
// g = g1(x_axis) rho(x_perp); transport rays are parallel to the axis and
// u(x) = -x_axis is a Kantorovich potential.
struct ProductInstance {
  int d = 2;
  int axis = 0;
  PiecewiseConstantDensity1D f1;
  PiecewiseConstantDensity1D g1;
  BoxDensity rho;
  double gap_min = 0.5;
};

}  // namespace emot
