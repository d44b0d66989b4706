#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "emot/common.hpp"
#include "emot/density.hpp"

namespace emot {

// Weighted atoms in R^dim, stored as a flat coordinate array.
class DiscreteMeasure {
 public:
  DiscreteMeasure() = default;
  DiscreteMeasure(std::size_t dim, std::vector<double> coords, std::vector<double> weights)
      : dim_(dim), coords_(std::move(coords)), weights_(std::move(weights)) {
    if (dim_ == 0 || coords_.size() != dim_ * weights_.size()) {
      fail(ErrorCode::DimensionMismatch, "coordinate array does not match dim * size");
    }
    for (double w : weights_) {
      if (!(w >= 0.0)) fail(ErrorCode::InvalidArgument, "negative atom weight");
    }
  }

  // 1D convenience constructor.
  static DiscreteMeasure on_line(std::vector<double> positions, std::vector<double> weights) {
    return DiscreteMeasure(1, std::move(positions), std::move(weights));
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return weights_.size(); }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& coords() const { return coords_; }
  double weight(std::size_t i) const { return weights_[i]; }
  std::span<const double> point(std::size_t i) const {
    return std::span<const double>(coords_).subspan(i * dim_, dim_);
  }
  // First coordinate; the position for 1D measures.
  double position(std::size_t i) const { return coords_[i * dim_]; }

  double total_mass() const { return pairwise_sum(weights_); }

  bool operator==(const DiscreteMeasure&) const = default;

 private:
  std::size_t dim_ = 1;
  std::vector<double> coords_;
  std::vector<double> weights_;
};

struct PlanEntry {
  std::size_t i = 0;
  std::size_t j = 0;
  double w = 0.0;
};

// Nonnegative coupling between two discrete measures, dense row-major or
// compressed sparse rows.
class Plan {
 public:
  Plan() = default;

  static Plan dense(DiscreteMeasure row, DiscreteMeasure col, std::vector<double> weights) {
    Plan p;
    if (weights.size() != row.size() * col.size()) {
      fail(ErrorCode::DimensionMismatch, "dense plan weights do not match n*m");
    }
    for (double w : weights) {
      if (!(w >= 0.0)) fail(ErrorCode::InvalidArgument, "negative plan entry");
    }
    p.row_ = std::move(row);
    p.col_ = std::move(col);
    p.dense_ = true;
    p.values_ = std::move(weights);
    return p;
  }

  // Duplicate (i, j) entries are summed.
  static Plan sparse(DiscreteMeasure row, DiscreteMeasure col, std::vector<PlanEntry> entries) {
    Plan p;
    const std::size_t n = row.size();
    const std::size_t m = col.size();
    std::stable_sort(entries.begin(), entries.end(), [](const PlanEntry& a, const PlanEntry& b) {
      return a.i != b.i ? a.i < b.i : a.j < b.j;
    });
    p.row_ptr_.assign(n + 1, 0);
    for (const auto& e : entries) {
      if (e.i >= n || e.j >= m) fail(ErrorCode::DimensionMismatch, "sparse entry out of range");
      if (!(e.w >= 0.0)) fail(ErrorCode::InvalidArgument, "negative plan entry");
      if (!p.col_idx_.empty() && p.last_row_ == e.i && p.col_idx_.back() == e.j) {
        p.values_.back() += e.w;
        continue;
      }
      p.col_idx_.push_back(e.j);
      p.values_.push_back(e.w);
      p.last_row_ = e.i;
      ++p.row_ptr_[e.i + 1];
    }
    for (std::size_t i = 0; i < n; ++i) p.row_ptr_[i + 1] += p.row_ptr_[i];
    p.row_ = std::move(row);
    p.col_ = std::move(col);
    p.dense_ = false;
    return p;
  }

  const DiscreteMeasure& row() const { return row_; }
  const DiscreteMeasure& col() const { return col_; }
  std::size_t rows() const { return row_.size(); }
  std::size_t cols() const { return col_.size(); }
  bool is_dense() const { return dense_; }
  std::size_t stored_entries() const { return values_.size(); }

  // Calls fn(j, w) for every stored entry of row i, in increasing j.
  template <class Fn>
  void for_row(std::size_t i, Fn&& fn) const {
    if (dense_) {
      const std::size_t m = col_.size();
      const double* r = values_.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) fn(j, r[j]);
    } else {
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) fn(col_idx_[k], values_[k]);
    }
  }

  template <class Fn>
  void for_each(Fn&& fn) const {
    for (std::size_t i = 0; i < rows(); ++i) {
      for_row(i, [&](std::size_t j, double w) { fn(i, j, w); });
    }
  }

  double at(std::size_t i, std::size_t j) const {
    if (dense_) return values_[i * col_.size() + j];
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
      if (col_idx_[k] == j) return values_[k];
    }
    return 0.0;
  }

  std::vector<double> to_dense() const {
    std::vector<double> out(rows() * cols(), 0.0);
    for_each([&](std::size_t i, std::size_t j, double w) { out[i * cols() + j] += w; });
    return out;
  }

  std::vector<PlanEntry> entries() const {
    std::vector<PlanEntry> out;
    for_each([&](std::size_t i, std::size_t j, double w) {
      if (w != 0.0) out.push_back({i, j, w});
    });
    return out;
  }

  std::vector<double> row_sums() const {
    std::vector<double> out(rows(), 0.0);
    std::vector<double> buf;
    for (std::size_t i = 0; i < rows(); ++i) {
      buf.clear();
      for_row(i, [&](std::size_t, double w) { buf.push_back(w); });
      out[i] = pairwise_sum(buf);
    }
    return out;
  }

  std::vector<double> col_sums() const {
    std::vector<double> out(cols(), 0.0);
    for_each([&](std::size_t, std::size_t j, double w) { out[j] += w; });
    return out;
  }

  double total_mass() const { return pairwise_sum(row_sums()); }

  // L1 distance of both marginals to the declared row/col weights.
  double marginal_error() const {
    const auto rs = row_sums();
    const auto cs = col_sums();
    double err = 0.0;
    for (std::size_t i = 0; i < rs.size(); ++i) err += std::abs(rs[i] - row_.weight(i));
    for (std::size_t j = 0; j < cs.size(); ++j) err += std::abs(cs[j] - col_.weight(j));
    return err;
  }

 private:
  DiscreteMeasure row_;
  DiscreteMeasure col_;
  bool dense_ = true;
  std::vector<double> values_;
  std::vector<std::size_t> row_ptr_;
  std::vector<std::size_t> col_idx_;
  std::size_t last_row_ = 0;
};

// Sum of term(i, j, w) over stored entries: rows summed pairwise, then the
// row totals pairwise, so the result is reproducible bit for bit.
template <class Term>
double reduce_plan(const Plan& p, Term&& term) {
  std::vector<double> row_tot(p.rows(), 0.0);
  std::vector<double> buf;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    buf.clear();
    p.for_row(i, [&](std::size_t j, double w) {
      if (w != 0.0) buf.push_back(term(i, j, w));
    });
    row_tot[i] = pairwise_sum(buf);
  }
  return pairwise_sum(row_tot);
}

struct GridSpec {
  double h_long = 0.5;
  double h_trans = 0.5;
  std::size_t max_atoms = 20000;
};

inline std::size_t cell_count(double length, double h) {
  const double raw = length / h;
  auto n = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
  return std::max<std::size_t>(n, 1);
}

// Cell-centred midpoint quadrature: each piece is cut into ceil(len / h)
// equal cells, weights level * cell length renormalised to total one.
inline DiscreteMeasure discretize_1d(const PiecewiseConstantDensity1D& profile, double h) {
  if (!(h > 0.0)) fail(ErrorCode::InvalidArgument, "grid spacing must be positive");
  if (profile.empty()) fail(ErrorCode::EmptyDensity, "cannot discretize an empty profile");
  std::vector<double> pos;
  std::vector<double> w;
  for (const auto& p : profile.pieces()) {
    const std::size_t n = cell_count(p.length(), h);
    const double len = p.length() / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) {
      pos.push_back(p.lo + (static_cast<double>(k) + 0.5) * len);
      w.push_back(p.level * len);
    }
  }
  const double total = pairwise_sum(w);
  for (double& x : w) x /= total;
  return DiscreteMeasure::on_line(std::move(pos), std::move(w));
}

// Tensor-grid discretization of a box density; within each box the last
// axis varies fastest.
inline DiscreteMeasure discretize_boxes(const BoxDensity& rho, double h, std::size_t max_atoms = 20000) {
  if (!(h > 0.0)) fail(ErrorCode::InvalidArgument, "grid spacing must be positive");
  if (rho.pieces().empty()) fail(ErrorCode::EmptyDensity, "cannot discretize an empty box density");
  const std::size_t k = rho.dim();
  std::vector<double> coords;
  std::vector<double> w;
  for (const auto& piece : rho.pieces()) {
    std::vector<std::size_t> n(k);
    std::vector<double> len(k);
    std::size_t cells = 1;
    for (std::size_t a = 0; a < k; ++a) {
      n[a] = cell_count(piece.box.hi[a] - piece.box.lo[a], h);
      len[a] = (piece.box.hi[a] - piece.box.lo[a]) / static_cast<double>(n[a]);
      cells *= n[a];
    }
    if (w.size() + cells > max_atoms) {
      fail(ErrorCode::BudgetExceeded, "transverse grid exceeds " + std::to_string(max_atoms) + " atoms");
    }
    double cell_vol = 1.0;
    for (std::size_t a = 0; a < k; ++a) cell_vol *= len[a];
    std::vector<std::size_t> idx(k, 0);
    for (std::size_t c = 0; c < cells; ++c) {
      for (std::size_t a = 0; a < k; ++a) {
        coords.push_back(piece.box.lo[a] + (static_cast<double>(idx[a]) + 0.5) * len[a]);
      }
      w.push_back(piece.level * cell_vol);
      for (std::size_t a = k; a-- > 0;) {
        if (++idx[a] < n[a]) break;
        idx[a] = 0;
      }
    }
  }
  const double total = pairwise_sum(w);
  for (double& x : w) x /= total;
  return DiscreteMeasure(k, std::move(coords), std::move(w));
}

// Embeds a longitudinal coordinate t and transverse point q into R^d.
inline void embed_point(int axis, double t, std::span<const double> q, std::vector<double>& out) {
  std::size_t qi = 0;
  const std::size_t d = q.size() + 1;
  for (std::size_t a = 0; a < d; ++a) {
    out.push_back(static_cast<int>(a) == axis ? t : q[qi++]);
  }
}

// Tensor product of a 1D longitudinal measure with a transverse measure;
// atom index = i * Q + q.
inline DiscreteMeasure tensor_measure(int axis, const DiscreteMeasure& along, const DiscreteMeasure& across) {
  const std::size_t d = across.dim() + 1;
  std::vector<double> coords;
  std::vector<double> w;
  coords.reserve(along.size() * across.size() * d);
  w.reserve(along.size() * across.size());
  for (std::size_t i = 0; i < along.size(); ++i) {
    for (std::size_t q = 0; q < across.size(); ++q) {
      embed_point(axis, along.position(i), across.point(q), coords);
      w.push_back(along.weight(i) * across.weight(q));
    }
  }
  return DiscreteMeasure(d, std::move(coords), std::move(w));
}

inline std::pair<DiscreteMeasure, DiscreteMeasure> discretize_instance(const ProductInstance& inst,
                                                                       const GridSpec& grid) {
  const auto across = discretize_boxes(inst.rho, grid.h_trans, grid.max_atoms);
  const auto src = discretize_1d(inst.f1, grid.h_long);
  const auto tgt = discretize_1d(inst.g1, grid.h_long);
  const std::size_t n = std::max(src.size(), tgt.size()) * across.size();
  if (n > grid.max_atoms) {
    fail(ErrorCode::BudgetExceeded,
         std::to_string(n) + " atoms per marginal exceeds budget " + std::to_string(grid.max_atoms));
  }
  return {tensor_measure(inst.axis, src, across), tensor_measure(inst.axis, tgt, across)};
}

inline double euclidean(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double t = x[k] - y[k];
    s += t * t;
  }
  return std::sqrt(s);
}

// H(plan | row (x) col) with 0 log 0 = 0; returns +inf when the plan charges
// a pair of zero reference mass.
inline double rel_entropy(const Plan& p) {
  const auto& a = p.row().weights();
  const auto& b = p.col().weights();
  return reduce_plan(p, [&](std::size_t i, std::size_t j, double w) { return xlogx_rel(w, a[i] * b[j]); });
}

using CostFn = std::function<double(std::span<const double>, std::span<const double>)>;

inline double transport_cost(const Plan& p, const CostFn& cost) {
  return reduce_plan(p, [&](std::size_t i, std::size_t j, double w) {
    const double c = cost(p.row().point(i), p.col().point(j));
    return std::isinf(c) ? c : w * c;
  });
}

inline double distance_cost(const Plan& p) { return transport_cost(p, euclidean); }

// Test-function dictionary for the witness discrepancy, for z = (x, y) in
// R^{2d}, in this order:
//   [0]                  the constant 1
//   [1, 2d]              z_k
//   next 2d(2d+1)/2      z_k z_l, k <= l, lexicographic in (k, l)
//   [last]               |x - y|
inline std::size_t witness_dictionary_size(std::size_t d) {
  const std::size_t n = 2 * d;
  return 1 + n + n * (n + 1) / 2 + 1;
}

inline void witness_features(std::span<const double> x, std::span<const double> y, std::vector<double>& out) {
  const std::size_t d = x.size();
  const std::size_t n = 2 * d;
  auto z = [&](std::size_t k) { return k < d ? x[k] : y[k - d]; };
  out.clear();
  out.push_back(1.0);
  for (std::size_t k = 0; k < n; ++k) out.push_back(z(k));
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t l = k; l < n; ++l) out.push_back(z(k) * z(l));
  }
  out.push_back(euclidean(x, y));
}

// Integrals of every dictionary function against the plan.
inline std::vector<double> witness_moments(const Plan& p) {
  const std::size_t d = p.row().dim();
  const std::size_t nf = witness_dictionary_size(d);
  std::vector<std::vector<double>> per_row(nf, std::vector<double>(p.rows(), 0.0));
  std::vector<double> feat;
  std::vector<double> acc(nf);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    p.for_row(i, [&](std::size_t j, double w) {
      if (w == 0.0) return;
      witness_features(p.row().point(i), p.col().point(j), feat);
      for (std::size_t f = 0; f < nf; ++f) acc[f] += w * feat[f];
    });
    for (std::size_t f = 0; f < nf; ++f) per_row[f][i] = acc[f];
  }
  std::vector<double> out(nf);
  for (std::size_t f = 0; f < nf; ++f) out[f] = pairwise_sum(per_row[f]);
  return out;
}

inline double witness_discrepancy(const Plan& p1, const Plan& p2) {
  if (p1.row().dim() != p2.row().dim() || p1.col().dim() != p2.col().dim() ||
      p1.row().dim() != p1.col().dim()) {
    fail(ErrorCode::DimensionMismatch, "plans live in different dimensions");
  }
  const auto m1 = witness_moments(p1);
  const auto m2 = witness_moments(p2);
  double best = 0.0;
  for (std::size_t f = 0; f < m1.size(); ++f) best = std::max(best, std::abs(m1[f] - m2[f]));
  return best;
}

inline void write_measure_csv(std::ostream& os, const DiscreteMeasure& m) {
  os << "idx";
  for (std::size_t a = 0; a < m.dim(); ++a) os << ",c" << a;
  os << ",weight\n";
  for (std::size_t i = 0; i < m.size(); ++i) {
    os << i;
    for (double c : m.point(i)) os << ',' << format_double(c);
    os << ',' << format_double(m.weight(i)) << '\n';
  }
}

inline void write_plan_csv(std::ostream& os, const Plan& p) {
  os << "i,j";
  for (std::size_t a = 0; a < p.row().dim(); ++a) os << ",x" << a;
  for (std::size_t a = 0; a < p.col().dim(); ++a) os << ",y" << a;
  os << ",weight\n";
  p.for_each([&](std::size_t i, std::size_t j, double w) {
    if (w == 0.0) return;
    os << i << ',' << j;
    for (double c : p.row().point(i)) os << ',' << format_double(c);
    for (double c : p.col().point(j)) os << ',' << format_double(c);
    os << ',' << format_double(w) << '\n';
  });
}

}  // namespace emot
