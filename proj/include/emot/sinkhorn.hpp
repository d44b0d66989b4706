#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "emot/common.hpp"
#include "emot/measures.hpp"
#include "emot/parallel.hpp"

namespace emot {

// Dense n x m cost matrix; +inf entries are forbidden pairs.
struct CostMatrix {
  std::size_t n = 0;
  std::size_t m = 0;
  std::vector<double> values;

  CostMatrix() = default;
  CostMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : n(rows), m(cols), values(rows * cols, fill) {}
  CostMatrix(std::size_t rows, std::size_t cols, std::vector<double> v) : n(rows), m(cols), values(std::move(v)) {
    if (values.size() != n * m) fail(ErrorCode::DimensionMismatch, "cost values do not match n*m");
  }

  double operator()(std::size_t i, std::size_t j) const { return values[i * m + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values[i * m + j]; }

  bool all_finite() const {
    for (double c : values) {
      if (!std::isfinite(c)) return false;
    }
    return true;
  }
};

inline CostMatrix distance_matrix(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  if (mu.dim() != nu.dim()) fail(ErrorCode::DimensionMismatch, "measures live in different dimensions");
  CostMatrix c(mu.size(), nu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    for (std::size_t j = 0; j < nu.size(); ++j) c(i, j) = euclidean(mu.point(i), nu.point(j));
  }
  return c;
}

struct SinkhornConfig {
  double eps = 1.0;
  double tol_marginal = 1e-9;
  std::size_t max_iter = 200000;
  // Decreasing regularisation values ending at eps; empty means cold start.
  std::vector<double> eps_schedule;
  // Marginal target for intermediate schedule stages.
  double stage_tol = 1e-6;
  unsigned threads = 1;
  bool keep_raw_plan = false;
  std::ostream* trace = nullptr;
};

struct SinkhornResult {
  std::vector<double> u;
  std::vector<double> v;
  Plan plan;
  std::optional<Plan> raw_plan;
  std::size_t iters = 0;
  // L1 marginal error of the Gibbs iterate before rounding.
  double marginal_err = 0.0;
  // L1 marginal error after rounding.
  double rounded_marginal_err = 0.0;
  double objective = 0.0;
  double raw_objective = 0.0;
  bool converged = false;
  // Set when max_iter was hit with marginal_err > 10 * tol_marginal.
  bool nonconvergence_warning = false;
};

namespace detail {

inline void check_feasible(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostMatrix& cost) {
  if (cost.n != mu.size() || cost.m != nu.size()) {
    fail(ErrorCode::DimensionMismatch, "cost matrix shape does not match the measures");
  }
  std::vector<char> col_ok(cost.m, 0);
  for (std::size_t i = 0; i < cost.n; ++i) {
    bool row_ok = false;
    for (std::size_t j = 0; j < cost.m; ++j) {
      if (!std::isfinite(cost(i, j))) continue;
      if (nu.weight(j) > 0.0) row_ok = true;
      if (mu.weight(i) > 0.0) col_ok[j] = 1;
    }
    if (!row_ok && mu.weight(i) > 0.0) {
      fail(ErrorCode::InfeasibleSupport, "row " + std::to_string(i) + " has no finite admissible cost");
    }
  }
  for (std::size_t j = 0; j < cost.m; ++j) {
    if (!col_ok[j] && nu.weight(j) > 0.0) {
      fail(ErrorCode::InfeasibleSupport, "column " + std::to_string(j) + " has no finite admissible cost");
    }
  }
}

inline std::vector<double> safe_log(const std::vector<double>& w) {
  std::vector<double> out(w.size());
  for (std::size_t k = 0; k < w.size(); ++k) out[k] = w[k] > 0.0 ? std::log(w[k]) : -kInf;
  return out;
}

// u_i <- -eps * log sum_j exp(lognu_j + (v_j - c_ij) / eps); returns the L1
// row error of the iterate before the update.
inline double update_rows(const CostMatrix& cost, const std::vector<double>& lognu, const std::vector<double>& v,
                          const std::vector<double>& mu, double eps, unsigned threads, std::vector<double>& u) {
  const double inv = 1.0 / eps;
  std::vector<double> shift(cost.m);
  for (std::size_t j = 0; j < cost.m; ++j) shift[j] = lognu[j] + v[j] * inv;
  std::vector<double> err(cost.n, 0.0);
  parallel_for(cost.n, threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const double* c = cost.values.data() + i * cost.m;
      double mx = -kInf;
      for (std::size_t j = 0; j < cost.m; ++j) {
        const double a = shift[j] - c[j] * inv;
        if (a > mx) mx = a;
      }
      double s = 0.0;
      for (std::size_t j = 0; j < cost.m; ++j) {
        const double a = shift[j] - c[j] * inv;
        if (a > -kInf) s += std::exp(a - mx);
      }
      const double unew = -eps * (mx + std::log(s));
      if (mu[i] > 0.0) err[i] = mu[i] * std::abs(std::expm1((u[i] - unew) * inv));
      u[i] = unew;
    }
  });
  return pairwise_sum(err);
}

inline void update_cols(const CostMatrix& cost, const std::vector<double>& logmu, const std::vector<double>& u,
                        double eps, unsigned threads, std::vector<double>& v) {
  const double inv = 1.0 / eps;
  std::vector<double> shift(cost.n);
  for (std::size_t i = 0; i < cost.n; ++i) shift[i] = logmu[i] + u[i] * inv;
  parallel_for(cost.m, threads, [&](std::size_t b, std::size_t e) {
    const std::size_t w = e - b;
    std::vector<double> mx(w, -kInf);
    std::vector<double> s(w, 0.0);
    for (std::size_t i = 0; i < cost.n; ++i) {
      const double* c = cost.values.data() + i * cost.m + b;
      const double si = shift[i];
      for (std::size_t j = 0; j < w; ++j) {
        const double a = si - c[j] * inv;
        if (a > mx[j]) mx[j] = a;
      }
    }
    for (std::size_t i = 0; i < cost.n; ++i) {
      const double* c = cost.values.data() + i * cost.m + b;
      const double si = shift[i];
      for (std::size_t j = 0; j < w; ++j) {
        const double a = si - c[j] * inv;
        if (a > -kInf) s[j] += std::exp(a - mx[j]);
      }
    }
    for (std::size_t j = 0; j < w; ++j) v[b + j] = -eps * (mx[j] + std::log(s[j]));
  });
}

inline std::vector<double> gibbs_weights(const CostMatrix& cost, const std::vector<double>& logmu,
                                         const std::vector<double>& lognu, const std::vector<double>& u,
                                         const std::vector<double>& v, double eps) {
  const double inv = 1.0 / eps;
  std::vector<double> p(cost.n * cost.m, 0.0);
  for (std::size_t i = 0; i < cost.n; ++i) {
    for (std::size_t j = 0; j < cost.m; ++j) {
      const double c = cost(i, j);
      if (!std::isfinite(c)) continue;
      const double a = logmu[i] + lognu[j] + (u[i] + v[j] - c) * inv;
      p[i * cost.m + j] = a > -kInf ? std::exp(a) : 0.0;
    }
  }
  return p;
}

}  // namespace detail

// Repairs a nearly feasible dense plan to the exact marginals: rows scaled
// down to their targets, then columns, then the leftover mass added as a
// rank-one term. Forbidden (+inf cost) pairs never receive mass; when they
// exist the leftover term is balanced by matrix scaling on the admissible
// pattern instead of being added as a plain outer product.
inline void round_to_marginals(std::vector<double>& p, const CostMatrix& cost, const std::vector<double>& mu,
                               const std::vector<double>& nu) {
  const std::size_t n = mu.size();
  const std::size_t m = nu.size();
  std::vector<double> rs(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    rs[i] = pairwise_sum(std::span<const double>(p.data() + i * m, m));
    if (rs[i] > mu[i] && rs[i] > 0.0) {
      const double s = mu[i] / rs[i];
      for (std::size_t j = 0; j < m; ++j) p[i * m + j] *= s;
    }
  }
  std::vector<double> cs(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) cs[j] += p[i * m + j];
  }
  for (std::size_t j = 0; j < m; ++j) {
    if (cs[j] > nu[j] && cs[j] > 0.0) {
      const double s = nu[j] / cs[j];
      for (std::size_t i = 0; i < n; ++i) p[i * m + j] *= s;
    }
  }
  std::vector<double> r(n), c(m);
  for (std::size_t i = 0; i < n; ++i) {
    r[i] = std::max(0.0, mu[i] - pairwise_sum(std::span<const double>(p.data() + i * m, m)));
  }
  std::fill(cs.begin(), cs.end(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) cs[j] += p[i * m + j];
  }
  for (std::size_t j = 0; j < m; ++j) c[j] = std::max(0.0, nu[j] - cs[j]);
  const double delta = pairwise_sum(r);
  const double delta_c = pairwise_sum(c);
  if (delta <= 0.0 || delta_c <= 0.0) return;

  if (cost.all_finite()) {
    for (std::size_t i = 0; i < n; ++i) {
      if (r[i] == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) p[i * m + j] += r[i] * c[j] / delta;
    }
    return;
  }

  // Residual transport restricted to admissible pairs.
  std::vector<double> e(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (std::isfinite(cost(i, j))) e[i * m + j] = r[i] * c[j];
    }
  }
  double prev = kInf;
  for (int it = 0; it < 2000; ++it) {
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += e[i * m + j];
      if (s > 0.0) {
        const double f = r[i] / s;
        for (std::size_t j = 0; j < m; ++j) e[i * m + j] *= f;
      }
    }
    std::fill(cs.begin(), cs.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) cs[j] += e[i * m + j];
    }
    for (std::size_t j = 0; j < m; ++j) {
      if (cs[j] > 0.0) {
        const double f = c[j] / cs[j];
        for (std::size_t i = 0; i < n; ++i) e[i * m + j] *= f;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += e[i * m + j];
      err += std::abs(s - r[i]);
    }
    // Noise-level residuals need not balance on the pattern; stop on stall.
    if (err <= 1e-6 * delta || err >= 0.999 * prev) break;
    prev = err;
  }
  for (std::size_t k = 0; k < p.size(); ++k) p[k] += e[k];
}

// Cost plus eps * H(p | mu (x) nu) of a dense plan.
inline double dense_objective(const Plan& p, const CostMatrix& cost, double eps) {
  const double transport = reduce_plan(p, [&](std::size_t i, std::size_t j, double w) { return w * cost(i, j); });
  return transport + eps * rel_entropy(p);
}

// Log-domain Sinkhorn for min <c, P> + eps H(P | mu (x) nu) over couplings
// of (mu, nu). Duals follow P_ij = mu_i nu_j exp((u_i + v_j - c_ij) / eps).
inline SinkhornResult solve(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostMatrix& cost,
                            const SinkhornConfig& cfg) {
  if (!(cfg.eps > 0.0)) fail(ErrorCode::InvalidArgument, "eps must be positive");
  std::vector<double> stages = cfg.eps_schedule;
  if (!stages.empty()) {
    for (std::size_t k = 1; k < stages.size(); ++k) {
      if (!(stages[k] < stages[k - 1])) fail(ErrorCode::InvalidArgument, "eps schedule must be strictly decreasing");
    }
    if (stages.back() != cfg.eps) fail(ErrorCode::InvalidArgument, "eps schedule must end at eps");
  } else {
    stages.push_back(cfg.eps);
  }
  detail::check_feasible(mu, nu, cost);

  const auto logmu = detail::safe_log(mu.weights());
  const auto lognu = detail::safe_log(nu.weights());
  SinkhornResult res;
  res.u.assign(mu.size(), 0.0);
  res.v.assign(nu.size(), 0.0);
  if (cfg.trace) *cfg.trace << "stage_eps,iteration,marginal_err\n";

  double err = kInf;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const double eps = stages[s];
    const bool last = s + 1 == stages.size();
    const double tol = last ? cfg.tol_marginal : std::max(cfg.tol_marginal, cfg.stage_tol);
    detail::update_cols(cost, logmu, res.u, eps, cfg.threads, res.v);
    err = kInf;
    while (res.iters < cfg.max_iter) {
      auto u_prev = res.u;
      err = detail::update_rows(cost, lognu, res.v, mu.weights(), eps, cfg.threads, res.u);
      ++res.iters;
      if (cfg.trace) *cfg.trace << format_double(eps) << ',' << res.iters << ',' << format_double(err) << '\n';
      if (err <= tol) {
        // The iterate with exact columns already meets the target.
        res.u = std::move(u_prev);
        break;
      }
      detail::update_cols(cost, logmu, res.u, eps, cfg.threads, res.v);
    }
  }
  res.marginal_err = err;
  res.converged = err <= cfg.tol_marginal;
  res.nonconvergence_warning = !res.converged && err > 10.0 * cfg.tol_marginal;

  auto weights = detail::gibbs_weights(cost, logmu, lognu, res.u, res.v, cfg.eps);
  {
    Plan raw = Plan::dense(mu, nu, weights);
    res.raw_objective = dense_objective(raw, cost, cfg.eps);
    if (cfg.keep_raw_plan) res.raw_plan = std::move(raw);
  }
  round_to_marginals(weights, cost, mu.weights(), nu.weights());
  res.plan = Plan::dense(mu, nu, std::move(weights));
  res.rounded_marginal_err = res.plan.marginal_error();
  res.objective = dense_objective(res.plan, cost, cfg.eps);
  return res;
}

inline double eot_value(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostMatrix& cost, double eps) {
  SinkhornConfig cfg;
  cfg.eps = eps;
  return solve(mu, nu, cost, cfg).objective;
}

}  // namespace emot
