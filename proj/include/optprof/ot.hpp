#pragma once

// One-dimensional optimal transport between atom sets: the exact monotone
// coupling, entropy-regularized (Sinkhorn) plans, conditional sampling of
// targets from a plan, and the minibatch transport loss.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "optprof/distributions.hpp"
#include "optprof/error.hpp"
#include "optprof/random.hpp"

namespace optprof {

/// Coupling between two atom sets, stored row-major (source x target).
struct TransportPlan {
  std::vector<Atom> source;
  std::vector<Atom> target;
  std::vector<double> matrix;

  std::size_t rows() const { return source.size(); }
  std::size_t cols() const { return target.size(); }
  double at(std::size_t i, std::size_t j) const { return matrix[i * cols() + j]; }
  double& at(std::size_t i, std::size_t j) { return matrix[i * cols() + j]; }

  double row_sum(std::size_t i) const {
    double s = 0.0;
    for (std::size_t j = 0; j < cols(); ++j) s += at(i, j);
    return s;
  }

  double col_sum(std::size_t j) const {
    double s = 0.0;
    for (std::size_t i = 0; i < rows(); ++i) s += at(i, j);
    return s;
  }

  /// Largest absolute deviation of any row or column sum from its marginal.
  double marginal_violation() const {
    double v = 0.0;
    for (std::size_t i = 0; i < rows(); ++i) v = std::max(v, std::abs(row_sum(i) - source[i].weight));
    for (std::size_t j = 0; j < cols(); ++j) v = std::max(v, std::abs(col_sum(j) - target[j].weight));
    return v;
  }

  /// (sum_ij G_ij |x_i - y_j|^p)^(1/p)
  double cost(double p) const {
    double c = 0.0;
    for (std::size_t i = 0; i < rows(); ++i)
      for (std::size_t j = 0; j < cols(); ++j) {
        const double g = at(i, j);
        if (g != 0.0) c += g * std::pow(std::abs(source[i].location - target[j].location), p);
      }
    return std::pow(c, 1.0 / p);
  }
};

struct PlanResult {
  double cost;
  TransportPlan plan;
};

inline void check_exponent(double p) {
  if (!(p >= 1.0) || !std::isfinite(p)) throw ConfigError("transport exponent p must be >= 1");
}

/// One nonzero entry of a monotone coupling.
struct PlanEntry {
  std::size_t row, col;
  double mass;
};

/// Nonzero entries of the north-west-corner coupling, in row-major order
/// (at most rows + cols - 1 of them).
inline std::vector<PlanEntry> monotone_coupling(std::span<const Atom> source, std::span<const Atom> target) {
  std::vector<PlanEntry> out;
  out.reserve(source.size() + target.size());
  std::size_t i = 0, j = 0;
  double left_src = source[0].weight;
  double left_tgt = target[0].weight;
  while (i < source.size() && j < target.size()) {
    const double mass = std::min(left_src, left_tgt);
    if (mass > 0.0) out.push_back({i, j, mass});
    left_src -= mass;
    left_tgt -= mass;
    if (left_src <= left_tgt) {
      if (++i < source.size()) left_src = source[i].weight;
    } else {
      if (++j < target.size()) left_tgt = target[j].weight;
    }
  }
  // Round-off leftovers (totals agree only to ~1e-9) go to the last atom.
  for (; i < source.size(); ++i, left_src = i < source.size() ? source[i].weight : 0.0)
    if (left_src > 0.0) out.push_back({i, target.size() - 1, left_src});
  for (; j < target.size(); ++j, left_tgt = j < target.size() ? target[j].weight : 0.0)
    if (left_tgt > 0.0) out.push_back({source.size() - 1, j, left_tgt});
  return out;
}

/// North-west-corner coupling of the sorted atoms; optimal in 1-D for
/// convex ground costs |x - y|^p, p >= 1.
inline PlanResult exact_plan(const OptimalityProfile& source, const OptimalityProfile& target, double p) {
  check_exponent(p);
  TransportPlan plan{source.atoms(), target.atoms(), {}};
  plan.matrix.assign(plan.rows() * plan.cols(), 0.0);
  for (const auto& e : monotone_coupling(plan.source, plan.target)) plan.at(e.row, e.col) += e.mass;
  return {plan.cost(p), std::move(plan)};
}

/// Exact W_p distance between two profiles.
inline double wasserstein(const OptimalityProfile& a, const OptimalityProfile& b, double p) {
  return exact_plan(a, b, p).cost;
}

struct SinkhornOptions {
  int max_iters = 10'000;
  double tol = 1e-6;
  /// Largest n + m for which stalled final stages switch to Newton steps on
  /// the dual (dense solve); 0 disables them.
  std::size_t newton_max_atoms = 400;
};

namespace detail {

inline double log_sum_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

/// Projects a near-feasible plan onto the transport polytope (row scale-down,
/// column scale-down, then a rank-one top-up of the remaining deficits).
inline void round_to_marginals(TransportPlan& plan) {
  const std::size_t n = plan.rows(), m = plan.cols();
  for (std::size_t i = 0; i < n; ++i) {
    const double r = plan.row_sum(i);
    if (r > plan.source[i].weight) {
      const double s = plan.source[i].weight / r;
      for (std::size_t j = 0; j < m; ++j) plan.at(i, j) *= s;
    }
  }
  for (std::size_t j = 0; j < m; ++j) {
    const double c = plan.col_sum(j);
    if (c > plan.target[j].weight) {
      const double s = plan.target[j].weight / c;
      for (std::size_t i = 0; i < n; ++i) plan.at(i, j) *= s;
    }
  }
  std::vector<double> err_r(n), err_c(m);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    err_r[i] = std::max(0.0, plan.source[i].weight - plan.row_sum(i));
    total += err_r[i];
  }
  for (std::size_t j = 0; j < m; ++j) err_c[j] = std::max(0.0, plan.target[j].weight - plan.col_sum(j));
  if (total > 0.0)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) plan.at(i, j) += err_r[i] * err_c[j] / total;
}

/// Damped Newton iterations on the entropic dual (Sinkhorn-Newton). The dual
/// sum a_i f_i + sum b_j g_j - eps sum_ij exp((f_i + g_j - C_ij) / eps) is
/// concave, so the Newton direction is an ascent direction and an Armijo
/// backtracking search on it always makes progress. g is pinned at its last
/// entry to remove the constant shift. Leaves the iterate with the smallest
/// L1 marginal residual in (f, g) and returns whether it is below `target`.
inline bool newton_polish(std::vector<double>& f, std::vector<double>& g, const std::vector<double>& cost,
                          const TransportPlan& marginals, double eps, double target, int max_steps = 60) {
  const std::size_t n = f.size(), m = g.size(), k = n + m - 1;
  std::vector<double> kernel(n * m), row(n), col(m);
  double residual = 0.0;
  // Fills kernel/row/col and `residual`, returns the dual objective.
  auto evaluate = [&](const std::vector<double>& ff, const std::vector<double>& gg) {
    std::fill(row.begin(), row.end(), 0.0);
    std::fill(col.begin(), col.end(), 0.0);
    double mass = 0.0, linear = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const double v = std::exp((ff[i] + gg[j] - cost[i * m + j]) / eps);
        kernel[i * m + j] = v;
        row[i] += v;
        col[j] += v;
        mass += v;
      }
    residual = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      residual += std::abs(row[i] - marginals.source[i].weight);
      linear += marginals.source[i].weight * ff[i];
    }
    for (std::size_t j = 0; j < m; ++j) {
      residual += std::abs(col[j] - marginals.target[j].weight);
      linear += marginals.target[j].weight * gg[j];
    }
    const double dual = linear - eps * mass;
    return std::isfinite(dual) ? dual : -std::numeric_limits<double>::infinity();
  };

  double dual = evaluate(f, g);
  std::vector<double> f_best = f, g_best = g;
  double best = residual;
  auto finish = [&] {
    f = f_best;
    g = g_best;
    return best <= target;
  };
  std::vector<double> a(k * (k + 1)), step(k), grad(k), f_try(n), g_try(m);
  for (int it = 0; it < max_steps && residual > target; ++it) {
    // Augmented system [J | grad], J = [[diag(row), K], [K^T, diag(col)]] / eps
    // restricted to (f, g_0..g_{m-2}); grad is the dual gradient.
    std::fill(a.begin(), a.end(), 0.0);
    auto at = [&](std::size_t r, std::size_t c) -> double& { return a[r * (k + 1) + c]; };
    for (std::size_t i = 0; i < n; ++i) {
      at(i, i) = row[i] / eps;
      for (std::size_t j = 0; j + 1 < m; ++j) at(i, n + j) = at(n + j, i) = kernel[i * m + j] / eps;
      grad[i] = at(i, k) = marginals.source[i].weight - row[i];
    }
    for (std::size_t j = 0; j + 1 < m; ++j) {
      at(n + j, n + j) = col[j] / eps;
      grad[n + j] = at(n + j, k) = marginals.target[j].weight - col[j];
    }
    // Gaussian elimination with partial pivoting.
    for (std::size_t c = 0; c < k; ++c) {
      std::size_t piv = c;
      for (std::size_t r = c + 1; r < k; ++r)
        if (std::abs(at(r, c)) > std::abs(at(piv, c))) piv = r;
      if (!(std::abs(at(piv, c)) > 0.0)) return finish();
      if (piv != c)
        for (std::size_t q = c; q <= k; ++q) std::swap(at(c, q), at(piv, q));
      for (std::size_t r = c + 1; r < k; ++r) {
        const double factor = at(r, c) / at(c, c);
        if (factor == 0.0) continue;
        for (std::size_t q = c; q <= k; ++q) at(r, q) -= factor * at(c, q);
      }
    }
    for (std::size_t c = k; c-- > 0;) {
      double v = at(c, k);
      for (std::size_t q = c + 1; q < k; ++q) v -= at(c, q) * step[q];
      step[c] = v / at(c, c);
    }
    double slope = 0.0;
    for (std::size_t q = 0; q < k; ++q) slope += grad[q] * step[q];
    if (!(slope > 0.0)) return finish();
    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 40 && !accepted; ++ls, alpha *= 0.5) {
      for (std::size_t i = 0; i < n; ++i) f_try[i] = f[i] + alpha * step[i];
      for (std::size_t j = 0; j + 1 < m; ++j) g_try[j] = g[j] + alpha * step[n + j];
      g_try[m - 1] = g[m - 1];
      const double d = evaluate(f_try, g_try);
      if (d >= dual + 1e-4 * alpha * slope) {
        f = f_try;
        g = g_try;
        dual = d;
        accepted = true;
        if (residual < best) {
          best = residual;
          f_best = f;
          g_best = g;
        }
      }
    }
    if (!accepted) break;
  }
  return finish();
}

}  // namespace detail

/// Entropy-regularized plan via log-domain Sinkhorn with epsilon scaling.
///
/// `lambda` is in units of return values: the regularization strength on the
/// cost matrix |x - y|^p is lambda * spread^(p-1), where spread is the range
/// of all atom locations. The converged plan is rounded onto the exact
/// marginals; the reported cost is the unregularized W_p cost of that plan.
inline PlanResult sinkhorn_plan(const OptimalityProfile& source, const OptimalityProfile& target, double p,
                                double lambda, SinkhornOptions opts = {}) {
  check_exponent(p);
  if (!(lambda > 0.0)) throw ConfigError("sinkhorn_plan: lambda must be positive");
  TransportPlan plan{source.atoms(), target.atoms(), {}};
  const std::size_t n = plan.rows(), m = plan.cols();
  plan.matrix.assign(n * m, 0.0);

  const double lo = std::min(source.min(), target.min());
  const double hi = std::max(source.max(), target.max());
  const double spread = hi - lo;
  if (!(spread > 0.0)) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) plan.at(i, j) = plan.source[i].weight * plan.target[j].weight;
    detail::round_to_marginals(plan);
    return {0.0, std::move(plan)};
  }

  std::vector<double> cost(n * m);
  double max_cost = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      cost[i * m + j] = std::pow(std::abs(plan.source[i].location - plan.target[j].location), p);
      max_cost = std::max(max_cost, cost[i * m + j]);
    }
  const double eps_final = lambda * std::pow(spread, p - 1.0);

  std::vector<double> log_a(n), log_b(m);
  for (std::size_t i = 0; i < n; ++i) log_a[i] = std::log(plan.source[i].weight);
  for (std::size_t j = 0; j < m; ++j) log_b[j] = std::log(plan.target[j].weight);

  std::vector<double> f(n, 0.0), g(m, 0.0), buf(std::max(n, m));
  auto row_violation = [&](double eps) {
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) buf[j] = (f[i] + g[j] - cost[i * m + j]) / eps;
      const double r = std::exp(detail::log_sum_exp(std::span<const double>(buf.data(), m)));
      v += std::abs(r - plan.source[i].weight);
    }
    return v;
  };

  double eps = std::max(eps_final, max_cost);
  int iters = 0;
  double violation = std::numeric_limits<double>::infinity();
  while (true) {
    const bool last_stage = eps <= eps_final;
    const double stage_tol = last_stage ? opts.tol : std::max(opts.tol, 1e-3);
    violation = std::numeric_limits<double>::infinity();
    const int stage_start = iters;
    while (iters < opts.max_iters) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) buf[j] = (g[j] - cost[i * m + j]) / eps;
        f[i] = eps * (log_a[i] - detail::log_sum_exp(std::span<const double>(buf.data(), m)));
      }
      for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t i = 0; i < n; ++i) buf[i] = (f[i] - cost[i * m + j]) / eps;
        g[j] = eps * (log_b[j] - detail::log_sum_exp(std::span<const double>(buf.data(), n)));
      }
      ++iters;
      if (iters % 5 == 0 || iters == opts.max_iters) {
        violation = row_violation(eps);
        if (!std::isfinite(violation)) throw NumericalError("sinkhorn_plan: non-finite potentials", violation);
        if (violation <= stage_tol) break;
        // Plain sweeps crawl on near-degenerate plans; a few Newton steps
        // on the dual finish the job for small problems.
        if ((iters - stage_start) % 200 == 0 && n + m <= opts.newton_max_atoms &&
            detail::newton_polish(f, g, cost, plan, eps, 0.1 * stage_tol)) {
          violation = row_violation(eps);
          if (violation <= stage_tol) break;
        }
      }
    }
    if (violation > stage_tol) {
      throw NumericalError("sinkhorn_plan: no convergence after " + std::to_string(iters) +
                               " iterations, marginal residual " + std::to_string(violation),
                           violation);
    }
    if (last_stage) break;
    eps = std::max(eps_final, eps * 0.25);
  }

  // Small problems get polished well past `tol`, so the reported cost
  // reflects the regularization rather than the stopping rule.
  if (n + m <= opts.newton_max_atoms) detail::newton_polish(f, g, cost, plan, eps, 1e-14);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) plan.at(i, j) = std::exp((f[i] + g[j] - cost[i * m + j]) / eps);
  detail::round_to_marginals(plan);
  return {plan.cost(p), std::move(plan)};
}

/// Draws, for each source atom index, a target location with probability
/// proportional to the plan row.
inline std::vector<double> sample_targets(const TransportPlan& plan, std::span<const std::size_t> source_indices,
                                          Rng& rng) {
  std::vector<double> out;
  out.reserve(source_indices.size());
  for (std::size_t i : source_indices) {
    if (i >= plan.rows()) throw ConfigError("sample_targets: source index out of range");
    std::span<const double> row(plan.matrix.data() + i * plan.cols(), plan.cols());
    double mass = 0.0;
    for (double g : row) mass += g;
    if (!(mass > 0.0)) throw ConfigError("sample_targets: zero row mass for source atom " + std::to_string(i));
    out.push_back(plan.target[sample_categorical(rng, row)].location);
  }
  return out;
}

inline std::vector<double> sample_targets(const TransportPlan& plan, std::span<const std::size_t> source_indices,
                                          std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return sample_targets(plan, source_indices, rng);
}

struct OtLossResult {
  double loss;
  std::vector<double> targets;  // y_tgt,j aligned with the batch
  double plan_cost;             // W_p cost of the plan between the batch profile and the target
};

/// Batch profile of `returns` plus, for each element, the index of its atom.
struct BatchProfile {
  OptimalityProfile profile;
  std::vector<std::size_t> atom_of;
};

inline BatchProfile batch_profile(std::span<const double> returns, int n_bins) {
  BatchProfile out{histogram_profile(returns, n_bins), {}};
  const auto& atoms = out.profile.atoms();
  out.atom_of.reserve(returns.size());
  if (n_bins <= 0) {
    for (double y : returns) {
      auto it = std::lower_bound(atoms.begin(), atoms.end(), y,
                                 [](const Atom& a, double v) { return a.location < v && !same_location(a.location, v); });
      out.atom_of.push_back(static_cast<std::size_t>(it - atoms.begin()));
    }
    return out;
  }
  const auto [lo_it, hi_it] = std::minmax_element(returns.begin(), returns.end());
  if (!(*hi_it > *lo_it)) {
    out.atom_of.assign(returns.size(), 0);
    return out;
  }
  // Map occupied bins to their (compacted) atom index.
  std::vector<std::size_t> bin_to_atom(static_cast<std::size_t>(n_bins), 0);
  std::vector<bool> used(static_cast<std::size_t>(n_bins), false);
  for (double y : returns) used[static_cast<std::size_t>(histogram_bin(y, *lo_it, *hi_it, n_bins))] = true;
  std::size_t next = 0;
  for (int b = 0; b < n_bins; ++b)
    if (used[static_cast<std::size_t>(b)]) bin_to_atom[static_cast<std::size_t>(b)] = next++;
  for (double y : returns)
    out.atom_of.push_back(bin_to_atom[static_cast<std::size_t>(histogram_bin(y, *lo_it, *hi_it, n_bins))]);
  return out;
}

/// Minibatch transport loss from precomputed batch returns.
///
/// Builds the batch profile, couples it to `target` (exact plan for
/// lambda = 0, Sinkhorn otherwise), samples one target per element from its
/// atom's plan row, and returns (sum_j |y_j - y_tgt,j|^p)^(1/p).
inline OtLossResult ot_loss_from_returns(std::span<const double> returns, const OptimalityProfile& target, double p,
                                         double lambda, int n_bins, Rng& rng, SinkhornOptions opts = {}) {
  if (returns.empty()) throw ConfigError("ot_loss: empty batch");
  check_exponent(p);
  if (lambda < 0.0) throw ConfigError("ot_loss: lambda must be non-negative");
  for (double y : returns)
    if (!std::isfinite(y)) throw NumericalError("ot_loss: non-finite batch return");
  const BatchProfile bp = batch_profile(returns, n_bins);
  // Visit elements grouped by atom: the draws and the summation order then
  // depend only on the batch profile, not on which element carries which
  // return, so relabeling states with equal occupancy changes nothing.
  std::vector<std::size_t> order(returns.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return bp.atom_of[a] < bp.atom_of[b]; });
  OtLossResult out{0.0, std::vector<double>(returns.size(), 0.0), 0.0};
  if (lambda == 0.0) {
    // Sparse path: the monotone plan has few nonzeros, so large batches
    // never materialize the dense matrix.
    const auto& src = bp.profile.atoms();
    const auto& tgt = target.atoms();
    const auto entries = monotone_coupling(src, tgt);
    std::vector<std::size_t> row_begin(src.size() + 1, entries.size());
    for (std::size_t k = entries.size(); k-- > 0;) row_begin[entries[k].row] = k;
    for (std::size_t i = src.size(); i-- > 0;) row_begin[i] = std::min(row_begin[i], row_begin[i + 1]);
    double cost = 0.0;
    for (const auto& e : entries) cost += e.mass * std::pow(std::abs(src[e.row].location - tgt[e.col].location), p);
    out.plan_cost = std::pow(cost, 1.0 / p);
    std::vector<double> row;
    for (std::size_t j : order) {
      const std::size_t a = bp.atom_of[j];
      row.clear();
      for (std::size_t k = row_begin[a]; k < row_begin[a + 1]; ++k) row.push_back(entries[k].mass);
      out.targets[j] = tgt[entries[row_begin[a] + sample_categorical(rng, row)].col].location;
    }
  } else {
    const PlanResult pr = sinkhorn_plan(bp.profile, target, p, lambda, opts);
    std::vector<std::size_t> atoms_in_order;
    atoms_in_order.reserve(order.size());
    for (std::size_t j : order) atoms_in_order.push_back(bp.atom_of[j]);
    const auto drawn = sample_targets(pr.plan, atoms_in_order, rng);
    for (std::size_t k = 0; k < order.size(); ++k) out.targets[order[k]] = drawn[k];
    out.plan_cost = pr.cost;
  }
  double sum = 0.0;
  for (std::size_t j : order) sum += std::pow(std::abs(returns[j] - out.targets[j]), p);
  out.loss = std::pow(sum, 1.0 / p);
  return out;
}

/// Transport loss of a batch of suffixes under a state reward vector.
inline OtLossResult ot_loss(std::span<const double> reward, std::span<const Trajectory> batch,
                            const OptimalityProfile& target, double gamma, double p, double lambda, int n_bins,
                            std::uint64_t seed) {
  if (batch.empty()) throw ConfigError("ot_loss: empty batch");
  std::vector<double> returns;
  returns.reserve(batch.size());
  for (const auto& s : batch) returns.push_back(traj_return(reward, s, gamma));
  Rng rng = make_rng(seed);
  return ot_loss_from_returns(returns, target, p, lambda, n_bins, rng);
}

/// Dense CSV: header row of target locations, then one row per source atom
/// led by its location.
inline void write_plan_csv(std::ostream& os, const TransportPlan& plan) {
  os.precision(17);
  os << "source\\target";
  for (const auto& t : plan.target) os << ',' << t.location;
  os << '\n';
  for (std::size_t i = 0; i < plan.rows(); ++i) {
    os << plan.source[i].location;
    for (std::size_t j = 0; j < plan.cols(); ++j) os << ',' << plan.at(i, j);
    os << '\n';
  }
}

}  // namespace optprof
