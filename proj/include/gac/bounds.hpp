#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gac/channel.hpp"
#include "gac/divergence.hpp"
#include "gac/group.hpp"

// Orbit-aware estimation error: MSE against the best-aligned orbit point,
// Chapman-Robbins style lower bounds on that MSE driven by a witness model,
// and sweeps of those bounds over noise grids.

namespace gac {

struct MseReport {
  double mse = 0.0;       // mean aligned squared error
  double bias_sq = 0.0;   // |mean aligned estimate - x|^2
  double cov_trace = 0.0; // trace of the aligned estimates' covariance
  std::int64_t count = 0;
};

/// Aligned mean squared error of a set of estimates against the truth x:
/// each estimate is first mapped to its best orbit representative, then
/// mse = bias_sq + cov_trace holds by construction (population covariance).
MseReport mse_against_orbit(const std::vector<Signal>& estimates, const Signal& x,
                            const FiniteGroup& group);

enum class BoundForm { exact_chi2, leading_order, cr_limit };

struct BoundReport {
  double mse_lower = 0.0;
  Signal witness_x;
  GroupDistribution witness_theta;
  int d = 0;            // first distinguishing moment order (q for cr_limit)
  double lambda = 0.0;  // N / sigma^{2d}
  double chi2_n = 0.0;  // N-sample chi-square (or lambda * Q for cr_limit)
  double k_d = 0.0;     // K^d moment distance (Q^q for cr_limit)
  BoundForm form = BoundForm::leading_order;
  std::string flag; // "underflow", "no-information", or divergence flags
};

/// Chapman-Robbins lower bound on the aligned MSE at (x, theta), driven by a
/// witness (x_w, theta_w): |phi_x(x_w) - x|^2 / chi2_N, with chi2_N either
/// the exact N-sample chi-square (quadrature or Monte Carlo single-sample
/// value tensorized) or the small-noise leading order exp(lambda K^d) - 1.
/// The division is done in log space; results below 1e-300 are reported as 0
/// with flag "underflow". A witness observationally equivalent to the truth
/// (zero aligned distance and no distinguishing moment order) is an error.
BoundReport chapman_robbins_orbit(const Signal& witness_x, const GroupDistribution& witness_theta,
                                  const Signal& x, const GroupDistribution& theta,
                                  const Projection& projection, double sigma,
                                  std::int64_t n_samples,
                                  DivergenceMethod chi2_method = DivergenceMethod::leading_order,
                                  std::int64_t mc_budget = 200000, std::uint64_t seed = 0,
                                  int threads = 1);

/// Limiting (small-perturbation) form of the bound along the path toward
/// (x_tilde, theta_tilde): |x_tilde - x|^2 / (lambda_N^q * Q^q) with q the
/// first order with nonzero directional derivative Q^n. A zero direction
/// (x_tilde = x and theta_tilde = theta) is an error.
BoundReport cr_limit_bound(const Signal& x, const GroupDistribution& theta,
                           const Signal& x_tilde, const GroupDistribution& theta_tilde,
                           const Projection& projection, double sigma, std::int64_t n_samples);

struct SweepPoint {
  double sigma = 1.0;
  std::int64_t n_samples = 0;
};

struct BoundSweepRow {
  SweepPoint point;
  int witness = -1; // witness index, or -1 for the per-point supremum row
  BoundReport report;
};

/// Evaluate chapman_robbins_orbit on a grid of (sigma, N) points for each
/// witness, appending per point a supremum row (largest bound over witnesses
/// with usable values). Per-point errors become flagged rows instead of
/// aborting the sweep.
std::vector<BoundSweepRow> bound_sweep(const Signal& x, const GroupDistribution& theta,
                                       const Projection& projection,
                                       const std::vector<std::pair<Signal, GroupDistribution>>& witnesses,
                                       const std::vector<SweepPoint>& grid,
                                       DivergenceMethod chi2_method = DivergenceMethod::leading_order,
                                       std::int64_t mc_budget = 200000, std::uint64_t seed = 0,
                                       int threads = 1);

} // namespace gac
