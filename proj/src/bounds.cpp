#include "gac/bounds.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "gac/moments.hpp"

namespace gac {

MseReport mse_against_orbit(const std::vector<Signal>& estimates, const Signal& x,
                            const FiniteGroup& group) {
  if (estimates.empty()) throw std::invalid_argument("mse_against_orbit: no estimates");
  const int L = int(x.size());
  MseReport rep;
  rep.count = std::int64_t(estimates.size());
  Signal mean = Signal::Zero(L);
  double sq = 0.0;
  std::vector<Signal> aligned;
  aligned.reserve(estimates.size());
  for (const Signal& e : estimates) {
    Alignment a = best_alignment(e, x, group);
    sq += a.sq_dist;
    mean += a.signal;
    aligned.push_back(std::move(a.signal));
  }
  mean /= double(estimates.size());
  rep.mse = sq / double(estimates.size());
  rep.bias_sq = (mean - x).squaredNorm();
  double tr = 0.0;
  for (const Signal& a : aligned) tr += (a - mean).squaredNorm();
  rep.cov_trace = tr / double(estimates.size());
  return rep;
}

namespace {

constexpr double kTinyBound = 1e-300;

// Log-space division num / denom for nonnegative num and denom possibly
// huge or infinite; flags underflow below kTinyBound.
void finish_bound(BoundReport& rep, double numerator, double log_denom) {
  if (numerator <= 0.0) {
    rep.mse_lower = 0.0;
    return;
  }
  const double log_bound = std::log(numerator) - log_denom;
  if (log_bound < std::log(kTinyBound)) {
    rep.mse_lower = 0.0;
    if (!rep.flag.empty()) rep.flag += ";";
    rep.flag += "underflow";
    return;
  }
  rep.mse_lower = std::exp(log_bound);
}

int first_distinguishing_order(const Signal& x_a, const GroupDistribution& t_a,
                               const Signal& x_b, const GroupDistribution& t_b,
                               const Projection& projection, double* k_d, int max_order = 8) {
  for (int n = 1; n <= max_order; ++n) {
    const MomentTensor A = exact_moment(x_a, t_a, projection, n);
    const MomentTensor B = exact_moment(x_b, t_b, projection, n);
    const double raw = tensor_sq_dist(A, B);
    double scale = 0.0;
    for (std::size_t f = 0; f < A.size(); ++f) scale += A[f] * A[f] + B[f] * B[f];
    if (raw > 1e-12 * (1.0 + scale)) {
      double fact = 1.0;
      for (int i = 2; i <= n; ++i) fact *= double(i);
      if (k_d) *k_d = raw / fact;
      return n;
    }
  }
  return 0;
}

} // namespace

BoundReport chapman_robbins_orbit(const Signal& witness_x, const GroupDistribution& witness_theta,
                                  const Signal& x, const GroupDistribution& theta,
                                  const Projection& projection, double sigma,
                                  std::int64_t n_samples, DivergenceMethod chi2_method,
                                  std::int64_t mc_budget, std::uint64_t seed, int threads) {
  theta.validate();
  witness_theta.validate();
  if (!(sigma > 0.0)) throw std::invalid_argument("chapman_robbins_orbit: sigma must be positive");
  if (n_samples < 1) throw std::invalid_argument("chapman_robbins_orbit: need n_samples >= 1");

  BoundReport rep;
  rep.witness_x = witness_x;
  rep.witness_theta = witness_theta;

  const Alignment align = best_alignment(witness_x, x, *theta.group);
  const double numerator = align.sq_dist;

  double k_d = 0.0;
  const int d = first_distinguishing_order(witness_x, witness_theta, x, theta, projection, &k_d);
  if (d == 0) {
    if (numerator <= 1e-24)
      throw std::invalid_argument(
          "chapman_robbins_orbit: witness observationally equivalent to the truth "
          "(zero aligned distance and zero divergence)");
    // Distinguishable in no probed moment order yet displaced: no usable
    // information rate; report an uninformative zero-denominator outcome.
    rep.flag = "no-information";
    rep.mse_lower = std::numeric_limits<double>::infinity();
    return rep;
  }
  rep.d = d;
  rep.k_d = k_d;
  rep.lambda = double(n_samples) / std::pow(sigma, 2.0 * d);

  switch (chi2_method) {
    case DivergenceMethod::leading_order: {
      rep.form = BoundForm::leading_order;
      // chi2_N ~ exp(lambda K^d) - 1; log-space denominator.
      const double e = rep.lambda * k_d;
      rep.chi2_n = std::expm1(e); // +inf for large e is fine for reporting
      if (e <= 0.0) {
        rep.flag = "no-information";
        rep.mse_lower = std::numeric_limits<double>::infinity();
        return rep;
      }
      const double log_denom = e > 700.0 ? e : std::log(std::expm1(e));
      finish_bound(rep, numerator, log_denom);
      return rep;
    }
    case DivergenceMethod::quadrature:
    case DivergenceMethod::monte_carlo: {
      rep.form = BoundForm::exact_chi2;
      ChannelModel wa{witness_x, witness_theta, projection, sigma};
      ChannelModel tb{x, theta, projection, sigma};
      const DivergenceEstimate one =
          chi2_divergence(wa, tb, chi2_method, mc_budget, seed, threads);
      if (!one.flag.empty()) rep.flag = one.flag;
      if (std::isnan(one.value)) {
        rep.mse_lower = std::numeric_limits<double>::quiet_NaN();
        rep.chi2_n = std::numeric_limits<double>::quiet_NaN();
        return rep;
      }
      const double log1p_chi = std::log1p(std::max(0.0, one.value));
      const double e = double(n_samples) * log1p_chi;
      rep.chi2_n = std::expm1(e);
      if (one.value <= 0.0) {
        rep.flag = rep.flag.empty() ? "no-information" : rep.flag + ";no-information";
        rep.mse_lower = std::numeric_limits<double>::infinity();
        return rep;
      }
      const double log_denom = e > 700.0 ? e : std::log(std::expm1(e));
      finish_bound(rep, numerator, log_denom);
      return rep;
    }
  }
  throw std::logic_error("chapman_robbins_orbit: unknown chi2 method");
}

BoundReport cr_limit_bound(const Signal& x, const GroupDistribution& theta,
                           const Signal& x_tilde, const GroupDistribution& theta_tilde,
                           const Projection& projection, double sigma,
                           std::int64_t n_samples) {
  theta.validate();
  theta_tilde.validate();
  if (!(sigma > 0.0)) throw std::invalid_argument("cr_limit_bound: sigma must be positive");
  if (n_samples < 1) throw std::invalid_argument("cr_limit_bound: need n_samples >= 1");

  BoundReport rep;
  rep.form = BoundForm::cr_limit;
  rep.witness_x = x_tilde;
  rep.witness_theta = theta_tilde;

  constexpr int kMaxOrder = 8;
  int q = 0;
  double Q = 0.0;
  for (int n = 1; n <= kMaxOrder; ++n) {
    const double qn = directional_q(x, theta, x_tilde, theta_tilde, projection, n);
    if (qn > 1e-14 * (1.0 + x.squaredNorm() + x_tilde.squaredNorm())) {
      q = n;
      Q = qn;
      break;
    }
  }
  if (q == 0)
    throw std::invalid_argument("cr_limit_bound: zero direction (no moment order responds)");

  rep.d = q;
  rep.k_d = Q;
  rep.lambda = double(n_samples) / std::pow(sigma, 2.0 * q);
  const double denom = rep.lambda * Q;
  rep.chi2_n = denom;
  // Numerator is the raw squared direction length in signal space.
  const double numerator = (x_tilde - x).squaredNorm();
  if (denom <= 0.0 || !std::isfinite(denom)) {
    rep.flag = "no-information";
    rep.mse_lower = std::isfinite(denom) ? std::numeric_limits<double>::infinity() : 0.0;
    return rep;
  }
  finish_bound(rep, numerator, std::log(denom));
  return rep;
}

std::vector<BoundSweepRow> bound_sweep(const Signal& x, const GroupDistribution& theta,
                                       const Projection& projection,
                                       const std::vector<std::pair<Signal, GroupDistribution>>& witnesses,
                                       const std::vector<SweepPoint>& grid,
                                       DivergenceMethod chi2_method, std::int64_t mc_budget,
                                       std::uint64_t seed, int threads) {
  if (witnesses.empty()) throw std::invalid_argument("bound_sweep: no witnesses");
  std::vector<BoundSweepRow> rows;
  rows.reserve(grid.size() * (witnesses.size() + 1));
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const SweepPoint& pt = grid[p];
    int best = -1;
    double best_val = -std::numeric_limits<double>::infinity();
    for (std::size_t w = 0; w < witnesses.size(); ++w) {
      BoundSweepRow row;
      row.point = pt;
      row.witness = int(w);
      try {
        row.report = chapman_robbins_orbit(witnesses[w].first, witnesses[w].second, x, theta,
                                           projection, pt.sigma, pt.n_samples, chi2_method,
                                           mc_budget, seed + w, threads);
        const double v = row.report.mse_lower;
        if (std::isfinite(v) && row.report.flag.empty() && v > best_val) {
          best_val = v;
          best = int(w);
        }
      } catch (const std::invalid_argument& e) {
        row.report.flag = std::string("error: ") + e.what();
        row.report.mse_lower = std::numeric_limits<double>::quiet_NaN();
      }
      rows.push_back(std::move(row));
    }
    BoundSweepRow sup;
    sup.point = pt;
    sup.witness = -1;
    if (best >= 0) {
      sup.report = rows[rows.size() - witnesses.size() + std::size_t(best)].report;
    } else {
      sup.report.flag = "no-usable-witness";
      sup.report.mse_lower = std::numeric_limits<double>::quiet_NaN();
    }
    rows.push_back(std::move(sup));
  }
  return rows;
}

} // namespace gac
